//! r-variation norms of sequences and metric-valued curves.
//!
//! The default solver runs the `best[j] = max_{i<j} best[i] + d(i,j)^r` recursion over
//! prefix values, which are nondecreasing in `j`. That monotonicity lets whole dyadic
//! blocks of candidate predecessors be discarded with a triangle-inequality bound, so
//! the result is the exact DP maximum while typical inputs cost far less than `O(N²)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exponent::Exponent;

/// Hard cap for the exhaustive oracle.
pub const BRUTEFORCE_MAX_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationParams {
    pub r: Exponent,
}

impl VariationParams {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_nan() || r < 1.0 {
            return invalid(format!("variation exponent must be at least 1, got {r}"));
        }
        Ok(VariationParams { r: Exponent::from_f64(r) })
    }

    pub fn infinite() -> Self {
        VariationParams { r: Exponent::Infinite }
    }

    pub fn r(&self) -> f64 {
        self.r.value()
    }

    pub fn validate(&self) -> Result<()> {
        VariationParams::new(self.r.value()).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedSequence {
    values: Vec<Complex64>,
    indices: Vec<i64>,
}

impl IndexedSequence {
    pub fn new(values: Vec<Complex64>, indices: Vec<i64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("sequence must be non-empty");
        }
        if values.len() != indices.len() {
            return invalid("values and indices must have equal length");
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("indices must be strictly increasing");
        }
        Ok(IndexedSequence { values, indices })
    }

    /// Values indexed by `0, 1, 2, …`.
    pub fn from_values(values: Vec<Complex64>) -> Result<Self> {
        let indices = (0..values.len() as i64).collect();
        IndexedSequence::new(values, indices)
    }

    pub fn from_reals(values: &[f64]) -> Result<Self> {
        IndexedSequence::from_values(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[inline]
pub(crate) fn pow_r(x: f64, r: f64, int_r: Option<i32>) -> f64 {
    match int_r {
        Some(k) => x.powi(k),
        None => x.powf(r),
    }
}

pub(crate) fn integer_exponent(r: f64) -> Option<i32> {
    if r.fract() == 0.0 && r <= 16.0 {
        Some(r as i32)
    } else {
        None
    }
}

pub fn variation_norm(seq: &IndexedSequence, vp: VariationParams) -> f64 {
    complex_variation(seq.values(), vp)
}

pub fn complex_variation(values: &[Complex64], vp: VariationParams) -> f64 {
    let r: std::result::Result<f64, std::convert::Infallible> =
        pruned_variation(values.len(), |i, j| Ok((values[j] - values[i]).norm()), vp);
    match r {
        Ok(v) => v,
        Err(e) => match e {},
    }
}

/// Exact variation of a real sequence; only turning points can carry an optimal partition.
pub fn real_variation(values: &[f64], vp: VariationParams) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    if vp.r.is_infinite() {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        return hi - lo;
    }
    let pts = turning_points(values);
    let r: std::result::Result<f64, std::convert::Infallible> =
        pruned_variation(pts.len(), |i, j| Ok((pts[j] - pts[i]).abs()), vp);
    match r {
        Ok(v) => v,
        Err(e) => match e {},
    }
}

/// Endpoints plus strict local extrema, after merging runs of equal values.
pub fn turning_points(values: &[f64]) -> Vec<f64> {
    let mut dedup: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if dedup.last() != Some(&v) {
            dedup.push(v);
        }
    }
    if dedup.len() <= 2 {
        return dedup;
    }
    let mut out = Vec::with_capacity(dedup.len());
    out.push(dedup[0]);
    for w in dedup.windows(3) {
        if (w[1] - w[0]) * (w[2] - w[1]) < 0.0 {
            out.push(w[1]);
        }
    }
    out.push(*dedup.last().unwrap());
    out
}

pub fn metric_variation<P, E>(
    points: &[P],
    mut dist: impl FnMut(&P, &P) -> std::result::Result<f64, E>,
    vp: VariationParams,
) -> std::result::Result<f64, E> {
    pruned_variation(points.len(), |i, j| dist(&points[i], &points[j]), vp)
}

/// Distance oracle failures surface as [`Error::Oracle`].
pub fn metric_variation_checked<P>(
    points: &[P],
    dist: impl FnMut(&P, &P) -> Result<f64>,
    vp: VariationParams,
) -> Result<f64> {
    if points.is_empty() {
        return invalid("point list must be non-empty");
    }
    metric_variation(points, dist, vp).map_err(|e| match e {
        Error::Oracle(m) => Error::Oracle(m),
        other => Error::Oracle(other.to_string()),
    })
}

fn pruned_variation<E>(
    n: usize,
    mut dist: impl FnMut(usize, usize) -> std::result::Result<f64, E>,
    vp: VariationParams,
) -> std::result::Result<f64, E> {
    if n < 2 {
        return Ok(0.0);
    }
    let r = match vp.r {
        Exponent::Infinite => {
            let mut best = 0.0f64;
            for j in 1..n {
                for i in 0..j {
                    best = best.max(dist(i, j)?);
                }
            }
            return Ok(best);
        }
        Exponent::Finite(r) => r,
    };
    let int_r = integer_exponent(r);
    let levels = usize::BITS - (n - 1).leading_zeros();
    // radius[l][b]: max distance from the first point of block b at level l to the points added so far
    let mut radius: Vec<Vec<f64>> = (0..=levels).map(|l| vec![0.0; (n >> l) + 1]).collect();
    let mut run = vec![0.0f64; n];
    let mut stack: Vec<(u32, usize)> = Vec::with_capacity(2 * levels as usize + 2);
    for j in 0..n {
        for l in 1..=levels {
            let b = j >> l;
            let c = b << l;
            if c != j {
                let d = dist(c, j)?;
                let slot = &mut radius[l as usize][b];
                if d > *slot {
                    *slot = d;
                }
            }
        }
        if j == 0 {
            continue;
        }
        let mut best = run[j - 1] + pow_r(dist(j - 1, j)?, r, int_r);
        stack.clear();
        stack.push((levels, 0));
        while let Some((l, b)) = stack.pop() {
            let start = b << l;
            if start >= j - 1 {
                continue;
            }
            let last = ((b + 1) << l).min(j - 1) - 1;
            if l == 0 {
                let v = run[start] + pow_r(dist(start, j)?, r, int_r);
                if v > best {
                    best = v;
                }
                continue;
            }
            let reach = dist(start, j)? + radius[l as usize][b];
            let bound = run[last] + pow_r(reach, r, int_r);
            if bound * (1.0 + 1e-12) < best {
                continue;
            }
            stack.push((l - 1, 2 * b));
            stack.push((l - 1, 2 * b + 1));
        }
        run[j] = best;
    }
    Ok(run[n - 1].powf(1.0 / r))
}

/// Plain quadratic DP, kept as an independent route for cross-checks.
pub fn variation_norm_quadratic(seq: &IndexedSequence, vp: VariationParams) -> f64 {
    let a = seq.values();
    let n = a.len();
    match vp.r {
        Exponent::Infinite => {
            let mut best = 0.0f64;
            for j in 0..n {
                for i in 0..j {
                    best = best.max((a[j] - a[i]).norm());
                }
            }
            best
        }
        Exponent::Finite(r) => {
            let mut best = vec![0.0f64; n];
            for j in 1..n {
                for i in 0..j {
                    best[j] = best[j].max(best[i] + (a[j] - a[i]).norm().powf(r));
                }
            }
            best.iter().cloned().fold(0.0, f64::max).powf(1.0 / r)
        }
    }
}

pub fn variation_norm_bruteforce(seq: &IndexedSequence, vp: VariationParams) -> Result<f64> {
    let n = seq.len();
    if n > BRUTEFORCE_MAX_LEN {
        return Err(Error::TooLarge(format!("exhaustive search is limited to {BRUTEFORCE_MAX_LEN} entries, got {n}")));
    }
    let a = seq.values();
    let mut best = 0.0f64;
    for mask in 1u32..(1u32 << n) {
        let mut prev: Option<usize> = None;
        let mut acc = 0.0f64;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                if let Some(p) = prev {
                    let d = (a[i] - a[p]).norm();
                    match vp.r {
                        Exponent::Infinite => acc = acc.max(d),
                        Exponent::Finite(r) => acc += d.powf(r),
                    }
                }
                prev = Some(i);
            }
        }
        best = best.max(acc);
    }
    Ok(match vp.r {
        Exponent::Infinite => best,
        Exponent::Finite(r) => best.powf(1.0 / r),
    })
}

/// Partition (positions into the sequence) and Hölder-dual coefficients realizing the norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualLinearization {
    pub partition: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    pub value: f64,
}

pub fn dual_linearization(seq: &IndexedSequence, vp: VariationParams) -> Result<DualLinearization> {
    let r = match vp.r {
        Exponent::Finite(r) if r > 1.0 => r,
        _ => return invalid("dual linearization needs 1 < r < ∞"),
    };
    let a = seq.values();
    let n = a.len();
    let w = |i: usize, j: usize| (a[j] - a[i]).norm().powf(r);
    // best value of a partition ending exactly at j
    let mut end = vec![0.0f64; n];
    for j in 1..n {
        for i in 0..j {
            end[j] = end[j].max(end[i] + w(i, j));
        }
    }
    let total = end.iter().cloned().fold(0.0, f64::max);
    if total <= 0.0 {
        return Err(Error::Degenerate("sequence has zero variation".into()));
    }
    let tol = 1e-12 * total;
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    // fewest points among optimal partitions ending at j
    let mut count = vec![usize::MAX; n];
    for j in 0..n {
        if close(end[j], 0.0) {
            count[j] = 1;
        }
        for i in 0..j {
            if count[i] != usize::MAX && close(end[i] + w(i, j), end[j]) {
                count[j] = count[j].min(count[i] + 1);
            }
        }
    }
    let target = (0..n).filter(|&j| close(end[j], total)).map(|j| count[j]).min().unwrap();
    // can[i]: some optimal minimal-count path continues from i to a terminal
    let mut can = vec![false; n];
    for i in (0..n).rev() {
        if count[i] == usize::MAX {
            continue;
        }
        if count[i] == target && close(end[i], total) {
            can[i] = true;
            continue;
        }
        can[i] = (i + 1..n).any(|j| can[j] && count[j] == count[i] + 1 && close(end[i] + w(i, j), end[j]));
    }
    let mut cur = (0..n).find(|&i| can[i] && count[i] == 1).ok_or_else(|| Error::Postcondition("no optimal start".into()))?;
    let mut partition = vec![cur];
    while !(count[cur] == target && close(end[cur], total)) {
        cur = (cur + 1..n)
            .find(|&j| can[j] && count[j] == count[cur] + 1 && close(end[cur] + w(cur, j), end[j]))
            .ok_or_else(|| Error::Postcondition("broken optimal path".into()))?;
        partition.push(cur);
    }
    let deltas: Vec<Complex64> = partition.windows(2).map(|p| a[p[1]] - a[p[0]]).collect();
    let sum_r: f64 = deltas.iter().map(|d| d.norm().powf(r)).sum();
    let r_dual = r / (r - 1.0);
    let denom = sum_r.powf(1.0 / r_dual);
    let coefficients = deltas
        .iter()
        .map(|d| {
            let m = d.norm();
            if m == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                (d.conj() / m) * m.powf(r - 1.0) / denom
            }
        })
        .collect();
    Ok(DualLinearization { partition, coefficients, value: sum_r.powf(1.0 / r) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64], r: f64) -> f64 {
        variation_norm(&IndexedSequence::from_reals(x).unwrap(), VariationParams::new(r).unwrap())
    }

    #[test]
    fn small_values() {
        assert!((v(&[0.0, 1.0, 0.0], 2.0) - 2f64.sqrt()).abs() < 1e-14);
        assert!((v(&[0.0, 1.0, 2.0, 3.0], 2.0) - 3.0).abs() < 1e-14);
        assert!((v(&[0.0, 1.0, 0.0, 1.0], 1.0) - 3.0).abs() < 1e-14);
        assert_eq!(v(&[2.0; 7], 1.5), 0.0);
        assert_eq!(v(&[5.0], 3.0), 0.0);
    }

    #[test]
    fn bruteforce_rejects_long_input() {
        let s = IndexedSequence::from_reals(&[0.0; 21]).unwrap();
        assert!(matches!(variation_norm_bruteforce(&s, VariationParams::new(2.0).unwrap()), Err(Error::TooLarge(_))));
    }

    #[test]
    fn collinear_metric_points() {
        let pts = [0.0f64, 1.0, 2.0];
        let d = metric_variation(&pts, |a, b| Ok::<f64, ()>((a - b).abs()), VariationParams::new(1.0).unwrap()).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_failure_propagates() {
        let pts = [0.0f64, 1.0, 2.0];
        let out = metric_variation_checked(
            &pts,
            |a, b| if *b > 1.5 { Err(Error::Oracle("unreachable point".into())) } else { Ok((a - b).abs()) },
            VariationParams::new(2.0).unwrap(),
        );
        assert!(matches!(out, Err(Error::Oracle(_))));
    }

    #[test]
    fn dual_three_points() {
        let s = IndexedSequence::from_reals(&[0.0, 1.0, 0.0]).unwrap();
        let d = dual_linearization(&s, VariationParams::new(2.0).unwrap()).unwrap();
        assert_eq!(d.partition, vec![0, 1, 2]);
        let h = 0.5f64.sqrt();
        assert!((d.coefficients[0] - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!((d.coefficients[1] - Complex64::new(-h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dual_two_points() {
        let s = IndexedSequence::from_reals(&[0.0, 2.0]).unwrap();
        let d = dual_linearization(&s, VariationParams::new(3.0).unwrap()).unwrap();
        assert_eq!(d.partition, vec![0, 1]);
        assert!((d.coefficients[0].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dual_prefers_fewest_points() {
        // (0,1,2,3) at r=2: the single jump 0→3 beats every refinement
        let s = IndexedSequence::from_reals(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let d = dual_linearization(&s, VariationParams::new(2.0).unwrap()).unwrap();
        assert_eq!(d.partition, vec![0, 3]);
        // a flat stretch admits several optimal endpoints; the earliest wins
        let s = IndexedSequence::from_reals(&[0.0, 1.0, 1.0, 1.0]).unwrap();
        let d = dual_linearization(&s, VariationParams::new(2.0).unwrap()).unwrap();
        assert_eq!(d.partition, vec![0, 1]);
    }

    #[test]
    fn dual_rejects_bad_input() {
        let s = IndexedSequence::from_reals(&[1.0, 1.0]).unwrap();
        assert!(dual_linearization(&s, VariationParams::new(2.0).unwrap()).is_err());
        let s = IndexedSequence::from_reals(&[0.0, 1.0]).unwrap();
        assert!(dual_linearization(&s, VariationParams::new(1.0).unwrap()).is_err());
        assert!(dual_linearization(&s, VariationParams::infinite()).is_err());
    }

    #[test]
    fn turning_points_keep_extremes() {
        assert_eq!(turning_points(&[0.0, 1.0, 2.0, 2.0, 1.0, 3.0]), vec![0.0, 2.0, 1.0, 3.0]);
        assert_eq!(turning_points(&[1.0, 1.0]), vec![1.0]);
    }

    #[test]
    fn real_path_matches_complex_path() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64).sin() * (i as f64).sqrt()).collect();
        for r in [1.0, 1.3, 2.0, 4.0] {
            let vp = VariationParams::new(r).unwrap();
            let a = real_variation(&x, vp);
            let b = variation_norm_quadratic(&IndexedSequence::from_reals(&x).unwrap(), vp);
            assert!((a - b).abs() <= 1e-12 * b, "r={r}: {a} vs {b}");
        }
    }
}
