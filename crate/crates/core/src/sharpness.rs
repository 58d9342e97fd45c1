//! Alternating Dirichlet indices and the growth of `V^r S f^N` in Lorentz norms.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exponent::Exponent;
use crate::fourier::{dirichlet_value, vallee_poussin};
use crate::grid::{decreasing_rearrangement, linear_fit, lorentz_of_rearranged, LinearFit, LorentzParams};
use crate::varnorm::{real_variation, VariationParams};

pub const MIN_N: usize = 64;
/// Smallest x-grid used by [`growth_experiment`].
pub const MIN_GROWTH_GRID: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSelection {
    pub n: usize,
    pub x: f64,
    /// Largest integer strictly below `N x`.
    pub k_count: usize,
    /// `2K` increasing degrees with `(2n_k+1)x ∈ (1/4+k, 3/4+k)`.
    pub indices: Vec<usize>,
}

pub fn select_indices(n: usize, x: f64) -> Result<IndexSelection> {
    if n < MIN_N {
        return invalid(format!("N must be at least {MIN_N}, got {n}"));
    }
    if !(x >= 8.0 / n as f64 && x <= 0.125) {
        return invalid(format!("x must lie in [8/N, 1/8], got {x}"));
    }
    let nx = n as f64 * x;
    let k_count = (nx.ceil() as usize).saturating_sub(1);
    let mut indices = Vec::with_capacity(2 * k_count);
    for k in 0..2 * k_count {
        let lo = 0.25 + k as f64;
        let mut m = ((lo / x - 1.0) / 2.0).floor().max(0.0) as usize;
        while m > 0 && (2 * m - 1) as f64 * x > lo {
            m -= 1;
        }
        while (2 * m + 1) as f64 * x <= lo {
            m += 1;
        }
        let w = (2 * m + 1) as f64 * x;
        if !(w > lo && w < lo + 0.5) {
            return Err(Error::Postcondition(format!("window {k} holds no admissible degree")));
        }
        if m > n {
            return Err(Error::Postcondition(format!("degree {m} exceeds N = {n}")));
        }
        if let Some(&prev) = indices.last() {
            if m <= prev {
                return Err(Error::Postcondition("selected degrees are not increasing".into()));
            }
        }
        indices.push(m);
    }
    Ok(IndexSelection { n, x, k_count, indices })
}

impl IndexSelection {
    /// Even-position numerators exceed `√2/2`, odd-position ones lie below `-√2/2`.
    pub fn signs_alternate(&self) -> bool {
        let h = 0.5f64.sqrt();
        self.indices.iter().enumerate().all(|(k, &m)| {
            let s = ((2 * m + 1) as f64 * PI * self.x).sin();
            if k % 2 == 0 {
                s > h
            } else {
                s < -h
            }
        })
    }
}

/// `(Σ_j |D_{n_{2j+1}}(x) - D_{n_{2j}}(x)|^r)^{1/r}` over the selected pairs.
pub fn pointwise_lower_bound(n: usize, x: f64, vp: VariationParams) -> Result<f64> {
    vp.validate()?;
    let sel = select_indices(n, x)?;
    let diffs = sel.indices.chunks(2).map(|p| (dirichlet_value(p[1], x) - dirichlet_value(p[0], x)).abs());
    Ok(match vp.r {
        Exponent::Infinite => diffs.fold(0.0, f64::max),
        Exponent::Finite(r) => diffs.map(|d| d.powf(r)).sum::<f64>().powf(1.0 / r),
    })
}

/// `K^{1/r} √2 / sin(πx)`.
pub fn lower_bound_floor(n: usize, x: f64, vp: VariationParams) -> Result<f64> {
    let k = select_indices(n, x)?.k_count as f64;
    let base = 2f64.sqrt() / (PI * x).sin();
    Ok(match vp.r {
        Exponent::Infinite => base,
        Exponent::Finite(r) => k.powf(1.0 / r) * base,
    })
}

/// `x ↦ V^r` of `n ↦ D_n(x)` over `n = 0..=N+1` on the periodic grid `j/grid_count`.
pub fn dirichlet_variation(n: usize, vp: VariationParams, grid_count: usize) -> Vec<f64> {
    let mut seq = vec![0.0f64; n + 2];
    // D_n(1 - x) = D_n(x)
    let half = grid_count / 2;
    let mut out: Vec<f64> = (0..=half)
        .map(|j| {
            let x = j as f64 / grid_count as f64;
            let s = (PI * x).sin();
            if s.abs() < 1e-8 {
                for (m, v) in seq.iter_mut().enumerate() {
                    *v = dirichlet_value(m, x);
                }
            } else {
                // sin((2m+1)πx) by rotation, refreshed periodically to bound drift
                let (step_s, step_c) = (2.0 * PI * x).sin_cos();
                let (mut a_s, mut a_c) = (PI * x).sin_cos();
                for (m, v) in seq.iter_mut().enumerate() {
                    if m % 64 == 0 {
                        let t = (2 * m + 1) as f64 * PI * x;
                        (a_s, a_c) = t.sin_cos();
                    }
                    *v = a_s / s;
                    (a_s, a_c) = (a_s * step_c + a_c * step_s, a_c * step_c - a_s * step_s);
                }
            }
            real_variation(&seq, vp)
        })
        .collect();
    for j in half + 1..grid_count {
        out.push(out[grid_count - j]);
    }
    out.truncate(grid_count);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub grid_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub p: f64,
    pub r: Exponent,
    pub s: Exponent,
    pub rows: Vec<GrowthRow>,
    /// Slope of `log ratio` against `log N`.
    pub fitted_exponent: f64,
    /// `max(1/p - 1/r', 0)`.
    pub target: f64,
    pub abs_err: f64,
    /// Fit of `ratio^s` against `log N` (finite `s` only).
    pub log_fit: Option<LinearFit>,
}

impl GrowthReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,ratio")?;
        for row in &self.rows {
            writeln!(w, "{},{}", row.n, row.ratio)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "fitted_exponent": self.fitted_exponent,
            "target": self.target,
            "abs_err": self.abs_err,
        })
    }
}

/// x-grid for a given `N`: at least `floor`, `2^15` and `8(2N+2)`, rounded up to a power of two.
pub fn growth_grid(n: usize, floor: usize) -> usize {
    floor.max(MIN_GROWTH_GRID).max(8 * (2 * n + 2)).next_power_of_two()
}

pub fn growth_ratio(n: usize, p: f64, vp: VariationParams, s: Exponent, grid_count: usize) -> Result<GrowthRow> {
    if 2 * (2 * n + 1) >= grid_count {
        return invalid("grid too coarse for the kernel degree");
    }
    let num_lp = LorentzParams { p, s };
    num_lp.validate()?;
    let den_lp = LorentzParams::new(p, 1.0)?;
    let step = 1.0 / grid_count as f64;
    let mut v = dirichlet_variation(n, vp, grid_count);
    v.sort_by(|a, b| b.total_cmp(a));
    let numerator = lorentz_of_rearranged(&v, step, num_lp);
    let kernel = vallee_poussin(n, grid_count)?;
    let denominator = lorentz_of_rearranged(&decreasing_rearrangement(&kernel), step, den_lp);
    Ok(GrowthRow { n, ratio: numerator / denominator, numerator, denominator, grid_count })
}

pub fn growth_experiment(p: f64, r: f64, s: f64, n_list: &[usize], grid_floor: usize) -> Result<GrowthReport> {
    let vp = VariationParams::new(r)?;
    let s = Exponent::from_f64(s);
    if n_list.len() < 2 {
        return invalid("need at least two values of N");
    }
    let rows = n_list
        .iter()
        .map(|&n| growth_ratio(n, p, vp, s, growth_grid(n, grid_floor)))
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|row| (row.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|row| row.ratio.ln()).collect();
    let fitted_exponent = linear_fit(&lx, &ly)?.slope;
    let r_dual = vp.r.conjugate().value();
    let target = (1.0 / p - 1.0 / r_dual).max(0.0);
    let log_fit = match s {
        Exponent::Finite(sv) => {
            let y: Vec<f64> = rows.iter().map(|row| row.ratio.powf(sv)).collect();
            Some(linear_fit(&lx, &y)?)
        }
        Exponent::Infinite => None,
    };
    Ok(GrowthReport {
        p,
        r: vp.r,
        s,
        rows,
        fitted_exponent,
        target,
        abs_err: (fitted_exponent - target).abs(),
        log_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_examples() {
        let s = select_indices(512, 1.0 / 16.0).unwrap();
        assert_eq!(s.k_count, 31);
        assert_eq!(s.indices[0], 2);
        assert_eq!(s.indices.len(), 62);
        assert!(s.signs_alternate());
        assert_eq!(select_indices(512, 0.125).unwrap().k_count, 63);
    }

    #[test]
    fn selection_preconditions() {
        assert!(select_indices(32, 0.125).is_err());
        assert!(select_indices(512, 0.2).is_err());
        assert!(select_indices(512, 1.0 / 128.0).is_err());
    }

    #[test]
    fn bound_dominates_floor() {
        for r in [1.0, 2.0, 3.0, f64::INFINITY] {
            let vp = VariationParams::new(r).unwrap();
            let v = pointwise_lower_bound(256, 1.0 / 16.0, vp).unwrap();
            assert!(v >= lower_bound_floor(256, 1.0 / 16.0, vp).unwrap());
        }
    }

    #[test]
    fn rotation_matches_closed_form() {
        let vp = VariationParams::new(3.0).unwrap();
        let g = 256;
        let fast = dirichlet_variation(40, vp, g);
        for (j, v) in fast.iter().enumerate() {
            let x = j as f64 / g as f64;
            let seq: Vec<f64> = (0..=41).map(|m| dirichlet_value(m, x)).collect();
            let slow = real_variation(&seq, vp);
            assert!((v - slow).abs() <= 1e-10 * slow.max(1.0));
        }
    }
}
