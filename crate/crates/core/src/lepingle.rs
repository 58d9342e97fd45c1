//! Dyadic martingale averages, smooth averaging families, their variation and the square
//! function comparing the two.

use std::io::Write;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fft_forward, fft_inverse};
use crate::grid::{Domain, SampledFunction};
use crate::varnorm::{real_variation, VariationParams};

/// Levels `k_min..=k_max` of a family of averages; `levels[k - k_min][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSweep {
    pub domain: Domain,
    pub k_min: i32,
    pub k_max: i32,
    pub levels: Vec<Vec<f64>>,
}

impl MartingaleSweep {
    pub fn level(&self, k: i32) -> Option<&[f64]> {
        if k < self.k_min || k > self.k_max {
            return None;
        }
        Some(&self.levels[(k - self.k_min) as usize])
    }

    /// The sequence `k ↦ level_k(x_j)`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.levels.iter().map(|l| l[j]).collect()
    }

    pub fn grid_count(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    /// `x,k,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,k,value")?;
        let n = self.grid_count();
        let (left, dx) = (self.domain.left(), self.domain.length() / n as f64);
        for (l, level) in self.levels.iter().enumerate() {
            for (j, v) in level.iter().enumerate() {
                writeln!(w, "{},{},{}", left + j as f64 * dx, self.k_min + l as i32, v)?;
            }
        }
        Ok(())
    }
}

fn real_samples(f: &SampledFunction) -> Result<Vec<f64>> {
    if f.samples().iter().any(|z| z.im != 0.0) {
        return invalid("averages act on real-valued samples");
    }
    Ok(f.real_parts())
}

/// `log₂` of the grid spacing, after checking that the domain is a dyadic interval.
fn dyadic_layout(f: &SampledFunction, k_range: &RangeInclusive<i32>) -> Result<i32> {
    let n = f.grid_count();
    let (left, len) = (f.domain().left(), f.domain().length());
    if !n.is_power_of_two() || len.log2().fract() != 0.0 || (left / len).fract() != 0.0 {
        return Err(Error::Domain("averages need a dyadic domain with a power-of-two grid".into()));
    }
    let fine = (len / n as f64).log2() as i32;
    let (k_min, k_max) = (*k_range.start(), *k_range.end());
    if k_min > k_max {
        return invalid("empty scale range");
    }
    if k_min < fine {
        return invalid(format!("2^{k_min} is finer than the grid spacing 2^{fine}"));
    }
    if f.domain().is_periodic() && k_max > 0 {
        return invalid("periodic averages stop at the whole circle");
    }
    Ok(fine)
}

/// `𝔼_k[f](x)`, the mean of `f` over the dyadic interval of length `2^k` containing `x`.
///
/// Levels are built by pairwise averaging from the grid spacing upward, which makes the tower
/// identities hold bit for bit. On compact domains `f` vanishes outside.
pub fn dyadic_averages(f: &SampledFunction, k_range: RangeInclusive<i32>) -> Result<MartingaleSweep> {
    let fine = dyadic_layout(f, &k_range)?;
    let (k_min, k_max) = (*k_range.start(), *k_range.end());
    let n = f.grid_count();
    let mut blocks = real_samples(f)?;
    let mut levels = Vec::with_capacity((k_max - k_min + 1) as usize);
    let mut k = fine;
    loop {
        if k >= k_min {
            let width = n / blocks.len();
            levels.push(blocks.iter().flat_map(|&v| std::iter::repeat(v).take(width)).collect());
        }
        if k == k_max {
            break;
        }
        blocks = if blocks.len() > 1 {
            blocks.chunks(2).map(|p| (p[0] + p[1]) / 2.0).collect()
        } else {
            vec![blocks[0] / 2.0]
        };
        k += 1;
    }
    Ok(MartingaleSweep { domain: f.domain(), k_min, k_max, levels })
}

/// `𝒱^r` of `k ↦ 𝔼_k[f](x)` at every grid point.
pub fn martingale_variation(f: &SampledFunction, vp: VariationParams, k_range: RangeInclusive<i32>) -> Result<SampledFunction> {
    vp.validate()?;
    let sweep = dyadic_averages(f, k_range)?;
    let vals: Vec<f64> = (0..sweep.grid_count()).map(|j| real_variation(&sweep.column(j), vp)).collect();
    SampledFunction::from_reals(f.domain(), &vals)
}

/// `‖𝒱^r 𝔼 f‖₂ / ‖f‖₂`.
pub fn variation_ratio(f: &SampledFunction, vp: VariationParams, k_range: RangeInclusive<i32>) -> Result<f64> {
    let norm = f.lp_norm(2.0);
    if norm == 0.0 {
        return Err(Error::Degenerate("ratio needs a nonzero function".into()));
    }
    Ok(martingale_variation(f, vp, k_range)?.lp_norm(2.0) / norm)
}

/// The fixed averaging profile: `exp(-1/(1-x²))` on `(-1, 1)`, unnormalised.
pub fn psi_profile(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Grid weights of `ψ_k = 2^{-k}ψ(2^{-k}·)` for offsets `-w..=w`, summing to one.
fn kernel_weights(step: f64, k: i32) -> Vec<f64> {
    let scale = 2f64.powi(k);
    let w = ((scale / step).ceil() as usize).saturating_sub(1);
    let mut out: Vec<f64> = (-(w as i64)..=w as i64).map(|j| psi_profile(j as f64 * step / scale)).collect();
    let total: f64 = out.iter().sum();
    if total == 0.0 {
        return vec![1.0];
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

fn convolve(values: &[f64], weights: &[f64], periodic: bool) -> Vec<f64> {
    let n = values.len();
    let w = weights.len() / 2;
    if w == 0 {
        return values.iter().map(|v| v * weights[0]).collect();
    }
    let size = if periodic { n } else { (n + w + 1).next_power_of_two() };
    let mut a: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::new(0.0, 0.0));
    let mut b = vec![Complex64::new(0.0, 0.0); size];
    for (i, &v) in weights.iter().enumerate() {
        let off = (i as i64 - w as i64).rem_euclid(size as i64) as usize;
        b[off] += v;
    }
    fft_forward(&mut a);
    fft_forward(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    fft_inverse(&mut a);
    a[..n].iter().map(|z| z.re / size as f64).collect()
}

/// `A_k f = ψ_k * f` for each level, periodic on the circle and zero-padded otherwise.
pub fn smooth_family(f: &SampledFunction, k_range: RangeInclusive<i32>) -> Result<MartingaleSweep> {
    dyadic_layout(f, &k_range)?;
    let vals = real_samples(f)?;
    let periodic = f.domain().is_periodic();
    let levels = k_range.clone().map(|k| convolve(&vals, &kernel_weights(f.step(), k), periodic)).collect();
    Ok(MartingaleSweep { domain: f.domain(), k_min: *k_range.start(), k_max: *k_range.end(), levels })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareFunctionReport {
    pub p: f64,
    pub value: f64,
    pub f_norm: f64,
    pub ratio: f64,
}

/// `(Σ_k |A_k f - 𝔼_k f|²)^{1/2}` at every grid point.
pub fn square_function_values(f: &SampledFunction, k_range: RangeInclusive<i32>) -> Result<Vec<f64>> {
    let e = dyadic_averages(f, k_range.clone())?;
    let a = smooth_family(f, k_range)?;
    let mut acc = vec![0.0f64; f.grid_count()];
    for (le, la) in e.levels.iter().zip(&a.levels) {
        for ((s, x), y) in acc.iter_mut().zip(le).zip(la) {
            *s += (y - x) * (y - x);
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// `‖(Σ_k |A_k f - 𝔼_k f|²)^{1/2}‖_p` with its ratio to `‖f‖_p`.
pub fn square_function(f: &SampledFunction, k_range: RangeInclusive<i32>, p: f64) -> Result<SquareFunctionReport> {
    if !(p >= 1.0) {
        return invalid("p must be at least 1");
    }
    let s = SampledFunction::from_reals(f.domain(), &square_function_values(f, k_range)?)?;
    let value = s.lp_norm(p);
    let f_norm = f.lp_norm(p);
    let ratio = if f_norm > 0.0 { value / f_norm } else { 0.0 };
    Ok(SquareFunctionReport { p, value, f_norm, ratio })
}

/// A step function with `pieces` equal pieces and values uniform in `[-1, 1)`.
pub fn random_step_function<G: Rng>(rng: &mut G, domain: Domain, n: usize, pieces: usize) -> Result<SampledFunction> {
    if pieces == 0 || n % pieces != 0 {
        return invalid("pieces must divide the grid count");
    }
    let vals: Vec<f64> = (0..pieces).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let width = n / pieces;
    let samples: Vec<f64> = (0..n).map(|j| vals[j / width]).collect();
    SampledFunction::from_reals(domain, &samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LepingleSummary {
    pub grid: usize,
    pub r: f64,
    pub samples: usize,
    pub variation_sup: f64,
    pub square_sup: f64,
}

/// Sup of the variation and square-function ratios over random step functions on `[0, 1)`.
pub fn lepingle_sweep<G: Rng>(rng: &mut G, grid: usize, r: f64, samples: usize, pieces: usize) -> Result<LepingleSummary> {
    let vp = VariationParams::new(r)?;
    let fine = -(grid.trailing_zeros() as i32);
    let mut variation_sup = 0.0f64;
    let mut square_sup = 0.0f64;
    for _ in 0..samples {
        let f = random_step_function(rng, Domain::Periodic, grid, pieces)?;
        variation_sup = variation_sup.max(variation_ratio(&f, vp, fine..=0)?);
        square_sup = square_sup.max(square_function(&f, fine..=0, 2.0)?.ratio);
    }
    Ok(LepingleSummary { grid, r, samples, variation_sup, square_sup })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_indicator_mean() {
        let f = SampledFunction::from_real_fn(Domain::Compact { left: 0.0, right: 1.0 }, 16, |x| if x < 0.5 { 1.0 } else { 0.0 })
            .unwrap();
        let s = dyadic_averages(&f, -4..=1).unwrap();
        assert_eq!(s.level(0).unwrap()[3], 0.5);
        assert_eq!(s.level(1).unwrap()[0], 0.25);
    }

    #[test]
    fn kernel_has_unit_mass() {
        for k in -8..=-1 {
            let w = kernel_weights(1.0 / 256.0, k);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert_eq!(kernel_weights(1.0 / 256.0, -9), vec![1.0]);
    }
}
