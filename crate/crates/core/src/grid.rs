//! Uniform-grid functions, dyadic intervals and Lorentz quasinorms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exponent::Exponent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// The circle `[0, 1)`.
    Periodic,
    /// The interval `[left, right)`; samples outside are taken to vanish.
    Compact { left: f64, right: f64 },
}

impl Domain {
    pub fn left(&self) -> f64 {
        match *self {
            Domain::Periodic => 0.0,
            Domain::Compact { left, .. } => left,
        }
    }

    pub fn right(&self) -> f64 {
        match *self {
            Domain::Periodic => 1.0,
            Domain::Compact { right, .. } => right,
        }
    }

    pub fn length(&self) -> f64 {
        self.right() - self.left()
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Periodic)
    }
}

#[derive(Serialize, Deserialize)]
struct RawSampled {
    domain: Domain,
    samples: Vec<Complex64>,
}

/// Complex samples at the left endpoints `left + jΔ` of a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSampled", into = "RawSampled")]
pub struct SampledFunction {
    domain: Domain,
    samples: Vec<Complex64>,
}

impl TryFrom<RawSampled> for SampledFunction {
    type Error = Error;
    fn try_from(raw: RawSampled) -> Result<Self> {
        SampledFunction::new(raw.domain, raw.samples)
    }
}

impl From<SampledFunction> for RawSampled {
    fn from(f: SampledFunction) -> Self {
        RawSampled { domain: f.domain, samples: f.samples }
    }
}

impl SampledFunction {
    pub fn new(domain: Domain, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() < 2 {
            return invalid("a grid needs at least two samples");
        }
        if let Domain::Compact { left, right } = domain {
            if !(left < right) || !left.is_finite() || !right.is_finite() {
                return invalid(format!("compact domain needs left < right, got [{left}, {right})"));
            }
        }
        Ok(SampledFunction { domain, samples })
    }

    pub fn from_fn(domain: Domain, n: usize, mut f: impl FnMut(f64) -> Complex64) -> Result<Self> {
        if n < 2 {
            return invalid("a grid needs at least two samples");
        }
        let left = domain.left();
        let step = domain.length() / n as f64;
        let samples = (0..n).map(|j| f(left + j as f64 * step)).collect();
        SampledFunction::new(domain, samples)
    }

    pub fn from_real_fn(domain: Domain, n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        SampledFunction::from_fn(domain, n, |x| Complex64::new(f(x), 0.0))
    }

    pub fn from_reals(domain: Domain, values: &[f64]) -> Result<Self> {
        SampledFunction::new(domain, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(domain: Domain, n: usize) -> Result<Self> {
        SampledFunction::new(domain, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn grid_count(&self) -> usize {
        self.samples.len()
    }

    pub fn step(&self) -> f64 {
        self.domain.length() / self.samples.len() as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.domain.left() + j as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.grid_count()).map(|j| self.point(j)).collect()
    }

    pub fn is_power_of_two(&self) -> bool {
        self.samples.len().is_power_of_two()
    }

    pub fn abs_values(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm()).collect()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.re).collect()
    }

    /// Same grid, new samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != self.samples.len() {
            return invalid("sample count must match the grid");
        }
        SampledFunction::new(self.domain, samples)
    }

    pub fn map(&self, mut g: impl FnMut(Complex64) -> Complex64) -> Self {
        SampledFunction { domain: self.domain, samples: self.samples.iter().map(|&z| g(z)).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|z| z * c)
    }

    pub fn same_grid(&self, other: &SampledFunction) -> bool {
        self.domain == other.domain && self.samples.len() == other.samples.len()
    }

    /// Left Riemann sum of the samples.
    pub fn integral(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() * self.step()
    }

    /// `∫ f ḡ` by left Riemann sums.
    pub fn inner(&self, other: &SampledFunction) -> Result<Complex64> {
        if !self.same_grid(other) {
            return invalid("inner product needs a common grid");
        }
        let s: Complex64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.step())
    }

    /// `(∫|f|^p)^{1/p}`, or the sample maximum for `p = ∞`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_of(&self.abs_values(), self.step(), p)
    }

    /// Measure of `{x : f(x) ≠ 0}` on the grid.
    pub fn support_measure(&self) -> f64 {
        self.samples.iter().filter(|z| z.norm() > 0.0).count() as f64 * self.step()
    }
}

pub(crate) fn lp_norm_of(abs: &[f64], step: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return abs.iter().cloned().fold(0.0, f64::max);
    }
    let s: f64 = abs.iter().map(|a| a.powf(p)).sum::<f64>() * step;
    s.powf(1.0 / p)
}

/// `[2^k m, 2^k (m+1))` stored as the exact pair `(k, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    #[serde(rename = "k")]
    pub scale: i32,
    #[serde(rename = "m")]
    pub index: i64,
}

impl DyadicInterval {
    pub const fn new(scale: i32, index: i64) -> Self {
        DyadicInterval { scale, index }
    }

    /// The interval at `scale` containing `x`.
    pub fn containing(x: f64, scale: i32) -> Self {
        DyadicInterval { scale, index: (x * pow2(-scale)).floor() as i64 }
    }

    pub fn length(&self) -> f64 {
        pow2(self.scale)
    }

    pub fn left(&self) -> f64 {
        self.index as f64 * pow2(self.scale)
    }

    pub fn right(&self) -> f64 {
        (self.index + 1) as f64 * pow2(self.scale)
    }

    pub fn center(&self) -> f64 {
        (self.index as f64 + 0.5) * pow2(self.scale)
    }

    pub fn parent(&self) -> Self {
        DyadicInterval { scale: self.scale + 1, index: self.index.div_euclid(2) }
    }

    pub fn children(&self) -> (Self, Self) {
        dyadic_children(*self)
    }

    /// Ancestor (or self) at a coarser or equal scale.
    pub fn ancestor(&self, scale: i32) -> Self {
        debug_assert!(scale >= self.scale);
        let shift = (scale - self.scale) as u32;
        let index = if shift >= 63 { if self.index < 0 { -1 } else { 0 } } else { self.index >> shift };
        DyadicInterval { scale, index }
    }

    pub fn is_left_child(&self) -> bool {
        self.index.rem_euclid(2) == 0
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.scale <= self.scale && other.ancestor(self.scale).index == self.index
    }

    pub fn contains_point(&self, x: f64) -> bool {
        x >= self.left() && x < self.right()
    }

    pub fn intersects(&self, other: &DyadicInterval) -> bool {
        self.contains(other) || other.contains(self)
    }

    /// Mirror image `[-b, -a)`.
    pub fn reflect(&self) -> Self {
        DyadicInterval { scale: self.scale, index: -self.index - 1 }
    }
}

pub fn dyadic_children(j: DyadicInterval) -> (DyadicInterval, DyadicInterval) {
    (
        DyadicInterval { scale: j.scale - 1, index: 2 * j.index },
        DyadicInterval { scale: j.scale - 1, index: 2 * j.index + 1 },
    )
}

pub(crate) fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzParams {
    pub p: f64,
    pub s: Exponent,
}

impl LorentzParams {
    pub fn new(p: f64, s: f64) -> Result<Self> {
        let lp = LorentzParams { p, s: Exponent::from_f64(s) };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !self.p.is_finite() {
            return invalid(format!("Lorentz exponent p must be finite and positive, got {}", self.p));
        }
        if let Exponent::Finite(s) = self.s {
            if !(s > 0.0) {
                return invalid(format!("Lorentz exponent s must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

pub fn decreasing_rearrangement(f: &SampledFunction) -> Vec<f64> {
    let mut v = f.abs_values();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `(∫ (t^{1/p} f*(t))^s dt/t)^{1/s}` sampled at `t_j = (j+1)Δ`; `sup_t t^{1/p} f*(t)` for `s = ∞`.
pub fn lorentz_norm(f: &SampledFunction, lp: LorentzParams) -> Result<f64> {
    lp.validate()?;
    Ok(lorentz_of_rearranged(&decreasing_rearrangement(f), f.step(), lp))
}

pub(crate) fn lorentz_of_rearranged(fstar: &[f64], step: f64, lp: LorentzParams) -> f64 {
    let inv_p = 1.0 / lp.p;
    let t = |j: usize| (j + 1) as f64 * step;
    match lp.s {
        Exponent::Infinite => fstar
            .iter()
            .enumerate()
            .map(|(j, &v)| t(j).powf(inv_p) * v)
            .fold(0.0, f64::max),
        Exponent::Finite(s) => {
            let sum: f64 = fstar
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(j, &v)| (t(j).powf(inv_p) * v).powf(s) * step / t(j))
                .sum();
            sum.powf(1.0 / s)
        }
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("a fit needs at least two paired observations");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept: my - slope * mx, r_squared })
}
