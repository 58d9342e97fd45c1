//! SU(1,1)-valued curves of the nonlinear Fourier summation operator, their traces,
//! length and `r`-variation.
//!
//! Samples of `f` define a piecewise-constant potential, so each step is one closed-form
//! exponential and the evolution has no discretisation error beyond rounding.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{linear_fit, Domain, LinearFit, SampledFunction};
use crate::varnorm::{metric_variation_checked, VariationParams};

/// `[[a, b], [conj b, conj a]]` with `|a|² - |b|² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SU11Element {
    pub a: Complex64,
    pub b: Complex64,
}

impl SU11Element {
    pub const IDENTITY: SU11Element = SU11Element { a: Complex64::new(1.0, 0.0), b: Complex64::new(0.0, 0.0) };

    pub fn inverse(&self) -> Self {
        SU11Element { a: self.a.conj(), b: -self.b }
    }

    /// `|a|² - |b|² - 1`.
    pub fn drift(&self) -> f64 {
        self.a.norm_sqr() - self.b.norm_sqr() - 1.0
    }

    pub fn transpose(&self) -> Self {
        SU11Element { a: self.a, b: self.b.conj() }
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.a, self.b], [self.b.conj(), self.a.conj()]]
    }
}

impl Mul for SU11Element {
    type Output = SU11Element;

    fn mul(self, o: SU11Element) -> SU11Element {
        SU11Element { a: self.a * o.a + self.b * o.b.conj(), b: self.a * o.b + self.b * o.a.conj() }
    }
}

/// `[[i d, c], [conj c, -i d]]`, normed by Frobenius/√2 so that `w` and `v` are unit vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub c: Complex64,
    pub d: f64,
}

impl AlgebraElement {
    pub const ZERO: AlgebraElement = AlgebraElement { c: Complex64::new(0.0, 0.0), d: 0.0 };

    /// `Re(c) w + Im(c) v`.
    pub fn off_diagonal(c: Complex64) -> Self {
        AlgebraElement { c, d: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.c.norm().hypot(self.d)
    }

    pub fn scale(&self, t: f64) -> Self {
        AlgebraElement { c: self.c * t, d: self.d * t }
    }

    /// `X² = det_sq · I`.
    fn det_sq(&self) -> f64 {
        self.c.norm_sqr() - self.d * self.d
    }
}

impl Add for AlgebraElement {
    type Output = AlgebraElement;

    fn add(self, o: AlgebraElement) -> AlgebraElement {
        AlgebraElement { c: self.c + o.c, d: self.d + o.d }
    }
}

impl Sub for AlgebraElement {
    type Output = AlgebraElement;

    fn sub(self, o: AlgebraElement) -> AlgebraElement {
        AlgebraElement { c: self.c - o.c, d: self.d - o.d }
    }
}

/// `(cosh √μ, sinh √μ / √μ)`, continued to `μ < 0` through `cos`/`sin`.
fn cosh_sinhc(mu: f64) -> (f64, f64) {
    if mu.abs() < 1e-4 {
        let ch = 1.0 + mu / 2.0 * (1.0 + mu / 12.0 * (1.0 + mu / 30.0));
        let sc = 1.0 + mu / 6.0 * (1.0 + mu / 20.0 * (1.0 + mu / 42.0));
        (ch, sc)
    } else if mu > 0.0 {
        let s = mu.sqrt();
        (s.cosh(), s.sinh() / s)
    } else {
        let s = (-mu).sqrt();
        (s.cos(), s.sin() / s)
    }
}

/// `exp(tM)` in closed form: `M² = (|c|² - d²) I`.
pub fn algebra_exp(m: &AlgebraElement, t: f64) -> SU11Element {
    let x = m.scale(t);
    let (ch, sc) = cosh_sinhc(x.det_sq());
    SU11Element { a: Complex64::new(ch, sc * x.d), b: x.c * sc }
}

/// Principal logarithm; undefined once `Re a ≤ -1`.
pub fn algebra_log(g: &SU11Element) -> Result<AlgebraElement> {
    // |b|² - (Im a)² = sinh²√μ for μ ≥ 0 and -sin²√-μ otherwise
    let q = g.b.norm_sqr() - g.a.im * g.a.im;
    let mu = if q >= 0.0 {
        let s = q.sqrt().asinh();
        s * s
    } else {
        let s = (-q).sqrt().min(1.0);
        let theta = if g.a.re >= 0.0 { s.asin() } else { PI - s.asin() };
        if theta >= PI * (1.0 - 1e-9) || g.a.re <= -1.0 {
            return Err(Error::BranchCut(format!("Re a = {} leaves the principal branch", g.a.re)));
        }
        -theta * theta
    };
    if q >= 0.0 && g.a.re < 0.0 {
        return Err(Error::BranchCut(format!("hyperbolic element with Re a = {}", g.a.re)));
    }
    let (_, sc) = cosh_sinhc(mu);
    Ok(AlgebraElement { c: g.b / sc, d: g.a.im / sc })
}

/// `‖log(g⁻¹h)‖`.
pub fn group_distance(g: &SU11Element, h: &SU11Element) -> Result<f64> {
    Ok(algebra_log(&(g.inverse() * *h))?.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `γ' = γ M`.
    Left,
    /// `γ' = M γ`.
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCurve {
    pub times: Vec<f64>,
    pub points: Vec<SU11Element>,
    /// `Δt_j M_j` on `[t_j, t_{j+1})`.
    pub steps: Vec<AlgebraElement>,
    pub convention: Convention,
}

impl GroupCurve {
    /// Curve from generator increments, starting at the identity.
    pub fn from_increments(times: Vec<f64>, steps: Vec<AlgebraElement>, convention: Convention) -> Result<Self> {
        if times.len() != steps.len() + 1 {
            return invalid("one increment per time step");
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("times must increase");
        }
        let mut points = Vec::with_capacity(times.len());
        let mut g = SU11Element::IDENTITY;
        points.push(g);
        for x in &steps {
            let e = algebra_exp(x, 1.0);
            g = match convention {
                Convention::Left => g * e,
                Convention::Right => e * g,
            };
            points.push(g);
        }
        Ok(GroupCurve { times, points, steps, convention })
    }

    pub fn max_drift(&self) -> f64 {
        self.points.iter().map(|g| g.drift().abs()).fold(0.0, f64::max)
    }

    /// `|γ| = Σ_j Δt_j ‖γ⁻¹γ'‖`, which on each step is `‖Δt_j M_j‖`.
    pub fn length(&self) -> f64 {
        self.steps.iter().map(AlgebraElement::norm).sum()
    }

    /// `Σ_j d(γ(t_j), γ(t_{j+1}))`.
    pub fn chord_length(&self) -> Result<f64> {
        let mut s = 0.0;
        for w in self.points.windows(2) {
            s += group_distance(&w[0], &w[1])?;
        }
        Ok(s)
    }

    pub fn restrict(&self, lo: usize, hi: usize) -> Result<GroupCurve> {
        if lo >= hi || hi >= self.times.len() {
            return invalid("restriction needs lo < hi within the curve");
        }
        Ok(GroupCurve {
            times: self.times[lo..=hi].to_vec(),
            points: self.points[lo..=hi].to_vec(),
            steps: self.steps[lo..hi].to_vec(),
            convention: self.convention,
        })
    }

    /// JSON lines `{"t":…, "a":[re,im], "b":[re,im]}`.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (t, g) in self.times.iter().zip(&self.points) {
            let line = serde_json::json!({ "t": t, "a": [g.a.re, g.a.im], "b": [g.b.re, g.b.im] });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Increments `Δ e^{-2πikt_j} f_j` for the nodes `t_j` of `f`.
pub fn potential_increments(f: &SampledFunction, k: f64) -> Result<(Vec<f64>, Vec<AlgebraElement>)> {
    if f.domain().is_periodic() {
        return Err(Error::Domain("the potential needs a compact domain".into()));
    }
    let (dx, left) = (f.step(), f.domain().left());
    let times = (0..=f.grid_count()).map(|j| left + j as f64 * dx).collect();
    let steps = f
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = left + i as f64 * dx;
            AlgebraElement::off_diagonal(v * Complex64::from_polar(dx, -2.0 * PI * k * t))
        })
        .collect();
    Ok((times, steps))
}

/// `𝒩𝒞[f](k, ·)` on the grid nodes.
pub fn nlft_evolve(f: &SampledFunction, k: f64, convention: Convention) -> Result<GroupCurve> {
    let (times, steps) = potential_increments(f, k)?;
    GroupCurve::from_increments(times, steps, convention)
}

/// `γ_l(t_j) = Σ_{i<j} Δt_i M_i`.
pub fn left_trace(curve: &GroupCurve) -> Result<Vec<AlgebraElement>> {
    if curve.convention != Convention::Left {
        return invalid("left trace needs a left-convention curve");
    }
    let mut acc = AlgebraElement::ZERO;
    let mut out = Vec::with_capacity(curve.points.len());
    out.push(acc);
    for x in &curve.steps {
        acc = acc + *x;
        out.push(acc);
    }
    Ok(out)
}

/// `‖γ‖_{V^r}` for the distance `‖log(g⁻¹h)‖`.
pub fn curve_variation(curve: &GroupCurve, r: f64) -> Result<f64> {
    let vp = VariationParams::new(r)?;
    metric_variation_checked(&curve.points, group_distance, vp)
}

/// `‖γ_l‖_{V^r}` in the normed space `𝔤`.
pub fn trace_variation(trace: &[AlgebraElement], r: f64) -> Result<f64> {
    let vp = VariationParams::new(r)?;
    metric_variation_checked(trace, |x, y| Ok((*y - *x).norm()), vp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdivision {
    pub split_index: usize,
    pub t_star: f64,
    pub total: f64,
    pub bound: f64,
    pub left: f64,
    pub right: f64,
    pub max_increment: f64,
    pub left_ok: bool,
    /// Right half within `bound` plus one increment.
    pub right_ok: bool,
}

/// Last sample `t*` at which the prefix variation stays within `2^{-1/r}‖γ‖_{V^r}`.
pub fn subdivide_curve(curve: &GroupCurve, r: f64) -> Result<Subdivision> {
    let n = curve.points.len();
    if n < 2 {
        return Err(Error::Degenerate("curve needs at least two samples".into()));
    }
    let total = curve_variation(curve, r)?;
    if total == 0.0 {
        return Err(Error::Degenerate("curve has zero variation".into()));
    }
    let bound = 2f64.powf(-1.0 / r) * total;
    let prefix = |i: usize| -> Result<f64> {
        if i == 0 {
            Ok(0.0)
        } else {
            curve_variation(&curve.restrict(0, i)?, r)
        }
    };
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if prefix(mid)? <= bound {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let i = lo;
    let left = prefix(i)?;
    let right = if i + 1 >= n { 0.0 } else { curve_variation(&curve.restrict(i, n - 1)?, r)? };
    let mut max_increment = 0.0f64;
    for w in curve.points.windows(2) {
        max_increment = max_increment.max(group_distance(&w[0], &w[1])?);
    }
    Ok(Subdivision {
        split_index: i,
        t_star: curve.times[i],
        total,
        bound,
        left,
        right,
        max_increment,
        left_ok: left <= bound,
        right_ok: right <= bound + max_increment,
    })
}

/// A potential on `[0, 1)` with samples uniform in the disc of radius `amplitude`.
pub fn random_potential<G: Rng>(rng: &mut G, n: usize, amplitude: f64) -> Result<SampledFunction> {
    let samples = (0..n)
        .map(|_| {
            let rho = amplitude * rng.gen::<f64>().sqrt();
            Complex64::from_polar(rho, 2.0 * PI * rng.gen::<f64>())
        })
        .collect();
    SampledFunction::new(Domain::Compact { left: 0.0, right: 1.0 }, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub amplitude: f64,
    pub seed: u64,
    pub var_curve: f64,
    pub var_trace: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    pub r: f64,
    pub grid: usize,
    pub rows: Vec<TraceRow>,
    /// Fit of `log Δ` against `log ‖γ_l‖_{V^r}` over rows with `Δ > 0`.
    pub fit: Option<LinearFit>,
}

impl TraceComparison {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "amplitude,seed,var_curve,var_trace,delta")?;
        for row in &self.rows {
            writeln!(w, "{},{},{},{},{}", row.amplitude, row.seed, row.var_curve, row.var_trace, row.delta)?;
        }
        Ok(())
    }
}

/// `Δ(ε) = |‖γ‖_{V^r} - ‖γ_l‖_{V^r}|` for random potentials at each amplitude, one per seed.
pub fn trace_comparison_experiment(r: f64, amplitudes: &[f64], seeds: &[u64], grid: usize) -> Result<TraceComparison> {
    if !(1.0..2.0).contains(&r) {
        return invalid("trace comparison needs 1 ≤ r < 2");
    }
    let mut rows = Vec::with_capacity(amplitudes.len() * seeds.len());
    for &amplitude in amplitudes {
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_potential(&mut rng, grid, amplitude)?;
            let curve = nlft_evolve(&f, 0.0, Convention::Left)?;
            let var_curve = curve_variation(&curve, r)?;
            let var_trace = trace_variation(&left_trace(&curve)?, r)?;
            rows.push(TraceRow { amplitude, seed, var_curve, var_trace, delta: (var_curve - var_trace).abs() });
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|row| row.delta > 0.0 && row.var_trace > 0.0).map(|row| (row.var_trace.ln(), row.delta.ln())).unzip();
    let fit = if xs.len() >= 2 { Some(linear_fit(&xs, &ys)?) } else { None };
    Ok(TraceComparison { r, grid, rows, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub k: f64,
    pub var_curve: f64,
    pub var_trace: f64,
    pub delta: f64,
}

/// Per-frequency variation of the curve and of its left trace.
pub fn frequency_sweep(f: &SampledFunction, ks: &[f64], r: f64) -> Result<Vec<FrequencyRow>> {
    ks.iter()
        .map(|&k| {
            let curve = nlft_evolve(f, k, Convention::Left)?;
            let var_curve = curve_variation(&curve, r)?;
            let var_trace = trace_variation(&left_trace(&curve)?, r)?;
            Ok(FrequencyRow { k, var_curve, var_trace, delta: (var_curve - var_trace).abs() })
        })
        .collect()
}
