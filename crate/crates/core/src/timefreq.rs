//! Smooth frequency cutoffs, maximal dyadic partitions, multitiles, wave packets and model operators.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fft_forward, fft_inverse};
use crate::grid::{pow2, Domain, DyadicInterval, SampledFunction};
use crate::exponent::Exponent;

pub const C1: f64 = 12.0;
pub const C2: f64 = 2.0;
pub const C3: f64 = 1.1;
/// Half-width of the transition region of [`nu`].
pub const TRANSITION: f64 = 0.01;

fn e(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// `e(t)/(e(t)+e(1-t))`: 0 for `t ≤ 0`, 1 for `t ≥ 1`, smooth and increasing between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = e(t);
        a / (a + e(1.0 - t))
    }
}

pub fn nu(x: f64) -> f64 {
    smooth_step((x + TRANSITION) / (2.0 * TRANSITION))
}

/// `ν(2^{-i}(η+1/2)) - ν(η-1/2)`.
pub fn nu_i(i: i8, eta: f64) -> f64 {
    (nu(pow2(-(i as i32)) * (eta + 0.5)) - nu(eta - 0.5)).max(0.0)
}

/// `φ_{J,i}(ξ) = ν_i((ξ - c(J))/|J|)`.
pub fn phi_j_i(j: &DyadicInterval, i: i8, xi: f64) -> f64 {
    nu_i(i, (xi - j.center()) / j.length())
}

/// Half-open `[lo, hi)`, either end possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FreqInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        FreqInterval { lo, hi }
    }

    pub fn from_dyadic(j: &DyadicInterval) -> Self {
        FreqInterval { lo: j.left(), hi: j.right() }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    /// Concentric dilate by `c`; infinite intervals are returned unchanged.
    pub fn dilate(&self, c: f64) -> Self {
        if !self.is_finite() {
            return *self;
        }
        let (m, h) = (self.center(), 0.5 * c * self.length());
        FreqInterval { lo: m - h, hi: m + h }
    }

    pub fn intersects(&self, other: &FreqInterval) -> bool {
        self.lo.max(other.lo) < self.hi.min(other.hi)
    }

    pub fn is_subset_of(&self, other: &FreqInterval) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &FreqInterval) -> Self {
        FreqInterval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn shift(&self, d: f64) -> Self {
        FreqInterval { lo: self.lo + d, hi: self.hi + d }
    }

    /// Mirror image under `ξ ↦ -ξ`, as a half-open interval.
    pub fn reflect(&self) -> Self {
        FreqInterval { lo: -self.hi, hi: -self.lo }
    }
}

impl fmt::Display for FreqInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn of(j: &DyadicInterval) -> Side {
        if j.is_left_child() {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// `(class, m, n, side)`; serialized as `[class, m, n, "side"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(u8, u8, u8, Side)", into = "(u8, u8, u8, Side)")]
pub struct RhoIndex {
    pub class: u8,
    pub m: u8,
    pub n: u8,
    pub side: Side,
}

impl TryFrom<(u8, u8, u8, Side)> for RhoIndex {
    type Error = Error;
    fn try_from((class, m, n, side): (u8, u8, u8, Side)) -> Result<Self> {
        RhoIndex::new(class, m, n, side)
    }
}

impl From<RhoIndex> for (u8, u8, u8, Side) {
    fn from(r: RhoIndex) -> Self {
        (r.class, r.m, r.n, r.side)
    }
}

const fn rho(class: u8, m: u8, n: u8, side: Side) -> RhoIndex {
    RhoIndex { class, m, n, side }
}

/// The ten indices whose classes partition every maximal family.
pub const R: [RhoIndex; 10] = [
    rho(1, 2, 1, Side::Left),
    rho(1, 2, 2, Side::Left),
    rho(1, 3, 1, Side::Left),
    rho(1, 3, 2, Side::Left),
    rho(2, 1, 1, Side::Left),
    rho(2, 1, 1, Side::Right),
    rho(2, 2, 1, Side::Right),
    rho(3, 4, 1, Side::Left),
    rho(3, 3, 1, Side::Right),
    rho(3, 4, 2, Side::Left),
];

const I_RHO: [i8; 10] = [0, 0, 0, 0, -1, -1, 0, 1, 0, 1];

impl RhoIndex {
    pub fn new(class: u8, m: u8, n: u8, side: Side) -> Result<Self> {
        if !(1..=3).contains(&class) || !(1..=4).contains(&m) || !(1..=4).contains(&n) {
            return invalid(format!("index ({class},{m},{n}) out of range"));
        }
        Ok(RhoIndex { class, m, n, side })
    }

    pub fn in_r(&self) -> bool {
        R.contains(self)
    }

    /// `log2(|J'|/|J|)` shared by every `J` of this class; defined on `R` only.
    pub fn i_rho(&self) -> Option<i8> {
        R.iter().position(|r| r == self).map(|p| I_RHO[p])
    }

    /// Index of the mirrored multitile class.
    pub fn reflect(&self) -> RhoIndex {
        let class = match self.class {
            2 => 3,
            3 => 2,
            c => c,
        };
        RhoIndex { class, m: self.n, n: self.m, side: self.side.opposite() }
    }

    /// Whether `J` falls in the class `𝐉_{ξ,ξ',ρ}`.
    pub fn matches(&self, j: &DyadicInterval, xi: f64, xi2: f64) -> bool {
        if Side::of(j) != self.side {
            return false;
        }
        let (a, b, w) = (j.left(), j.right(), j.length());
        let (m, n) = (self.m as f64, self.n as f64);
        let low_near = xi >= a - (m + 1.0) * w && xi < b - (m + 1.0) * w;
        let high_near = xi2 >= a + (n + 1.0) * w && xi2 < b + (n + 1.0) * w;
        match self.class {
            1 => low_near && high_near,
            2 => low_near && xi2 - b >= n * w,
            _ => a - xi > m * w && high_near,
        }
    }
}

impl fmt::Display for RhoIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        write!(f, "({},{},{},{})", self.class, self.m, self.n, s)
    }
}

/// Members of `R` whose class contains `J`.
pub fn classify(j: &DyadicInterval, xi: f64, xi2: f64) -> Vec<RhoIndex> {
    R.iter().copied().filter(|r| r.matches(j, xi, xi2)).collect()
}

/// A rectangle `I × ω` with `|I||ω| = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tile {
    #[serde(rename = "I")]
    pub i: DyadicInterval,
    pub omega: DyadicInterval,
}

impl Tile {
    pub fn new(i: DyadicInterval, omega: DyadicInterval) -> Result<Self> {
        if i.scale + omega.scale != -1 {
            return invalid("tile must have area 1/2");
        }
        Ok(Tile { i, omega })
    }
}

#[derive(Serialize, Deserialize)]
struct RawMultitile {
    #[serde(rename = "I")]
    i: DyadicInterval,
    omega_u: DyadicInterval,
    rho: RhoIndex,
    #[serde(default, skip_serializing_if = "is_false")]
    mirrored: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// `I × (ω_l ∪ ω_u ∪ ω_h)` with `ω_l, ω_h` placed by the class rules of `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMultitile", into = "RawMultitile")]
pub struct Multitile {
    pub i: DyadicInterval,
    pub omega_u: DyadicInterval,
    pub rho: RhoIndex,
    /// Set on reflected multitiles, whose bump is `ν_i(-·)`.
    pub mirrored: bool,
    /// Bump index of the unreflected class.
    bump: i8,
}

impl TryFrom<RawMultitile> for Multitile {
    type Error = Error;
    fn try_from(raw: RawMultitile) -> Result<Self> {
        if raw.mirrored {
            Ok(build_multitile(raw.i.reflect(), raw.omega_u.reflect(), raw.rho.reflect())?.reflect())
        } else {
            build_multitile(raw.i, raw.omega_u, raw.rho)
        }
    }
}

impl From<Multitile> for RawMultitile {
    fn from(p: Multitile) -> Self {
        RawMultitile { i: p.i, omega_u: p.omega_u, rho: p.rho, mirrored: p.mirrored }
    }
}

pub fn build_multitile(i: DyadicInterval, omega_u: DyadicInterval, rho: RhoIndex) -> Result<Multitile> {
    if i.scale + omega_u.scale != -1 {
        return invalid("multitile must satisfy |I||ω_u| = 1/2");
    }
    if Side::of(&omega_u) != rho.side {
        return invalid(format!("ω_u side does not match {rho}"));
    }
    let bump = rho.i_rho().ok_or_else(|| Error::InvalidArgument(format!("{rho} is not in R")))?;
    Ok(Multitile { i, omega_u, rho, mirrored: false, bump })
}

impl Multitile {
    /// Same frequency data over another time interval of the same length.
    pub fn with_time(&self, i: DyadicInterval) -> Result<Multitile> {
        if i.scale != self.i.scale {
            return invalid("time interval must keep its length");
        }
        Ok(Multitile { i, ..*self })
    }

    pub fn bump_index(&self) -> i8 {
        self.bump
    }

    pub fn omega_u_interval(&self) -> FreqInterval {
        FreqInterval::from_dyadic(&self.omega_u)
    }

    pub fn omega_l(&self) -> FreqInterval {
        let u = self.omega_u_interval();
        let w = u.length();
        let m = self.rho.m as f64;
        match self.rho.class {
            3 => FreqInterval::new(f64::NEG_INFINITY, u.hi - (m + 1.0) * w),
            _ => u.shift(-(m + 1.0) * w),
        }
    }

    pub fn omega_h(&self) -> FreqInterval {
        let u = self.omega_u_interval();
        let w = u.length();
        let n = self.rho.n as f64;
        match self.rho.class {
            2 => FreqInterval::new(u.lo + (n + 1.0) * w, f64::INFINITY),
            _ => u.shift((n + 1.0) * w),
        }
    }

    /// `hull(C₂ω_u ∪ C₂ω_l)`.
    pub fn omega_m(&self) -> FreqInterval {
        self.omega_u_interval().dilate(C2).hull(&self.omega_l().dilate(C2))
    }

    pub fn tile(&self) -> Tile {
        Tile { i: self.i, omega: self.omega_u }
    }

    /// `P ↦ P̃`: time and frequency reflected, class 2 and 3 exchanged.
    pub fn reflect(&self) -> Multitile {
        Multitile {
            i: self.i.reflect(),
            omega_u: self.omega_u.reflect(),
            rho: self.rho.reflect(),
            mirrored: !self.mirrored,
            bump: self.bump,
        }
    }

    /// `φ̂_P(ξ) = |I|^{1/2} √φ(ξ) e^{-2πi c(I) ξ}`.
    pub fn packet_hat(&self, xi: f64) -> Complex64 {
        let amp = self.bump_at(xi);
        if amp == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.i.length().sqrt() * amp.sqrt(), -2.0 * PI * self.i.center() * xi)
    }

    /// The frequency cutoff `φ_{ω_u,i}` (or its mirror image).
    pub fn bump_at(&self, xi: f64) -> f64 {
        let eta = (xi - self.omega_u.center()) / self.omega_u.length();
        if self.mirrored {
            nu_i(self.bump, -eta)
        } else {
            nu_i(self.bump, eta)
        }
    }

    /// Closed support of `φ̂_P`.
    pub fn packet_support(&self) -> FreqInterval {
        let (c, w) = (self.omega_u.center(), self.omega_u.length());
        let reach_left = 0.5 + TRANSITION * pow2(self.bump as i32);
        let reach_right = 0.5 + TRANSITION;
        if self.mirrored {
            FreqInterval::new(c - reach_right * w, c + reach_left * w)
        } else {
            FreqInterval::new(c - reach_left * w, c + reach_right * w)
        }
    }
}

/// One interval of a maximal partition with its neighbour exponent `i(J)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCell {
    pub j: DyadicInterval,
    pub i: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalPartition {
    pub xi: f64,
    pub xi2: f64,
    /// Left to right.
    pub cells: Vec<PartitionCell>,
    /// Length of `(ξ, ξ')` not covered after truncation.
    pub dropped_mass: f64,
}

impl MaximalPartition {
    pub fn sum_at(&self, eta: f64) -> f64 {
        self.cells.iter().map(|c| phi_j_i(&c.j, c.i, eta)).sum()
    }
}

fn admissible(j: &DyadicInterval, xi: f64, xi2: f64) -> bool {
    let w = j.length();
    j.left() - xi >= w && xi2 - j.right() >= w
}

fn is_endpoint(x: f64, scale: i32) -> bool {
    (x * pow2(-scale)).fract() == 0.0
}

/// Smallest scale kept by a depth cap.
fn finest_scale(xi: f64, xi2: f64, depth_cap: u32) -> i32 {
    ((xi2 - xi).log2() - depth_cap as f64).ceil() as i32
}

fn coarsest_scale(xi: f64, xi2: f64) -> i32 {
    ((xi2 - xi) / 3.0).log2().floor() as i32
}

/// Moves `x` off every dyadic endpoint at scales `≥ finest` by about `2^{finest-40}`.
pub fn avoid_dyadic_endpoint(x: f64, finest: i32) -> f64 {
    let mut y = x;
    let mut step = pow2(finest - 40);
    while is_endpoint(y, finest) {
        // the nudge grows until it survives rounding
        y = x + step;
        step *= 2.0;
    }
    y
}

/// The maximal interval of the full family containing `eta`.
fn maximal_containing(xi: f64, xi2: f64, eta: f64, floor_scale: i32) -> Option<DyadicInterval> {
    let mut k = coarsest_scale(xi, xi2);
    while k >= floor_scale {
        let j = DyadicInterval::containing(eta, k);
        if admissible(&j, xi, xi2) {
            return Some(j);
        }
        k -= 1;
    }
    None
}

pub fn maximal_partition(xi: f64, xi2: f64, depth_cap: u32) -> Result<MaximalPartition> {
    if !(xi < xi2) || !xi.is_finite() || !xi2.is_finite() {
        return invalid("need finite ξ < ξ'");
    }
    let k_min = finest_scale(xi, xi2, depth_cap);
    for x in [xi, xi2] {
        if is_endpoint(x, k_min - 2) {
            return Err(Error::DyadicEndpoint(x));
        }
    }
    let k_max = coarsest_scale(xi, xi2);
    let mut cells = Vec::new();
    for k in (k_min..=k_max).rev() {
        let w = pow2(k);
        let lo = ((xi + w) / w).ceil() as i64;
        let hi = ((xi2 - w) / w).floor() as i64 - 1;
        if lo > hi {
            continue;
        }
        let mut cand: Vec<i64> = (lo..=hi.min(lo + 4)).chain((hi - 4).max(lo)..=hi).collect();
        cand.sort_unstable();
        cand.dedup();
        for m in cand {
            let j = DyadicInterval::new(k, m);
            if admissible(&j, xi, xi2) && !admissible(&j.parent(), xi, xi2) {
                cells.push(j);
            }
        }
    }
    cells.sort_by(|a, b| a.left().total_cmp(&b.left()));
    let mut out = Vec::with_capacity(cells.len());
    for j in cells {
        let neighbour = maximal_containing(xi, xi2, j.left() - 0.25 * j.length(), j.scale - 2)
            .ok_or_else(|| Error::Postcondition(format!("no left neighbour for {j:?}")))?;
        let i = neighbour.scale - j.scale;
        if !(-1..=1).contains(&i) || neighbour.right() != j.left() {
            return Err(Error::Postcondition(format!("left neighbour of {j:?} has relative scale {i}")));
        }
        out.push(PartitionCell { j, i: i as i8 });
    }
    let covered: f64 = out.iter().map(|c| c.j.length()).sum();
    Ok(MaximalPartition { xi, xi2, cells: out, dropped_mass: (xi2 - xi) - covered })
}

/// Per-point frequency cut points `ξ_0 < … < ξ_K` and dual coefficients `a_1, …, a_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationData {
    pub xi: Vec<Vec<f64>>,
    pub a: Vec<Vec<Complex64>>,
}

impl LinearizationData {
    /// Checks monotone cut points and `Σ|a_k|^{r'} ∈ {0, 1}` at each point.
    pub fn new(xi: Vec<Vec<f64>>, a: Vec<Vec<Complex64>>, r: Exponent) -> Result<Self> {
        if xi.len() != a.len() {
            return invalid("cut points and coefficients must cover the same grid");
        }
        let rd = r.conjugate();
        for (j, (x, c)) in xi.iter().zip(&a).enumerate() {
            if x.is_empty() && c.is_empty() {
                continue;
            }
            if x.len() != c.len() + 1 {
                return invalid(format!("point {j}: need K+1 cut points for K coefficients"));
            }
            if x.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid(format!("point {j}: cut points must increase"));
            }
            let mass: f64 = match rd {
                Exponent::Finite(q) => c.iter().map(|z| z.norm().powf(q)).sum(),
                Exponent::Infinite => c.iter().map(|z| z.norm()).fold(0.0, f64::max),
            };
            if mass != 0.0 && (mass - 1.0).abs() > 1e-10 {
                return invalid(format!("point {j}: coefficient mass {mass} is not 1"));
            }
        }
        Ok(LinearizationData { xi, a })
    }

    pub fn grid_count(&self) -> usize {
        self.xi.len()
    }

    /// `a_k(x_j)` for the unique `k` with `ξ_{k-1} ∈ ω_l` and `ξ_k ∈ ω_h`.
    pub fn coefficient_for(&self, j: usize, lo: &FreqInterval, hi: &FreqInterval) -> Result<Complex64> {
        let x = &self.xi[j];
        let mut found: Option<Complex64> = None;
        for k in 1..x.len() {
            if lo.contains(x[k - 1]) && hi.contains(x[k]) {
                if found.is_some() {
                    return Err(Error::Ambiguous(j));
                }
                found = Some(self.a[j][k - 1]);
            }
        }
        Ok(found.unwrap_or(Complex64::new(0.0, 0.0)))
    }
}

fn compact_grid(f: &SampledFunction) -> Result<(f64, f64, usize)> {
    match f.domain() {
        Domain::Compact { left, right } => Ok((left, right - left, f.grid_count())),
        Domain::Periodic => Err(Error::Domain("wave packets live on a compact grid".into())),
    }
}

fn band_ok(p: &Multitile, len: f64, n: usize) -> Result<()> {
    let nyquist = n as f64 / (2.0 * len);
    let band = p.omega_u_interval().dilate(C3);
    if band.lo < -nyquist || band.hi > nyquist {
        return invalid(format!("grid band ±{nyquist} does not contain C₃ω_u = {band}"));
    }
    Ok(())
}

/// Discrete transform `f̂(m/L) = Σ_j f_j e^{-2πi (m/L) x_j} Δ`, indexed like the FFT output.
pub fn grid_transform(f: &SampledFunction) -> Result<Vec<Complex64>> {
    let (left, len, n) = compact_grid(f)?;
    let mut buf = f.samples().to_vec();
    fft_forward(&mut buf);
    let dx = f.step();
    for (m, z) in buf.iter_mut().enumerate() {
        let k = freq_of(m, n, len);
        *z *= Complex64::from_polar(dx, -2.0 * PI * k * left);
    }
    Ok(buf)
}

/// Dual frequency of FFT bin `m`.
pub fn freq_of(m: usize, n: usize, len: f64) -> f64 {
    let m = m as i64;
    let n = n as i64;
    let s = if m >= n / 2 { m - n } else { m };
    s as f64 / len
}

/// Samples of a function given by its dual-grid transform.
pub fn from_transform(domain: Domain, hat: &[Complex64]) -> Result<SampledFunction> {
    let (left, len) = (domain.left(), domain.length());
    let n = hat.len();
    let mut buf: Vec<Complex64> = hat
        .iter()
        .enumerate()
        .map(|(m, z)| z * Complex64::from_polar(1.0 / len, 2.0 * PI * freq_of(m, n, len) * left))
        .collect();
    fft_inverse(&mut buf);
    SampledFunction::new(domain, buf)
}

pub fn packet_transform(p: &Multitile, n: usize, len: f64) -> Vec<Complex64> {
    (0..n).map(|m| p.packet_hat(freq_of(m, n, len))).collect()
}

pub fn wave_packet(p: &Multitile, grid: &SampledFunction) -> Result<SampledFunction> {
    let (_, len, n) = compact_grid(grid)?;
    band_ok(p, len, n)?;
    from_transform(grid.domain(), &packet_transform(p, n, len))
}

/// `⟨f, φ_P⟩` from the transform of `f`.
pub fn packet_coefficient(p: &Multitile, f_hat: &[Complex64], len: f64) -> Complex64 {
    let n = f_hat.len();
    let supp = p.packet_support();
    let mut acc = Complex64::new(0.0, 0.0);
    let lo = (supp.lo * len).floor() as i64;
    let hi = (supp.hi * len).ceil() as i64;
    for s in lo..=hi {
        let m = s.rem_euclid(n as i64) as usize;
        let k = s as f64 / len;
        acc += f_hat[m] * p.packet_hat(k).conj();
    }
    acc / len
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// `‖Σ_I ⟨f,φ_{I×J}⟩φ̂_{I×J} - f̂φ_J‖₂ / ‖f̂‖₂`.
    pub relative: f64,
    pub absolute: f64,
    pub translates: usize,
}

/// Compares `Σ_{|I|=1/(2|J|)} ⟨f,φ_{I×J}⟩ φ̂_{I×J}` with `f̂ φ_J` on the dual grid.
///
/// The time intervals are the `2·radius+1` translates around the one containing the
/// centre of the domain, taken once each modulo the grid period.
pub fn reconstruct_check(j: &DyadicInterval, i: i8, f: &SampledFunction, radius: usize) -> Result<ReconstructionReport> {
    let (left, len, n) = compact_grid(f)?;
    if !(-1..=1).contains(&i) {
        return invalid(format!("bump index {i} not in -1..=1"));
    }
    let scale = -1 - j.scale;
    // the packet depends on the bump only, so any class on the right side will do
    let rho = RhoIndex { side: Side::of(j), ..R[0] };
    let probe = Multitile { i: DyadicInterval::new(scale, 0), omega_u: *j, rho, mirrored: false, bump: i };
    band_ok(&probe, len, n)?;
    let f_hat = grid_transform(f)?;
    let centre = DyadicInterval::containing(left + 0.5 * len, scale).index;
    let period = if (len / pow2(scale)).fract() == 0.0 { Some((len / pow2(scale)) as i64) } else { None };
    let mut seen = std::collections::BTreeSet::new();
    let mut lhs = vec![Complex64::new(0.0, 0.0); n];
    let supp = probe.packet_support();
    let (lo, hi) = ((supp.lo * len).floor() as i64, (supp.hi * len).ceil() as i64);
    for t in -(radius as i64)..=(radius as i64) {
        let idx = centre + t;
        let key = period.map_or(idx, |p| idx.rem_euclid(p));
        if !seen.insert(key) {
            continue;
        }
        let p = Multitile { i: DyadicInterval::new(scale, idx), ..probe };
        let c = packet_coefficient(&p, &f_hat, len);
        for s in lo..=hi {
            let m = s.rem_euclid(n as i64) as usize;
            lhs[m] += c * p.packet_hat(s as f64 / len);
        }
    }
    let mut err = 0.0;
    let mut norm = 0.0;
    for (m, (l, fh)) in lhs.iter().zip(&f_hat).enumerate() {
        let rhs = fh * phi_j_i(j, i, freq_of(m, n, len));
        err += (l - rhs).norm_sqr();
        norm += fh.norm_sqr();
    }
    let absolute = (err / len).sqrt();
    let relative = if norm > 0.0 { (err / norm).sqrt() } else { 0.0 };
    Ok(ReconstructionReport { relative, absolute, translates: seen.len() })
}

/// `max_x |φ_P(x)| / (|I|^{1/2} w_I(x))` with `w_I = |I|^{-1}(1+|x-c(I)|/|I|)^{-decay}`.
pub fn decay_constant(p: &Multitile, packet: &SampledFunction, decay: i32) -> f64 {
    let (c, l) = (p.i.center(), p.i.length());
    packet
        .samples()
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let w = (1.0 + (packet.point(j) - c).abs() / l).powi(-decay) / l;
            z.norm() / (l.sqrt() * w)
        })
        .fold(0.0, f64::max)
}

/// Constant-block violations of one multitile; 3-indices are checked on their reflection.
pub fn constant_block_violations(p: &Multitile) -> Vec<String> {
    let q = if p.rho.class == 3 { p.reflect() } else { *p };
    let mut out = Vec::new();
    let u = q.omega_u_interval();
    let (l, h) = (q.omega_l(), q.omega_h());
    if u.dilate(C2).intersects(&l.dilate(C2)) {
        out.push(format!("C2 omega_u meets C2 omega_l for {}", q.rho));
    }
    if u.dilate(C2).intersects(&h) {
        out.push(format!("C2 omega_u meets omega_h for {}", q.rho));
    }
    if !l.dilate(C2).is_subset_of(&u.dilate(C1)) {
        out.push(format!("C2 omega_l not inside C1 omega_u for {}", q.rho));
    }
    if !u.dilate(C2).is_subset_of(&l.dilate(C1)) {
        out.push(format!("C2 omega_u not inside C1 omega_l for {}", q.rho));
    }
    let band = p.omega_u_interval().dilate(C3);
    let w = p.omega_u.length();
    let leak = (0..=400)
        .map(|s| band.lo - w + (band.hi - band.lo + 2.0 * w) * s as f64 / 400.0)
        .filter(|x| !band.contains(*x))
        .map(|x| p.packet_hat(x).norm())
        .fold(0.0, f64::max);
    if leak > 1e-10 {
        out.push(format!("packet transform leaks {leak} outside C3 omega_u"));
    }
    out
}

/// Groups multitiles by `ω_u` scale mod 5 and `ω_u` index mod 13.
pub fn separation_split(tiles: &[Multitile]) -> Vec<Vec<Multitile>> {
    let mut groups: std::collections::BTreeMap<(i32, i64), Vec<Multitile>> = Default::default();
    for p in tiles {
        groups.entry((p.omega_u.scale.rem_euclid(5), p.omega_u.index.rem_euclid(13))).or_default().push(*p);
    }
    groups.into_values().collect()
}

/// Separation of scales and of equal-scale frequency intervals within one collection.
pub fn is_separated(tiles: &[Multitile]) -> bool {
    let ratio = (C2 - C3) / (2.0 * C1);
    for (a, p) in tiles.iter().enumerate() {
        for q in &tiles[a + 1..] {
            let (wp, wq) = (p.omega_u.length(), q.omega_u.length());
            if wp != wq {
                let (small, big) = if wp < wq { (wp, wq) } else { (wq, wp) };
                if small > ratio * big {
                    return false;
                }
            } else if p.omega_u != q.omega_u && p.omega_u_interval().dilate(C1).intersects(&q.omega_u_interval().dilate(C1)) {
                return false;
            }
        }
    }
    true
}

/// `Σ_P ⟨f,φ_P⟩ φ_P(x) a_P(x)`, optionally restricted to the support of `e`.
pub fn model_operator(
    tiles: &[Multitile],
    f: &SampledFunction,
    lin: &LinearizationData,
    e: Option<&SampledFunction>,
) -> Result<SampledFunction> {
    let (_, len, n) = compact_grid(f)?;
    if lin.grid_count() != n {
        return invalid("linearization must live on the grid of f");
    }
    if let Some(e) = e {
        if !e.same_grid(f) {
            return invalid("E must live on the grid of f");
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if tiles.is_empty() {
        return SampledFunction::new(f.domain(), out);
    }
    let f_hat = grid_transform(f)?;
    for p in tiles {
        band_ok(p, len, n)?;
        let c = packet_coefficient(p, &f_hat, len);
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let (lo, hi) = (p.omega_l(), p.omega_h());
        let packet = wave_packet(p, f)?;
        for (j, slot) in out.iter_mut().enumerate() {
            if let Some(e) = e {
                if e.samples()[j] == Complex64::new(0.0, 0.0) {
                    continue;
                }
            }
            let a = lin.coefficient_for(j, &lo, &hi)?;
            if a != Complex64::new(0.0, 0.0) {
                *slot += c * packet.samples()[j] * a;
            }
        }
    }
    SampledFunction::new(f.domain(), out)
}
