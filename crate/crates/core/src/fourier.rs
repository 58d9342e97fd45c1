//! Fourier coefficients, partial sums, classical kernels and pointwise variation of partial sums.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Domain, SampledFunction};
use crate::varnorm::{complex_variation, real_variation, VariationParams};

/// Coefficients `f̂_k` for `|k| ≤ max_degree`, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    max_degree: usize,
    /// `coeffs[k + max_degree] = f̂_k`
    coeffs: Vec<Complex64>,
}

impl FourierCoefficients {
    pub fn from_fn(max_degree: usize, mut c: impl FnMut(i64) -> Complex64) -> Self {
        let d = max_degree as i64;
        FourierCoefficients { max_degree, coeffs: (-d..=d).map(&mut c).collect() }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn get(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.max_degree {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.max_degree as i64) as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let d = self.max_degree as i64;
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as i64 - d, c))
    }

    /// Keeps `|k| ≤ n`.
    pub fn truncate(&self, n: usize) -> Self {
        let m = n.min(self.max_degree);
        FourierCoefficients::from_fn(m, |k| self.get(k))
    }

    pub fn sum_squares(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_forward(data: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(data.len()));
    plan.process(data);
}

pub(crate) fn fft_inverse(data: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(data.len()));
    plan.process(data);
}

/// `f̂_k = (1/n) Σ_j f_j e^{-2πikj/n}` for `|k| ≤ n/2 - 1`.
pub fn fourier_coefficients(f: &SampledFunction) -> Result<FourierCoefficients> {
    if !f.domain().is_periodic() {
        return Err(Error::Domain("Fourier coefficients need a periodic function".into()));
    }
    let n = f.grid_count();
    if !n.is_power_of_two() {
        return invalid("grid_count must be a power of two");
    }
    let mut buf = f.samples().to_vec();
    fft_forward(&mut buf);
    let scale = 1.0 / n as f64;
    let max_degree = n / 2 - 1;
    Ok(FourierCoefficients::from_fn(max_degree, |k| buf[k.rem_euclid(n as i64) as usize] * scale))
}

/// Samples `Σ_k c_k e^{2πikx}` on an `n`-point periodic grid.
pub fn eval_trig_poly(c: &FourierCoefficients, n: usize) -> Result<SampledFunction> {
    if n < 2 {
        return invalid("a grid needs at least two samples");
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    if 2 * c.max_degree() < n && n.is_power_of_two() {
        for (k, v) in c.iter() {
            buf[k.rem_euclid(n as i64) as usize] += v;
        }
        fft_inverse(&mut buf);
    } else {
        let table = unit_roots(n);
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = c.iter().map(|(k, v)| v * table[(k * j as i64).rem_euclid(n as i64) as usize]).sum();
        }
    }
    SampledFunction::new(Domain::Periodic, buf)
}

/// `e^{2πij/n}` for `j < n`.
pub(crate) fn unit_roots(n: usize) -> Vec<Complex64> {
    (0..n).map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)).collect()
}

/// Columns `S_n f` for `n = 0..=n_max` on the periodic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSumSweep {
    pub grid: Vec<f64>,
    /// `values[n][j] = S_n f(x_j)`
    pub values: Vec<Vec<Complex64>>,
}

impl PartialSumSweep {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn column(&self, n: usize) -> Result<SampledFunction> {
        let col = self.values.get(n).ok_or_else(|| Error::InvalidArgument(format!("degree {n} not in sweep")))?;
        SampledFunction::new(Domain::Periodic, col.clone())
    }

    /// `(S_0 f(x_j), …, S_{n_max} f(x_j))`.
    pub fn row(&self, j: usize) -> Vec<Complex64> {
        self.values.iter().map(|col| col[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,n,re,im")?;
        for (j, x) in self.grid.iter().enumerate() {
            for (n, col) in self.values.iter().enumerate() {
                writeln!(w, "{},{},{},{}", x, n, col[j].re, col[j].im)?;
            }
        }
        Ok(())
    }
}

fn check_degree(f: &SampledFunction, n_max: usize) -> Result<()> {
    if 2 * n_max >= f.grid_count() {
        return invalid(format!("n_max = {n_max} needs grid_count > {}", 2 * n_max));
    }
    Ok(())
}

pub fn partial_sum_sweep(f: &SampledFunction, n_max: usize) -> Result<PartialSumSweep> {
    check_degree(f, n_max)?;
    let c = fourier_coefficients(f)?;
    let n = f.grid_count();
    let table = unit_roots(n);
    let mut values = Vec::with_capacity(n_max + 1);
    let mut cur = vec![c.get(0); n];
    values.push(cur.clone());
    for deg in 1..=n_max {
        let (cp, cm) = (c.get(deg as i64), c.get(-(deg as i64)));
        for (j, s) in cur.iter_mut().enumerate() {
            let e = table[(deg * j) % n];
            *s += cp * e + cm * e.conj();
        }
        values.push(cur.clone());
    }
    Ok(PartialSumSweep { grid: f.points(), values })
}

/// `S_n f(x_j)` for `n = 0..=n_max` at the single grid index `j`.
pub fn partial_sums_at(c: &FourierCoefficients, table: &[Complex64], j: usize, n_max: usize) -> Vec<Complex64> {
    let n = table.len();
    let mut out = Vec::with_capacity(n_max + 1);
    let mut s = c.get(0);
    out.push(s);
    for deg in 1..=n_max {
        let e = table[(deg * j) % n];
        s += c.get(deg as i64) * e + c.get(-(deg as i64)) * e.conj();
        out.push(s);
    }
    out
}

/// `D_n(x) = sin((2n+1)πx)/sin(πx)`, summed as `1 + 2Σcos(2πkx)` where `|sin πx| < 1e-8`.
pub fn dirichlet_value(n: usize, x: f64) -> f64 {
    let s = (PI * x).sin();
    if s.abs() < 1e-8 {
        1.0 + 2.0 * (1..=n).map(|k| (2.0 * PI * k as f64 * x).cos()).sum::<f64>()
    } else {
        ((2 * n + 1) as f64 * PI * x).sin() / s
    }
}

pub fn dirichlet_kernel(n: usize, grid_count: usize) -> Result<SampledFunction> {
    SampledFunction::from_real_fn(Domain::Periodic, grid_count, |x| dirichlet_value(n, x))
}

/// `(1 - |k|/(N+1))₊`.
pub fn fejer_coefficients(n: usize) -> FourierCoefficients {
    FourierCoefficients::from_fn(n, |k| Complex64::new(1.0 - k.unsigned_abs() as f64 / (n + 1) as f64, 0.0))
}

pub fn fejer_kernel(n: usize, grid_count: usize) -> Result<SampledFunction> {
    eval_trig_poly(&fejer_coefficients(n), grid_count)
}

/// Coefficients of `2K_{2N+1} - K_N`.
pub fn vallee_poussin_coefficients(n: usize) -> FourierCoefficients {
    let big = fejer_coefficients(2 * n + 1);
    let small = fejer_coefficients(n);
    FourierCoefficients::from_fn(2 * n + 1, |k| big.get(k) * 2.0 - small.get(k))
}

pub fn vallee_poussin(n: usize, grid_count: usize) -> Result<SampledFunction> {
    eval_trig_poly(&vallee_poussin_coefficients(n), grid_count)
}

fn is_real(f: &SampledFunction) -> bool {
    f.samples().iter().all(|z| z.im == 0.0)
}

/// Pointwise `V^r` of `n ↦ S_n f(x)` over `n = 0..=n_max`.
pub fn variational_carleson(f: &SampledFunction, vp: VariationParams, n_max: usize) -> Result<SampledFunction> {
    vp.validate()?;
    check_degree(f, n_max)?;
    let c = fourier_coefficients(f)?;
    let table = unit_roots(f.grid_count());
    let real = is_real(f);
    let out: Vec<f64> = (0..f.grid_count())
        .map(|j| {
            let seq = partial_sums_at(&c, &table, j, n_max);
            if real {
                let re: Vec<f64> = seq.iter().map(|z| z.re).collect();
                real_variation(&re, vp)
            } else {
                complex_variation(&seq, vp)
            }
        })
        .collect();
    SampledFunction::from_reals(Domain::Periodic, &out)
}

/// `ξ_m = (m + offset)/|domain|` for `m = -n/2 .. n/2 - 1`.
pub fn dual_grid(f: &SampledFunction, offset: f64) -> Vec<f64> {
    let n = f.grid_count() as i64;
    let len = f.domain().length();
    (-n / 2..n / 2).map(|m| (m as f64 + offset) / len).collect()
}

fn compact_only(f: &SampledFunction) -> Result<()> {
    if f.domain().is_periodic() {
        return Err(Error::Domain("partial integrals need a compactly supported function".into()));
    }
    Ok(())
}

/// Rows `𝒞[f](ξ, t_i)` at the grid nodes `t_0, …, t_n` (including the right end).
pub fn mpz_node_rows(f: &SampledFunction, xi: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    compact_only(f)?;
    let dx = f.step();
    let left = f.domain().left();
    Ok(xi
        .iter()
        .map(|&k| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut row = Vec::with_capacity(f.grid_count() + 1);
            row.push(acc);
            for (i, v) in f.samples().iter().enumerate() {
                let t = left + i as f64 * dx;
                acc += v * Complex64::from_polar(dx, -2.0 * PI * k * t);
                row.push(acc);
            }
            row
        })
        .collect())
}

/// `𝒞[f](ξ, x) = ∫_{-∞}^x e^{-2πiξy} f(y) dy` with the phase frozen on each grid cell.
pub fn mpz_partial_integral(f: &SampledFunction, xi: &[f64], x: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let nodes = mpz_node_rows(f, xi)?;
    let dx = f.step();
    let left = f.domain().left();
    let n = f.grid_count();
    Ok(xi
        .iter()
        .zip(&nodes)
        .map(|(&k, row)| {
            x.iter()
                .map(|&p| {
                    if p <= left {
                        return Complex64::new(0.0, 0.0);
                    }
                    let pos = (p - left) / dx;
                    if pos >= n as f64 {
                        return row[n];
                    }
                    let i = pos.floor() as usize;
                    let t = left + i as f64 * dx;
                    row[i] + f.samples()[i] * Complex64::from_polar(p - t, -2.0 * PI * k * t)
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(k: i64, n: usize) -> SampledFunction {
        SampledFunction::from_fn(Domain::Periodic, n, |x| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x)).unwrap()
    }

    #[test]
    fn single_mode_coefficients() {
        let c = fourier_coefficients(&mode(3, 64)).unwrap();
        for (k, v) in c.iter() {
            let want = if k == 3 { 1.0 } else { 0.0 };
            assert!((v - want).norm() < 1e-12);
        }
        let cos = SampledFunction::from_real_fn(Domain::Periodic, 32, |x| (2.0 * PI * x).cos()).unwrap();
        let c = fourier_coefficients(&cos).unwrap();
        assert!((c.get(1).re - 0.5).abs() < 1e-14 && (c.get(-1).re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_compact_input() {
        let f = SampledFunction::from_reals(Domain::Compact { left: 0.0, right: 1.0 }, &[1.0; 8]).unwrap();
        assert!(matches!(fourier_coefficients(&f), Err(Error::Domain(_))));
    }

    #[test]
    fn sweep_picks_up_mode_at_its_degree() {
        let f = mode(3, 64);
        let s = partial_sum_sweep(&f, 4).unwrap();
        assert!(s.values[2].iter().all(|z| z.norm() < 1e-12));
        for (a, b) in s.values[3].iter().zip(f.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(partial_sum_sweep(&f, 32).is_err());
    }

    #[test]
    fn dirichlet_values() {
        assert_eq!(dirichlet_value(2, 0.0), 5.0);
        assert!((dirichlet_value(1, 0.5) + 1.0).abs() < 1e-14);
        let d0 = dirichlet_kernel(0, 16).unwrap();
        assert!(d0.samples().iter().all(|z| (z.re - 1.0).abs() < 1e-14));
    }

    #[test]
    fn fejer_values() {
        let k0 = fejer_kernel(0, 16).unwrap();
        assert!(k0.samples().iter().all(|z| (z.re - 1.0).abs() < 1e-14));
        let k1 = fejer_kernel(1, 16).unwrap();
        assert!((k1.samples()[0].re - 2.0).abs() < 1e-14);
        let c = fejer_coefficients(2);
        let got: Vec<f64> = (-2..=2).map(|k| c.get(k).re).collect();
        let want = [1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn fejer_is_average_of_dirichlet() {
        let n = 5;
        let k = fejer_kernel(n, 64).unwrap();
        for (j, z) in k.samples().iter().enumerate() {
            let x = j as f64 / 64.0;
            let avg = (0..=n).map(|m| dirichlet_value(m, x)).sum::<f64>() / (n + 1) as f64;
            assert!((z.re - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn vallee_poussin_flat_coefficients() {
        let c = vallee_poussin_coefficients(0);
        for k in -1..=1 {
            assert!((c.get(k).re - 1.0).abs() < 1e-15);
        }
        let f = vallee_poussin(4, 64).unwrap();
        let s = partial_sum_sweep(&f, 5).unwrap();
        for n in 0..=5 {
            for (j, z) in s.values[n].iter().enumerate() {
                assert!((z.re - dirichlet_value(n, j as f64 / 64.0)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn variation_of_single_mode_is_one() {
        let f = mode(3, 64);
        for r in [1.0, 2.0, f64::INFINITY] {
            let v = variational_carleson(&f, VariationParams::new(r).unwrap(), 6).unwrap();
            assert!(v.samples().iter().all(|z| (z.re - 1.0).abs() < 1e-12));
        }
        let one = SampledFunction::from_reals(Domain::Periodic, &[1.0; 32]).unwrap();
        let v = variational_carleson(&one, VariationParams::new(2.0).unwrap(), 8).unwrap();
        assert!(v.samples().iter().all(|z| z.re.abs() < 1e-12));
    }

    #[test]
    fn partial_integral_boundaries() {
        let f = SampledFunction::from_real_fn(Domain::Compact { left: -1.0, right: 2.0 }, 3 * 256, |x| {
            if (0.0..1.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let rows = mpz_partial_integral(&f, &[0.0, 1.0, 2.5], &[-2.0, -0.5, 1.0, 3.0]).unwrap();
        for row in &rows {
            assert_eq!(row[0], Complex64::new(0.0, 0.0));
            assert!(row[1].norm() < 1e-15);
        }
        assert!((rows[0][3] - f.integral()).norm() < 1e-12);
        assert!(rows[1][2].norm() < 1e-12);
    }
}
