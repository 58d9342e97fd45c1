//! The variational Menshov–Paley–Zygmund norm and the `L^p`-mass halving recursion.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{dual_grid, mpz_node_rows};
use crate::grid::{Domain, SampledFunction};
use crate::varnorm::{complex_variation, VariationParams};

fn cell_masses(f: &SampledFunction, p: f64) -> Vec<f64> {
    let dx = f.step();
    f.samples().iter().map(|z| z.norm().powf(p) * dx).collect()
}

/// Grid cells `[lo, hi)` whose left points lie in `[a, b)`.
fn cell_range(f: &SampledFunction, a: f64, b: f64) -> Result<(usize, usize)> {
    if !(a < b) {
        return invalid("interval must have positive length");
    }
    let (left, dx, n) = (f.domain().left(), f.step(), f.grid_count() as f64);
    let lo = ((a - left) / dx).ceil().clamp(0.0, n) as usize;
    let hi = ((b - left) / dx).ceil().clamp(0.0, n) as usize;
    Ok((lo, hi))
}

/// Index `j` of the first cell in `lo..hi` at which the cumulative mass reaches half.
fn halving_cell(mass: &[f64], lo: usize, hi: usize) -> Result<usize> {
    let total: f64 = mass[lo..hi].iter().sum();
    if total == 0.0 {
        return Err(Error::Degenerate("no L^p mass on the interval".into()));
    }
    let mut acc = 0.0;
    for (j, m) in mass.iter().enumerate().take(hi).skip(lo) {
        acc += m;
        if acc >= total / 2.0 {
            return Ok(j);
        }
    }
    Ok(hi - 1)
}

/// The grid point closing the cell at which the cumulative `|f|^p` mass on `[a, b)` first
/// reaches half of its total.
pub fn halving_point(f: &SampledFunction, p: f64, a: f64, b: f64) -> Result<f64> {
    if !(p > 0.0) {
        return invalid("p must be positive");
    }
    let (lo, hi) = cell_range(f, a, b)?;
    let j = halving_cell(&cell_masses(f, p), lo, hi)?;
    Ok(f.point(j) + f.step())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingNode {
    pub interval: (f64, f64),
    /// Grid cells `lo..hi`.
    pub cells: (usize, usize),
    pub mass: f64,
    pub depth: u32,
    pub children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingTree {
    pub p: f64,
    pub total: f64,
    /// Largest single-cell mass.
    pub cell_mass: f64,
    pub nodes: Vec<HalvingNode>,
}

impl HalvingTree {
    pub fn leaves(&self) -> impl Iterator<Item = &HalvingNode> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }
}

/// Recursive halving of `supp f` by `L^p` mass; the tie cell goes to the left child.
pub fn halving_tree(f: &SampledFunction, p: f64, depth: u32) -> Result<HalvingTree> {
    if !(p > 0.0) {
        return invalid("p must be positive");
    }
    let n = f.grid_count();
    if n == 0 || depth > usize::BITS - 1 - n.leading_zeros() {
        return invalid("depth exceeds log₂ of the grid count");
    }
    let mass = cell_masses(f, p);
    let first = mass.iter().position(|&m| m > 0.0).ok_or_else(|| Error::Degenerate("f vanishes".into()))?;
    let last = mass.iter().rposition(|&m| m > 0.0).unwrap() + 1;
    let (left, dx) = (f.domain().left(), f.step());
    let node = |lo: usize, hi: usize, d: u32| HalvingNode {
        interval: (left + lo as f64 * dx, left + hi as f64 * dx),
        cells: (lo, hi),
        mass: mass[lo..hi].iter().sum(),
        depth: d,
        children: None,
    };
    let mut nodes = vec![node(first, last, 0)];
    let mut queue = vec![0usize];
    while let Some(id) = queue.pop() {
        let (lo, hi) = nodes[id].cells;
        let d = nodes[id].depth;
        if d == depth {
            continue;
        }
        let j = halving_cell(&mass, lo, hi)?;
        if j + 1 >= hi {
            return Err(Error::Degenerate(format!("cells {lo}..{hi} cannot be halved")));
        }
        let a = nodes.len();
        nodes.push(node(lo, j + 1, d + 1));
        nodes.push(node(j + 1, hi, d + 1));
        nodes[id].children = Some((a, a + 1));
        queue.push(a + 1);
        queue.push(a);
    }
    let total = nodes[0].mass;
    let cell_mass = mass.iter().copied().fold(0.0, f64::max);
    Ok(HalvingTree { p, total, cell_mass, nodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmpzReport {
    pub p: f64,
    pub r: f64,
    pub grid: usize,
    pub value: f64,
    pub f_norm: f64,
    pub ratio: f64,
    /// `(ξ, V^r_x 𝒞[f](ξ,·))` per dual-grid frequency.
    #[serde(skip)]
    pub rows: Vec<(f64, f64)>,
}

impl VmpzReport {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "p": self.p, "r": self.r, "ratio": self.ratio, "grid": self.grid })
    }

    /// `xi,variation` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "xi,variation")?;
        for (xi, v) in &self.rows {
            writeln!(w, "{xi},{v}")?;
        }
        Ok(())
    }
}

/// `‖𝒞[f]‖_{L^{p'}_ξ(V^r_x)}` on the dual grid of `f`, with its ratio to `‖f‖_p`.
pub fn vmpz_norm(f: &SampledFunction, p: f64, r: f64) -> Result<VmpzReport> {
    vmpz_norm_threaded(f, p, r, 1)
}

/// [`vmpz_norm`] with the frequency rows split across `threads` workers.
pub fn vmpz_norm_threaded(f: &SampledFunction, p: f64, r: f64, threads: usize) -> Result<VmpzReport> {
    if !(1.0..2.0).contains(&p) {
        return invalid("vMPZ needs 1 ≤ p < 2");
    }
    let vp = VariationParams::new(r)?;
    let xi = dual_grid(f, 0.0);
    let threads = threads.clamp(1, xi.len().max(1));
    let chunk = xi.len().div_ceil(threads);
    let parts: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = xi
            .chunks(chunk)
            .map(|ks| {
                s.spawn(move || {
                    ks.iter()
                        .map(|&k| Ok(complex_variation(&mpz_node_rows(f, &[k])?[0], vp)))
                        .collect::<Result<Vec<f64>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("vMPZ worker panicked")).collect()
    });
    let mut vars = Vec::with_capacity(xi.len());
    for part in parts {
        vars.extend(part?);
    }
    let p_dual = p / (p - 1.0);
    let dxi = 1.0 / f.domain().length();
    let value = if p == 1.0 {
        vars.iter().copied().fold(0.0, f64::max)
    } else {
        (vars.iter().map(|v| v.powf(p_dual)).sum::<f64>() * dxi).powf(1.0 / p_dual)
    };
    let f_norm = f.lp_norm(p);
    let ratio = if f_norm > 0.0 { value / f_norm } else { 0.0 };
    Ok(VmpzReport { p, r, grid: f.grid_count(), value, f_norm, ratio, rows: xi.into_iter().zip(vars).collect() })
}

/// A random step function on `[0, 1)` with `pieces` complex values, embedded in `[0, length)`.
pub fn random_supported_function<G: Rng>(rng: &mut G, length: f64, n: usize, pieces: usize) -> Result<SampledFunction> {
    let cells = n as f64 / length;
    let inside = cells as usize;
    if !(length >= 1.0) || cells.fract() != 0.0 || pieces == 0 || inside % pieces != 0 {
        return invalid("the unit interval must be a union of whole pieces on the grid");
    }
    let vals: Vec<Complex64> = (0..pieces).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let width = inside / pieces;
    let samples = (0..n).map(|j| if j < inside { vals[j / width] } else { Complex64::new(0.0, 0.0) }).collect();
    SampledFunction::new(Domain::Compact { left: 0.0, right: length }, samples)
}
