//! Energy, density, tree selection and the level decomposition of multitile collections.
//!
//! Top frequencies live on the lattice `h·ℤ`, `h = 2^{-M∘-10}`, and every interval endpoint
//! that enters a tree condition is a multiple of `h`, so all membership tests run in exact
//! integer lattice units.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exponent::Exponent;
use crate::grid::{pow2, Domain, DyadicInterval, SampledFunction};
use crate::timefreq::{
    build_multitile, grid_transform, model_operator, packet_coefficient, FreqInterval, LinearizationData, Multitile,
    Side, C1, C2, C3, R,
};

/// Largest `M∘` for which lattice units stay exact in `f64`.
pub const MAX_M_CIRC: i32 = 19;
/// Cap on lattice cells used by [`dyadic_bmo`].
pub const MAX_BMO_CELLS: usize = 1 << 22;

/// The finite set of admissible top frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopLattice {
    pub m_circ: i32,
    /// `|n| ≤ n_max` for `ξ = n h`.
    pub n_max: i64,
}

impl TopLattice {
    /// `M∘` from the finite parts `I`, `ω_u`, `ω_l`, `ω_h` of every multitile.
    pub fn for_tiles(tiles: &[Multitile]) -> Result<Self> {
        let mut bound = 0.0f64;
        for p in tiles {
            let ends = [p.i.left(), p.i.right(), p.omega_u.left(), p.omega_u.right()];
            let (l, h) = (p.omega_l(), p.omega_h());
            for x in ends.into_iter().chain([l.lo, l.hi, h.lo, h.hi]) {
                if x.is_finite() {
                    bound = bound.max(x.abs());
                }
            }
        }
        let mut m = if bound > 0.0 { bound.log2().floor() as i32 } else { 0 };
        while pow2(m) < bound {
            m += 1;
        }
        while m > i32::MIN / 2 && pow2(m - 1) >= bound && bound > 0.0 {
            m -= 1;
        }
        if m > MAX_M_CIRC {
            return Err(Error::TooLarge(format!("tiles span 2^{m}, above 2^{MAX_M_CIRC}")));
        }
        let n_max = (C1 as i64) << (2 * m + 20).max(0);
        Ok(TopLattice { m_circ: m, n_max })
    }

    pub fn spacing(&self) -> f64 {
        pow2(-self.m_circ - 10)
    }

    pub fn point(&self, n: i64) -> f64 {
        n as f64 * self.spacing()
    }

    fn units(&self, x: f64) -> Result<i64> {
        let u = x / self.spacing();
        if u.fract() != 0.0 || !u.is_finite() {
            return Err(Error::Postcondition(format!("{x} is off the top-frequency lattice")));
        }
        Ok(u as i64)
    }

    /// `(C₂-1)/(4|I_T|)` in lattice units.
    fn half_width(&self, top: &DyadicInterval) -> i64 {
        1i64 << (self.m_circ + 8 - top.scale)
    }

    fn admits(&self, top: &DyadicInterval) -> bool {
        top.scale <= self.m_circ
    }
}

/// `ω_m` and `C₂ω_l` of one tile in lattice units, both half-open.
#[derive(Debug, Clone, Copy)]
struct Geom {
    m_lo: i64,
    m_hi: i64,
    l_lo: i64,
    l_hi: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Any,
    LOverlapping,
    LLacunary,
    LPlus,
    LMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeTop {
    #[serde(rename = "I_T")]
    pub i_t: DyadicInterval,
    #[serde(rename = "xi_T")]
    pub xi_t: f64,
    /// `ξ_T` in lattice units.
    #[serde(skip)]
    n: i64,
}

impl TreeTop {
    /// `ω_T`.
    pub fn omega(&self) -> FreqInterval {
        let d = (C2 - 1.0) / (4.0 * self.i_t.length());
        FreqInterval::new(self.xi_t - d, self.xi_t + d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub top: TreeTop,
    pub kind: TreeKind,
    pub tile_ids: Vec<usize>,
    /// `|I_T|^{-1} Σ_{P∈T} |⟨f,φ_P⟩|²`.
    pub energy_contrib: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub trees: Vec<Tree>,
    pub residual: Vec<usize>,
    pub sum_top_lengths: f64,
    pub iterations: usize,
    /// Selected top frequencies never increase (energy selection) or the rectangles
    /// `I_T × ω_T` of the main trees are pairwise disjoint (density selection).
    pub order_ok: bool,
}

/// One `(x, ξ_{k-1}(x), |a_k(x)|^{r'} 1_E(x) Δ)` contribution to a density integral.
#[derive(Debug, Clone, Copy)]
struct Event {
    x: f64,
    v: f64,
    mass: f64,
}

/// A separated family of 1- or 2-index multitiles with its wave-packet coefficients,
/// and optionally the set `E` and linearization used by densities.
#[derive(Debug, Clone)]
pub struct TileSystem {
    tiles: Vec<Multitile>,
    coeffs: Vec<Complex64>,
    lattice: TopLattice,
    geom: Vec<Geom>,
    events: Vec<Event>,
    r_dual: f64,
    f_measure: f64,
    e_measure: f64,
}

fn lattice_interval(lat: &TopLattice, w: &FreqInterval) -> Result<(i64, i64)> {
    Ok((lat.units(w.lo)?, lat.units(w.hi)?))
}

impl TileSystem {
    /// Coefficients `⟨f,φ_P⟩` are taken on the compact grid of `f`.
    pub fn new(tiles: Vec<Multitile>, f: &SampledFunction) -> Result<Self> {
        let f_hat = grid_transform(f)?;
        let len = f.domain().length();
        let nyquist = f.grid_count() as f64 / (2.0 * len);
        let mut coeffs = Vec::with_capacity(tiles.len());
        for p in &tiles {
            let band = p.omega_u_interval().dilate(C3);
            if band.lo < -nyquist || band.hi > nyquist {
                return invalid(format!("grid band ±{nyquist} does not contain C₃ω_u = {band}"));
            }
            coeffs.push(packet_coefficient(p, &f_hat, len));
        }
        Self::with_coefficients(tiles, coeffs, f.support_measure())
    }

    pub fn with_coefficients(tiles: Vec<Multitile>, coeffs: Vec<Complex64>, f_measure: f64) -> Result<Self> {
        if tiles.len() != coeffs.len() {
            return invalid("one coefficient per tile");
        }
        let lattice = TopLattice::for_tiles(&tiles)?;
        let mut geom = Vec::with_capacity(tiles.len());
        for p in &tiles {
            if p.rho.class == 3 {
                return invalid("3-index multitiles are handled through their reflections");
            }
            let (m_lo, m_hi) = lattice_interval(&lattice, &p.omega_m())?;
            let (l_lo, l_hi) = lattice_interval(&lattice, &p.omega_l().dilate(C2))?;
            geom.push(Geom { m_lo, m_hi, l_lo, l_hi });
        }
        Ok(TileSystem { tiles, coeffs, lattice, geom, events: Vec::new(), r_dual: 1.0, f_measure, e_measure: 0.0 })
    }

    /// Attaches `E` (nonzero samples) and the linearization used by [`TileSystem::density`].
    pub fn with_density(mut self, e: &SampledFunction, lin: &LinearizationData, r: Exponent) -> Result<Self> {
        if lin.grid_count() != e.grid_count() {
            return invalid("linearization must live on the grid of E");
        }
        let r_dual = match r {
            Exponent::Finite(r) if r > 1.0 => r / (r - 1.0),
            Exponent::Infinite => 1.0,
            _ => return invalid("density needs r > 1"),
        };
        let dx = e.step();
        let mut events = Vec::new();
        for (j, z) in e.samples().iter().enumerate() {
            if *z == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (k, a) in lin.a[j].iter().enumerate() {
                let mass = a.norm().powf(r_dual) * dx;
                if mass > 0.0 {
                    events.push(Event { x: e.point(j), v: lin.xi[j][k], mass });
                }
            }
        }
        self.events = events;
        self.r_dual = r_dual;
        self.e_measure = e.support_measure();
        Ok(self)
    }

    pub fn tiles(&self) -> &[Multitile] {
        &self.tiles
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn lattice(&self) -> TopLattice {
        self.lattice
    }

    pub fn f_measure(&self) -> f64 {
        self.f_measure
    }

    pub fn e_measure(&self) -> f64 {
        self.e_measure
    }

    pub fn r_dual(&self) -> f64 {
        self.r_dual
    }

    pub fn all_ids(&self) -> Vec<usize> {
        (0..self.tiles.len()).collect()
    }

    fn weight(&self, id: usize) -> f64 {
        self.coeffs[id].norm_sqr()
    }

    /// Candidate top intervals: all dyadic ancestors of the tile intervals.
    fn top_intervals(&self, ids: &[usize]) -> Vec<DyadicInterval> {
        let mut set = BTreeSet::new();
        for &id in ids {
            let i = self.tiles[id].i;
            for s in i.scale..=self.lattice.m_circ {
                set.insert(i.ancestor(s));
            }
        }
        set.into_iter().filter(|t| self.lattice.admits(t)).collect()
    }

    /// Lattice range of `ξ_T` for which `ω_T ⊂ ω_m`.
    fn tree_range(&self, id: usize, d: i64) -> (i64, i64) {
        let g = self.geom[id];
        ((g.m_lo + d).max(-self.lattice.n_max), (g.m_hi - d).min(self.lattice.n_max))
    }

    /// Lattice range of `ξ_T` for which the tile joins an l-overlapping tree.
    fn overlap_range(&self, id: usize, d: i64) -> (i64, i64) {
        let (lo, hi) = self.tree_range(id, d);
        let g = self.geom[id];
        (lo.max(g.l_lo), hi.min(g.l_hi - 1))
    }

    fn make_top(&self, i_t: DyadicInterval, n: i64) -> TreeTop {
        TreeTop { i_t, xi_t: self.lattice.point(n), n }
    }

    /// Top with `ξ_T` given in lattice units.
    pub fn top(&self, i_t: DyadicInterval, xi_t: f64) -> Result<TreeTop> {
        if !self.lattice.admits(&i_t) {
            return invalid("top interval outside [-2^M∘, 2^M∘)");
        }
        let n = self.lattice.units(xi_t)?;
        if n.abs() > self.lattice.n_max {
            return invalid("top frequency outside the admissible range");
        }
        Ok(self.make_top(i_t, n))
    }

    pub fn in_tree(&self, id: usize, top: &TreeTop) -> bool {
        let d = self.lattice.half_width(&top.i_t);
        let (lo, hi) = self.tree_range(id, d);
        top.i_t.contains(&self.tiles[id].i) && top.n >= lo && top.n <= hi
    }

    pub fn is_l_overlapping_member(&self, id: usize, top: &TreeTop) -> bool {
        let g = self.geom[id];
        top.n >= g.l_lo && top.n < g.l_hi
    }

    /// The maximal tree in `ids` with the given top data.
    pub fn maximal_tree(&self, ids: &[usize], top: &TreeTop) -> Vec<usize> {
        ids.iter().copied().filter(|&id| self.in_tree(id, top)).collect()
    }

    pub fn classify_tree(&self, ids: &[usize], top: &TreeTop) -> TreeKind {
        let over = ids.iter().filter(|&&id| self.is_l_overlapping_member(id, top)).count();
        if over == ids.len() {
            TreeKind::LOverlapping
        } else if over == 0 {
            TreeKind::LLacunary
        } else {
            TreeKind::Any
        }
    }

    fn tree(&self, ids: Vec<usize>, top: TreeTop, kind: Option<TreeKind>) -> Tree {
        let kind = kind.unwrap_or_else(|| self.classify_tree(&ids, &top));
        let energy_contrib = ids.iter().map(|&id| self.weight(id)).sum::<f64>() / top.i_t.length();
        Tree { top, kind, tile_ids: ids, energy_contrib }
    }

    /// All `(top, Σ|⟨f,φ_P⟩|²/|I_T|)` pairs that can be extremal for l-overlapping trees.
    fn energy_candidates(&self, ids: &[usize]) -> Vec<(TreeTop, f64)> {
        let mut out = Vec::new();
        for i_t in self.top_intervals(ids) {
            let d = self.lattice.half_width(&i_t);
            let members: Vec<(i64, i64, f64)> = ids
                .iter()
                .filter(|&&id| i_t.contains(&self.tiles[id].i))
                .map(|&id| {
                    let (lo, hi) = self.overlap_range(id, d);
                    (lo, hi, self.weight(id))
                })
                .filter(|&(lo, hi, _)| lo <= hi)
                .collect();
            let mut cands: Vec<i64> = members.iter().flat_map(|&(lo, hi, _)| [lo, hi]).collect();
            cands.sort_unstable();
            cands.dedup();
            for n in cands {
                let s: f64 = members.iter().filter(|&&(lo, hi, _)| lo <= n && n <= hi).map(|m| m.2).sum();
                out.push((self.make_top(i_t, n), s / i_t.length()));
            }
        }
        out
    }

    /// `sup_T (|I_T|^{-1} Σ_{P∈T} |⟨f,φ_P⟩|²)^{1/2}` over l-overlapping trees in `ids`.
    pub fn energy(&self, ids: &[usize]) -> f64 {
        self.energy_candidates(ids).iter().map(|c| c.1).fold(0.0, f64::max).sqrt()
    }

    /// `(l-overlapping top, energy²)` attaining the energy of `ids`.
    pub fn energy_witness(&self, ids: &[usize]) -> Option<(TreeTop, f64)> {
        let mut best: Option<(TreeTop, f64)> = None;
        for (top, v) in self.energy_candidates(ids) {
            if best.map_or(true, |b| v > b.1) {
                best = Some((top, v));
            }
        }
        best
    }

    fn require_density(&self) -> Result<()> {
        if self.e_measure == 0.0 && self.events.is_empty() && self.r_dual == 1.0 {
            return invalid("density needs E and a linearization (see with_density)");
        }
        Ok(())
    }

    /// Lattice-unit intervals `[s, t]` of `ξ_T` for which `ξ_{k-1}(x) ∈ ω_T`, weighted for `I_T`.
    fn density_events(&self, i_t: &DyadicInterval, d: i64) -> Vec<(i64, i64, f64)> {
        let (c, l) = (i_t.center(), i_t.length());
        let h = self.lattice.spacing();
        self.events
            .iter()
            .filter_map(|e| {
                let base = (e.v / h).floor();
                if !base.is_finite() || base.abs() > 9.0e15 {
                    return None;
                }
                let base = base as i64;
                let (s, t) = (base - d + 1, base + d);
                let w = (1.0 + (e.x - c).abs() / l).powi(-4) / l * e.mass;
                (t >= -self.lattice.n_max && s <= self.lattice.n_max).then_some((s, t, w))
            })
            .collect()
    }

    /// Per top interval, the candidate `(n, integral)` pairs of nonempty trees.
    fn density_candidates(&self, ids: &[usize], i_t: &DyadicInterval) -> Vec<(i64, f64)> {
        let d = self.lattice.half_width(i_t);
        let mut allowed: Vec<(i64, i64)> = ids
            .iter()
            .filter(|&&id| i_t.contains(&self.tiles[id].i))
            .map(|&id| self.tree_range(id, d))
            .filter(|&(lo, hi)| lo <= hi)
            .collect();
        if allowed.is_empty() {
            return Vec::new();
        }
        allowed.sort_unstable();
        let inside = |n: i64| allowed.iter().any(|&(lo, hi)| lo <= n && n <= hi);
        let events = self.density_events(i_t, d);
        let mut cands: Vec<i64> = allowed.iter().map(|a| a.0).collect();
        cands.extend(events.iter().map(|e| e.0).filter(|&s| inside(s)));
        cands.sort_unstable();
        cands.dedup();
        let mut starts: Vec<(i64, f64)> = events.iter().map(|e| (e.0, e.2)).collect();
        let mut ends: Vec<(i64, f64)> = events.iter().map(|e| (e.1, e.2)).collect();
        starts.sort_by_key(|e| e.0);
        ends.sort_by_key(|e| e.0);
        let (mut si, mut ei) = (0, 0);
        let (mut acc_s, mut acc_e) = (0.0, 0.0);
        let mut out = Vec::with_capacity(cands.len());
        for n in cands {
            while si < starts.len() && starts[si].0 <= n {
                acc_s += starts[si].1;
                si += 1;
            }
            while ei < ends.len() && ends[ei].0 < n {
                acc_e += ends[ei].1;
                ei += 1;
            }
            out.push((n, (acc_s - acc_e).max(0.0)));
        }
        out
    }

    /// `sup_T (|I_T|^{-1} ∫_E (1+|x-c(I_T)|/|I_T|)^{-4} Σ_k |a_k|^{r'} 1_{ω_T}(ξ_{k-1}))^{1/r'}`
    /// over nonempty trees in `ids`.
    pub fn density(&self, ids: &[usize]) -> Result<f64> {
        self.require_density()?;
        let mut best = 0.0f64;
        for i_t in self.top_intervals(ids) {
            for (_, v) in self.density_candidates(ids, &i_t) {
                best = best.max(v);
            }
        }
        Ok(best.powf(1.0 / self.r_dual))
    }

    /// Energy selection with threshold `ℰ`: repeatedly removes the maximal tree at the top
    /// of a qualifying l-overlapping tree with the largest top frequency.
    pub fn energy_increment(&self, ids: &[usize], e: f64) -> Result<SelectionReport> {
        if !(e > 0.0) {
            return invalid("energy threshold must be positive");
        }
        let mut residual: Vec<usize> = ids.to_vec();
        let mut trees = Vec::new();
        let mut order_ok = true;
        let mut last_n = i64::MAX;
        let mut iterations = 0;
        while self.energy(&residual) > e / 2.0 {
            iterations += 1;
            let thr = e * e / 4.0;
            let pick = self
                .energy_candidates(&residual)
                .into_iter()
                .filter(|c| c.1 >= thr)
                .max_by(|a, b| {
                    a.0.n
                        .cmp(&b.0.n)
                        .then(a.0.i_t.scale.cmp(&b.0.i_t.scale))
                        .then(b.0.i_t.center().total_cmp(&a.0.i_t.center()))
                })
                .ok_or_else(|| Error::Postcondition("energy above ℰ/2 without a qualifying tree".into()))?
                .0;
            if pick.n > last_n {
                order_ok = false;
            }
            last_n = pick.n;
            let members = self.maximal_tree(&residual, &pick);
            residual.retain(|id| !members.contains(id));
            trees.push(self.tree(members, pick, None));
        }
        let residual_energy = self.energy(&residual);
        if residual_energy > e / 2.0 {
            return Err(Error::Postcondition(format!("residual energy {residual_energy} above ℰ/2")));
        }
        let sum_top_lengths = trees.iter().map(|t| t.top.i_t.length()).sum();
        Ok(SelectionReport { trees, residual, sum_top_lengths, iterations, order_ok })
    }

    /// Density selection with threshold `μ`: picks the largest top interval carrying density
    /// above `μ/2` and removes the maximal trees at `ξ_T` and `ξ_T ± (C₂-1)/(2|I_T|)`.
    pub fn density_increment(&self, ids: &[usize], mu: f64) -> Result<SelectionReport> {
        self.require_density()?;
        if !(mu > 0.0) {
            return invalid("density threshold must be positive");
        }
        let thr = (mu / 2.0).powf(self.r_dual);
        let mut residual: Vec<usize> = ids.to_vec();
        let mut trees = Vec::new();
        let mut mains: Vec<TreeTop> = Vec::new();
        let mut iterations = 0;
        while self.density(&residual)? > mu / 2.0 {
            iterations += 1;
            let mut tops = self.top_intervals(&residual);
            tops.sort_by(|a, b| b.scale.cmp(&a.scale).then(a.center().total_cmp(&b.center())));
            let mut pick: Option<TreeTop> = None;
            for i_t in tops {
                if let Some(p) = pick {
                    if i_t.scale < p.i_t.scale {
                        break;
                    }
                }
                if let Some(&(n, _)) = self.density_candidates(&residual, &i_t).iter().find(|c| c.1 > thr) {
                    if pick.map_or(true, |p| n < p.n) {
                        pick = Some(self.make_top(i_t, n));
                    }
                }
            }
            let top = pick.ok_or_else(|| Error::Postcondition("density above μ/2 without a qualifying tree".into()))?;
            let shift = 2 * self.lattice.half_width(&top.i_t);
            let main = self.maximal_tree(&residual, &top);
            if main.is_empty() {
                return Err(Error::Postcondition("selected density tree is empty".into()));
            }
            let plus_top = self.make_top(top.i_t, top.n + shift);
            let minus_top = self.make_top(top.i_t, top.n - shift);
            let plus: Vec<usize> = self.maximal_tree(&residual, &plus_top).into_iter().filter(|id| !main.contains(id)).collect();
            let minus: Vec<usize> = self
                .maximal_tree(&residual, &minus_top)
                .into_iter()
                .filter(|id| !main.contains(id) && !plus.contains(id))
                .collect();
            residual.retain(|id| !main.contains(id) && !plus.contains(id) && !minus.contains(id));
            trees.push(self.tree(main, top, None));
            for (set, t, kind) in [(plus, plus_top, TreeKind::LPlus), (minus, minus_top, TreeKind::LMinus)] {
                if !set.is_empty() {
                    trees.push(self.tree(set, t, Some(kind)));
                }
            }
            mains.push(top);
        }
        let mut order_ok = true;
        for (a, s) in mains.iter().enumerate() {
            for t in &mains[a + 1..] {
                if s.i_t.intersects(&t.i_t) && s.omega().intersects(&t.omega()) {
                    order_ok = false;
                }
            }
        }
        let sum_top_lengths = trees.iter().map(|t| t.top.i_t.length()).sum();
        Ok(SelectionReport { trees, residual, sum_top_lengths, iterations, order_ok })
    }

    /// Trees with one tile each, for tiles that neither functional can ever select.
    fn singleton_trees(&self, ids: &[usize]) -> Result<Vec<Tree>> {
        ids.iter()
            .map(|&id| {
                let i_t = self.tiles[id].i;
                let d = self.lattice.half_width(&i_t);
                let (lo, hi) = self.tree_range(id, d);
                if lo > hi {
                    return Err(Error::Postcondition(format!("tile {id} admits no top frequency")));
                }
                let (llo, lhi) = self.overlap_range(id, d);
                let n = if llo <= lhi { llo } else { lo };
                Ok(self.tree(vec![id], self.make_top(i_t, n), None))
            })
            .collect()
    }

    /// Observation-style predicates that fail on `tree`, with the l-overlapping and
    /// l-lacunary parts checked separately.
    pub fn observation_violations(&self, tree: &Tree) -> Vec<String> {
        let mut out = Vec::new();
        let top = &tree.top;
        for &id in &tree.tile_ids {
            let p = &self.tiles[id];
            if !top.i_t.contains(&p.i) {
                out.push(format!("tile {id}: I not inside I_T"));
            }
            if !top.omega().is_subset_of(&p.omega_m()) {
                out.push(format!("tile {id}: ω_T not inside ω_m"));
            }
        }
        let over: Vec<usize> = tree.tile_ids.iter().copied().filter(|&id| self.is_l_overlapping_member(id, top)).collect();
        let lac: Vec<usize> = tree.tile_ids.iter().copied().filter(|&id| !self.is_l_overlapping_member(id, top)).collect();
        match tree.kind {
            TreeKind::LOverlapping if !lac.is_empty() => out.push("l-overlapping tree has lacunary tiles".into()),
            TreeKind::LLacunary if !over.is_empty() => out.push("l-lacunary tree has overlapping tiles".into()),
            _ => {}
        }
        for &a in &over {
            for &b in &over {
                let (p, q) = (&self.tiles[a], &self.tiles[b]);
                if q.omega_u.scale < p.omega_u.scale
                    && p.omega_u_interval().dilate(C3).intersects(&q.omega_u_interval().dilate(C2))
                {
                    out.push(format!("(i) fails for tiles {a}, {b}"));
                }
            }
        }
        for &a in &lac {
            for &b in &lac {
                let (p, q) = (&self.tiles[a], &self.tiles[b]);
                if q.omega_u.scale < p.omega_u.scale && p.omega_l().dilate(C3).intersects(&q.omega_l().dilate(C3)) {
                    out.push(format!("(ii) fails for tiles {a}, {b}"));
                }
            }
        }
        for (x, &a) in tree.tile_ids.iter().enumerate() {
            for &b in &tree.tile_ids[x + 1..] {
                let (p, q) = (&self.tiles[a], &self.tiles[b]);
                if p.omega_u.scale == q.omega_u.scale && p.i.intersects(&q.i) {
                    out.push(format!("(iii) fails for tiles {a}, {b}"));
                }
            }
        }
        out
    }

    /// Checks the tree axioms for `ids` under `top`.
    pub fn is_tree(&self, ids: &[usize], top: &TreeTop) -> bool {
        ids.iter().all(|&id| self.in_tree(id, top))
    }

    pub fn full_decomposition(&self, second_pass: bool) -> Result<Decomposition> {
        let all = self.all_ids();
        let f_measure = self.f_measure;
        let mut levels = Vec::new();
        let mut fallback = Vec::new();
        let mut residual = all.clone();
        let e0 = self.energy(&all);
        let d0 = self.density(&all)?;
        let root_f = f_measure.sqrt();
        let c0 = if root_f > 0.0 { (e0 / root_f).max(d0) } else { d0 };
        let rd = self.r_dual;
        let e_thr = |j: u32| c0 * pow2(-(j as i32)).sqrt() * root_f;
        let d_thr = |j: u32| c0 * 2f64.powf(-(j as f64) / rd);
        let mut j = 0u32;
        while !residual.is_empty() {
            let e = self.energy(&residual);
            let d = self.density(&residual)?;
            if e == 0.0 && d == 0.0 || c0 == 0.0 {
                fallback = self.singleton_trees(&residual)?;
                residual.clear();
                break;
            }
            // skip levels at which neither selection can fire
            while !(e > e_thr(j) / 2.0 || d > d_thr(j) / 2.0) {
                j += 1;
            }
            let input_length: f64 = residual.iter().map(|&id| self.tiles[id].i.length()).sum();
            let er = self.energy_increment(&residual, e_thr(j))?;
            let energy_bmo = bmo_check(&er.trees, 0)?;
            let dr = self.density_increment(&er.residual, d_thr(j))?;
            residual = dr.residual.clone();
            let sum: f64 = er.sum_top_lengths + dr.sum_top_lengths;
            levels.push(DecompositionLevel {
                j,
                energy_threshold: e_thr(j),
                density_threshold: d_thr(j),
                energy_trees: er.trees,
                density_trees: dr.trees,
                sum_top_lengths: sum,
                sum_ratio: sum / pow2(j as i32),
                disjoint_density_tops: dr.order_ok,
                input_length,
                energy_bmo,
            });
            j += 1;
        }
        let mut refined = Vec::new();
        if second_pass {
            for level in &levels {
                let family: Vec<&Tree> = level.trees().collect();
                refined.extend(self.refine_level(level.j, &family, level.energy_threshold)?);
            }
        }
        Ok(Decomposition { c0, f_measure, e_measure: self.e_measure, r_dual: self.r_dual, levels, fallback, second_pass: refined })
    }

    /// `𝕋_j = ⋃_k 𝕋_{j,k}` by energy selection at `ℰ_j 2^{-k/2}`.
    fn refine_level(&self, j: u32, family: &[&Tree], e_j: f64) -> Result<Vec<RefinedLevel>> {
        let mut out = Vec::new();
        let mut residual: Vec<usize> = family.iter().flat_map(|t| t.tile_ids.iter().copied()).collect();
        let mut k = 0u32;
        // Σ|I_T'| over the trees of 𝕋_j that still meet the residual
        let cover = |res: &[usize]| -> f64 {
            let live: std::collections::HashSet<usize> = res.iter().copied().collect();
            family.iter().filter(|t| t.tile_ids.iter().any(|id| live.contains(id))).map(|t| t.top.i_t.length()).sum()
        };
        while !residual.is_empty() {
            let e = self.energy(&residual);
            let covering = cover(&residual);
            if e == 0.0 {
                let trees = self.singleton_trees(&residual)?;
                residual.clear();
                out.push(self.refined(j, k, trees, e_j * pow2(-(k as i32)).sqrt(), covering)?);
                break;
            }
            while !(e > e_j * pow2(-(k as i32)).sqrt() / 2.0) {
                k += 1;
            }
            let thr = e_j * pow2(-(k as i32)).sqrt();
            let rep = self.energy_increment(&residual, thr)?;
            residual = rep.residual;
            out.push(self.refined(j, k, rep.trees, thr, covering)?);
            k += 1;
        }
        Ok(out)
    }

    fn refined(&self, j: u32, k: u32, trees: Vec<Tree>, thr: f64, covering: f64) -> Result<RefinedLevel> {
        let sum_top_lengths: f64 = trees.iter().map(|t| t.top.i_t.length()).sum();
        let union_ratio = if covering > 0.0 { sum_top_lengths / covering } else { 0.0 };
        let bmo = bmo_check(&trees, 0)?;
        let scale = pow2((j + k) as i32) / self.f_measure.max(f64::MIN_POSITIVE);
        Ok(RefinedLevel { j, k, energy_threshold: thr, trees, sum_top_lengths, bmo_ratio: bmo / scale, union_ratio })
    }

    /// `‖1_E Σ_{P∈T} ⟨f,φ_P⟩φ_P a_P‖_q` against `ℰ μ^{min(1,r'/q)} |I_T|^{1/q}`.
    pub fn tree_estimate_probe(
        &self,
        tree: &Tree,
        f: &SampledFunction,
        e: &SampledFunction,
        lin: &LinearizationData,
        q: f64,
    ) -> Result<TreeProbe> {
        if !(1.0..=2.0).contains(&q) {
            return invalid("tree estimate probe needs 1 ≤ q ≤ 2");
        }
        let tiles: Vec<Multitile> = tree.tile_ids.iter().map(|&id| self.tiles[id]).collect();
        let lhs = model_operator(&tiles, f, lin, Some(e))?.lp_norm(q);
        let energy = self.energy(&tree.tile_ids);
        let density = self.density(&tree.tile_ids)?;
        let rhs = energy * density.powf((self.r_dual / q).min(1.0)) * tree.top.i_t.length().powf(1.0 / q);
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
        Ok(TreeProbe { lhs, rhs, ratio, energy, density })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeProbe {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub energy: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionLevel {
    pub j: u32,
    pub energy_threshold: f64,
    pub density_threshold: f64,
    pub energy_trees: Vec<Tree>,
    pub density_trees: Vec<Tree>,
    pub sum_top_lengths: f64,
    /// `Σ|I_T| / 2^j`.
    pub sum_ratio: f64,
    pub disjoint_density_tops: bool,
    /// `Σ|I_P|` over the tiles entering this level.
    pub input_length: f64,
    /// `‖Σ 1_{I_T}‖_BMO` over the energy trees.
    pub energy_bmo: f64,
}

/// Empirical constants in the tree-counting estimates of one level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TreeConstants {
    /// `Σ_{energy trees} |I_T| · ℰ² / |F|`.
    pub energy_length: f64,
    /// `Σ_{density trees} |I_T| · μ^{r'} / |E|`.
    pub density_length: f64,
    /// `Σ_{T∈𝕋} |I_T| / Σ_{T'∈𝕋'} |I_{T'}|` when the input is covered by a known family `𝕋'`.
    pub union_length: f64,
    /// `‖Σ 1_{I_T}‖_BMO · ℰ²` over energy trees.
    pub energy_bmo: f64,
}

impl TreeConstants {
    pub fn max(self, o: TreeConstants) -> TreeConstants {
        TreeConstants {
            energy_length: self.energy_length.max(o.energy_length),
            density_length: self.density_length.max(o.density_length),
            union_length: self.union_length.max(o.union_length),
            energy_bmo: self.energy_bmo.max(o.energy_bmo),
        }
    }
}

impl DecompositionLevel {
    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.energy_trees.iter().chain(&self.density_trees)
    }

    pub fn constants(&self, f_measure: f64, e_measure: f64, r_dual: f64) -> TreeConstants {
        let len = |ts: &[Tree]| ts.iter().map(|t| t.top.i_t.length()).sum::<f64>();
        let (el, dl) = (len(&self.energy_trees), len(&self.density_trees));
        let e2 = self.energy_threshold * self.energy_threshold;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        TreeConstants {
            energy_length: ratio(el * e2, f_measure),
            density_length: ratio(dl * self.density_threshold.powf(r_dual), e_measure),
            union_length: ratio(el, self.input_length),
            energy_bmo: self.energy_bmo * e2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedLevel {
    pub j: u32,
    pub k: u32,
    pub energy_threshold: f64,
    pub trees: Vec<Tree>,
    pub sum_top_lengths: f64,
    /// `‖Σ 1_{I_T}‖_BMO / (2^{j+k} |F|^{-1})`.
    pub bmo_ratio: f64,
    /// `Σ_{T∈𝕋_{j,k}} |I_T|` over `Σ|I_{T'}|` for the trees `T'` of `𝕋_j` covering the input.
    pub union_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub c0: f64,
    pub f_measure: f64,
    pub e_measure: f64,
    pub r_dual: f64,
    pub levels: Vec<DecompositionLevel>,
    /// Tiles with zero energy and zero density, one tree each.
    pub fallback: Vec<Tree>,
    pub second_pass: Vec<RefinedLevel>,
}

impl Decomposition {
    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.levels.iter().flat_map(|l| l.trees()).chain(&self.fallback)
    }

    /// Largest constants over all levels; the union constant comes from the second pass when present.
    pub fn constants(&self) -> TreeConstants {
        let mut c = self
            .levels
            .iter()
            .map(|l| l.constants(self.f_measure, self.e_measure, self.r_dual))
            .fold(TreeConstants::default(), TreeConstants::max);
        if !self.second_pass.is_empty() {
            c.union_length = self.second_pass.iter().map(|r| r.union_ratio).fold(0.0, f64::max);
        }
        c
    }

    pub fn max_sum_ratio(&self) -> f64 {
        self.levels.iter().map(|l| l.sum_ratio).fold(0.0, f64::max)
    }

    /// `j,k,num_trees,sum_IT,bmo_ratio` rows.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("j,k,num_trees,sum_IT,bmo_ratio\n");
        for r in &self.second_pass {
            s.push_str(&format!("{},{},{},{},{}\n", r.j, r.k, r.trees.len(), r.sum_top_lengths, r.bmo_ratio));
        }
        s
    }
}

/// Dyadic BMO norm of `Σ 1_{[a,b)}` over all dyadic intervals of the line.
pub fn dyadic_bmo(intervals: &[(f64, f64)]) -> Result<f64> {
    if intervals.is_empty() {
        return Ok(0.0);
    }
    let min_len = intervals.iter().map(|&(a, b)| b - a).fold(f64::INFINITY, f64::min);
    if !(min_len > 0.0) {
        return invalid("intervals must have positive length");
    }
    let mut delta = pow2(min_len.log2().floor() as i32 - 1);
    let on_lattice = |d: f64| intervals.iter().all(|&(a, b)| (a / d).fract() == 0.0 && (b / d).fract() == 0.0);
    for _ in 0..64 {
        if on_lattice(delta) {
            break;
        }
        delta /= 2.0;
    }
    let reach = intervals.iter().map(|&(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
    let mut span = delta;
    while span < reach {
        span *= 2.0;
    }
    let cells = (span / delta) as usize;
    if cells > MAX_BMO_CELLS {
        return Err(Error::TooLarge(format!("{cells} lattice cells")));
    }
    let mut best = 0.0f64;
    for sign in [1.0, -1.0] {
        let mut diff = vec![0i64; cells + 1];
        for &(a, b) in intervals {
            // the half [0, span) or its mirror [-span, 0)
            let (lo, hi) = if sign > 0.0 { (a.max(0.0), b.max(0.0)) } else { ((-b).max(0.0), (-a).max(0.0)) };
            if lo >= hi {
                continue;
            }
            let (ul, uh) = (lo / delta, hi / delta);
            if ul.fract() != 0.0 || uh.fract() != 0.0 {
                return invalid("interval endpoints must sit on a dyadic lattice");
            }
            diff[ul as usize] += 1;
            diff[uh as usize] -= 1;
        }
        let mut n = Vec::with_capacity(cells);
        let mut acc = 0i64;
        for d in &diff[..cells] {
            acc += d;
            n.push(acc as f64);
        }
        let mut block = 2;
        while block <= cells {
            for chunk in n.chunks(block) {
                let mean = chunk.iter().sum::<f64>() / block as f64;
                let osc = chunk.iter().map(|v| (v - mean).abs()).sum::<f64>() / block as f64;
                best = best.max(osc);
            }
            block *= 2;
        }
        // ancestors [0, 2^t span) of the whole half
        let total: f64 = n.iter().sum();
        for t in 1..=24 {
            let size = cells as f64 * pow2(t);
            let mean = total / size;
            let inner: f64 = n.iter().map(|v| (v - mean).abs()).sum();
            best = best.max((inner + (size - cells as f64) * mean) / size);
        }
    }
    Ok(best)
}

/// `‖Σ_T 1_{2^ℓ I_T}‖_BMO` with `2^ℓ I_T` the concentric dilate.
pub fn bmo_check(trees: &[Tree], ell: u32) -> Result<f64> {
    let ivs: Vec<(f64, f64)> = trees
        .iter()
        .map(|t| {
            let (c, h) = (t.top.i_t.center(), 0.5 * pow2(ell as i32) * t.top.i_t.length());
            (c - h, c + h)
        })
        .collect();
    dyadic_bmo(&ivs)
}

/// `sup` over dyadic intervals containing each grid cell of the mean of `|f|`.
pub fn dyadic_maximal(f: &SampledFunction) -> Result<SampledFunction> {
    let n = f.grid_count();
    let (left, len) = (f.domain().left(), f.domain().length());
    let aligned = len.log2().fract() == 0.0 && (left / len).fract() == 0.0;
    if !n.is_power_of_two() || !aligned {
        return Err(Error::Domain("dyadic maximal function needs a dyadic-aligned power-of-two grid".into()));
    }
    let abs = f.abs_values();
    let mut best = abs.clone();
    let mut block = 2;
    while block <= n {
        for (b, chunk) in abs.chunks(block).enumerate() {
            let mean = chunk.iter().sum::<f64>() / block as f64;
            for v in &mut best[b * block..(b + 1) * block] {
                *v = v.max(mean);
            }
        }
        block *= 2;
    }
    SampledFunction::from_reals(f.domain(), &best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub n_tiles: usize,
    /// Grid points on `[-length/2, length/2)`.
    pub grid: usize,
    pub length: f64,
    pub r: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams { n_tiles: 50, grid: 2048, length: 32.0, r: 3.0 }
    }
}

/// A random separated decomposition input: tiles, `f = 1_F e^{2πiηx}`, `E` and a linearization.
#[derive(Debug, Clone)]
pub struct Instance {
    pub tiles: Vec<Multitile>,
    pub f: SampledFunction,
    pub e: SampledFunction,
    pub lin: LinearizationData,
    pub r: Exponent,
}

impl Instance {
    pub fn system(&self) -> Result<TileSystem> {
        TileSystem::new(self.tiles.clone(), &self.f)?.with_density(&self.e, &self.lin, self.r)
    }
}

/// One to three intervals of total measure in `[1, 2)`.
fn random_intervals<G: Rng>(rng: &mut G, domain: Domain) -> Vec<(f64, f64)> {
    let (left, len) = (domain.left(), domain.length());
    let measure = rng.gen_range(1.0..2.0);
    let pieces = rng.gen_range(1..=3);
    let w = measure / pieces as f64;
    (0..pieces)
        .map(|_| {
            let a = left + rng.gen_range(0.0..len - w);
            (a, a + w)
        })
        .collect()
}

fn indicator(domain: Domain, n: usize, ivs: &[(f64, f64)]) -> Result<SampledFunction> {
    SampledFunction::from_real_fn(domain, n, |x| if ivs.iter().any(|&(a, b)| x >= a && x < b) { 1.0 } else { 0.0 })
}

/// Tiles at `ω_u` scales `0` and `-5` with `ω_u` indices in one residue class mod 26 and one
/// 1- or 2-index class, so that the family is separated.
///
/// `f = 1_F e^{2πiηx}` with `η` the centre of a scale-0 `ω_u`; most scale-0 tiles sit at that
/// frequency with time intervals meeting `F`, so that the family sees a fixed share of `f`.
pub fn random_instance<G: Rng>(rng: &mut G, params: InstanceParams) -> Result<Instance> {
    let half = params.length / 2.0;
    let domain = Domain::Compact { left: -half, right: half };
    let rho = R[rng.gen_range(0..7)];
    let parity = if rho.side == Side::Left { 0 } else { 1 };
    let c = 2 * rng.gen_range(0..13) + parity;
    let f_ivs = random_intervals(rng, domain);
    let q_eta = rng.gen_range(-1..=0);
    let mut tiles: Vec<Multitile> = Vec::new();
    let mut guard = 0;
    while tiles.len() < params.n_tiles {
        guard += 1;
        if guard > 100 * params.n_tiles {
            return invalid("cannot place that many distinct tiles");
        }
        let near = rng.gen_bool(0.8);
        let (k, q) = if rng.gen_bool(0.75) {
            (0, if near { q_eta } else { rng.gen_range(-1..=0) })
        } else {
            (-5, rng.gen_range(-4..=3))
        };
        let u = DyadicInterval::new(k, c + 26 * q);
        let scale = -1 - k;
        let i = if k == 0 && near {
            let (a, b) = f_ivs[rng.gen_range(0..f_ivs.len())];
            DyadicInterval::containing(rng.gen_range(a..b), scale)
        } else {
            let slots = (params.length / pow2(scale)) as i64;
            let first = (-half / pow2(scale)) as i64;
            DyadicInterval::new(scale, first + rng.gen_range(0..slots.max(1)))
        };
        let p = build_multitile(i, u, rho)?;
        if !tiles.contains(&p) {
            tiles.push(p);
        }
    }
    let f_set = indicator(domain, params.grid, &f_ivs)?;
    let eta = DyadicInterval::new(0, c + 26 * q_eta).center();
    let wave = SampledFunction::from_fn(domain, params.grid, |x| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * eta * x))?;
    let f = wave.with_samples(wave.samples().iter().zip(f_set.samples()).map(|(a, b)| a * b).collect())?;
    let e_ivs = random_intervals(rng, domain);
    let e = indicator(domain, params.grid, &e_ivs)?;
    let r = Exponent::Finite(params.r);
    let rd = r.conjugate().value();
    let mut xi = Vec::with_capacity(params.grid);
    let mut a = Vec::with_capacity(params.grid);
    for _ in 0..params.grid {
        let k = rng.gen_range(1..=3);
        let anchor = tiles[rng.gen_range(0..tiles.len())];
        let l = anchor.omega_l();
        let mut cuts = vec![rng.gen_range(l.lo..l.hi)];
        for _ in 0..k {
            let last = *cuts.last().unwrap();
            cuts.push(last + rng.gen_range(0.05..3.0) * anchor.omega_u.length() * 4.0);
        }
        let raw: Vec<Complex64> = (0..k).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm: f64 = raw.iter().map(|z| z.norm().powf(rd)).sum::<f64>().powf(1.0 / rd);
        a.push(raw.iter().map(|z| z / norm).collect());
        xi.push(cuts);
    }
    let lin = LinearizationData::new(xi, a, r)?;
    Ok(Instance { tiles, f, e, lin, r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_bounds() {
        let p = build_multitile(DyadicInterval::new(-1, 3), DyadicInterval::new(0, 2), R[0]).unwrap();
        let lat = TopLattice::for_tiles(&[p]).unwrap();
        // ω_h = [4,5), ω_l = [-1,0)
        assert_eq!(lat.m_circ, 3);
        assert_eq!(lat.spacing(), pow2(-13));
    }

    #[test]
    fn bmo_of_one_indicator() {
        let v = dyadic_bmo(&[(0.0, 1.0)]).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
        assert_eq!(dyadic_bmo(&[]).unwrap(), 0.0);
    }

    #[test]
    fn maximal_of_constant() {
        let f = SampledFunction::from_real_fn(Domain::Periodic, 64, |_| 2.5).unwrap();
        let m = dyadic_maximal(&f).unwrap();
        assert!(m.samples().iter().all(|z| (z.re - 2.5).abs() < 1e-15));
    }
}
