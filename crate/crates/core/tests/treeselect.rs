use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcarleson::grid::{Domain, DyadicInterval, SampledFunction};
use vcarleson::timefreq::{build_multitile, Multitile, R};
use vcarleson::treeselect::{
    bmo_check, dyadic_bmo, dyadic_maximal, random_instance, InstanceParams, SelectionReport, TileSystem, TreeKind,
};

fn small_params() -> InstanceParams {
    InstanceParams { n_tiles: 24, grid: 2048, length: 32.0, r: 3.0 }
}

fn check_partition(input: &[usize], rep: &SelectionReport) {
    let mut seen = BTreeSet::new();
    for t in &rep.trees {
        for &id in &t.tile_ids {
            assert!(seen.insert(id), "tile {id} in two trees");
        }
    }
    for &id in &rep.residual {
        assert!(seen.insert(id), "residual tile {id} also in a tree");
    }
    assert_eq!(seen, input.iter().copied().collect::<BTreeSet<_>>());
}

#[test]
fn single_tile_energy() {
    let p = build_multitile(DyadicInterval::new(-2, 5), DyadicInterval::new(1, 2), R[0]).unwrap();
    let c = Complex64::new(0.3, -0.4);
    let sys = TileSystem::with_coefficients(vec![p], vec![c], 1.0).unwrap();
    let e = sys.energy(&[0]);
    assert!((e - 0.5 / 0.25f64.sqrt()).abs() < 1e-12, "{e}");
    let rep = sys.energy_increment(&[0], e).unwrap();
    assert_eq!(rep.trees.len(), 1);
    assert!(rep.trees[0].top.i_t.contains(&p.i));
    assert_eq!(rep.trees[0].tile_ids, vec![0]);
    assert_eq!(rep.trees[0].kind, TreeKind::LOverlapping);
    let rep = sys.energy_increment(&[0], 2.0 * e + 1e-9).unwrap();
    assert!(rep.trees.is_empty());
}

#[test]
fn energy_dominates_every_sampled_top() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let inst = random_instance(&mut rng, small_params()).unwrap();
        let sys = inst.system().unwrap();
        let ids = sys.all_ids();
        let e2 = sys.energy(&ids).powi(2);
        let (top, best) = sys.energy_witness(&ids).unwrap();
        assert!((best - e2).abs() <= 1e-12 * e2.max(1.0));
        let members = sys.maximal_tree(&ids, &top);
        assert!(members.iter().all(|&id| sys.is_l_overlapping_member(id, &top)) || members.is_empty());
        let h = sys.lattice().spacing();
        for _ in 0..400 {
            let p: &Multitile = &sys.tiles()[rng.gen_range(0..ids.len())];
            let scale = rng.gen_range(p.i.scale..=sys.lattice().m_circ.min(p.i.scale + 4));
            let i_t = p.i.ancestor(scale);
            let w = p.omega_m();
            let xi = ((rng.gen_range(w.lo..w.hi)) / h).round() * h;
            let top = sys.top(i_t, xi).unwrap();
            let tree: Vec<usize> = sys
                .maximal_tree(&ids, &top)
                .into_iter()
                .filter(|&id| sys.is_l_overlapping_member(id, &top))
                .collect();
            let v: f64 = tree.iter().map(|&id| sys.coefficients()[id].norm_sqr()).sum::<f64>() / i_t.length();
            assert!(v <= e2 * (1.0 + 1e-12), "sampled top beats the energy: {v} > {e2}");
        }
    }
}

#[test]
fn increments_meet_their_postconditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..6 {
        let inst = random_instance(&mut rng, small_params()).unwrap();
        let sys = inst.system().unwrap();
        let ids = sys.all_ids();
        let e = sys.energy(&ids);
        let rep = sys.energy_increment(&ids, e * 0.6).unwrap();
        check_partition(&ids, &rep);
        assert!(sys.energy(&rep.residual) <= 0.3 * e);
        assert!(rep.order_ok, "top frequencies increased");
        for t in &rep.trees {
            assert!(sys.is_tree(&t.tile_ids, &t.top));
            assert!(sys.observation_violations(t).is_empty(), "{:?}", sys.observation_violations(t));
        }
        let mu = sys.density(&ids).unwrap();
        let rep = sys.density_increment(&ids, mu * 0.7).unwrap();
        check_partition(&ids, &rep);
        assert!(sys.density(&rep.residual).unwrap() <= 0.35 * mu);
        assert!(rep.order_ok, "density tops overlap");
        for t in &rep.trees {
            assert!(sys.is_tree(&t.tile_ids, &t.top));
        }
    }
}

#[test]
fn decomposition_covers_every_tile() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let inst = random_instance(&mut rng, small_params()).unwrap();
        let sys = inst.system().unwrap();
        let dec = sys.full_decomposition(true).unwrap();
        let mut seen = BTreeSet::new();
        for t in dec.trees() {
            assert!(sys.is_tree(&t.tile_ids, &t.top));
            for &id in &t.tile_ids {
                assert!(seen.insert(id));
            }
        }
        assert_eq!(seen.len(), sys.tiles().len());
        let refined: usize = dec.second_pass.iter().flat_map(|l| &l.trees).map(|t| t.tile_ids.len()).sum();
        let in_levels: usize = dec.levels.iter().flat_map(|l| l.trees()).map(|t| t.tile_ids.len()).sum();
        assert_eq!(refined, in_levels);
        assert!(dec.levels.windows(2).all(|w| w[0].j < w[1].j));
        assert!(dec.summary_csv().starts_with("j,k,num_trees,sum_IT,bmo_ratio\n"));
        let json = serde_json::to_value(dec.trees().next().unwrap()).unwrap();
        assert!(json["top"]["I_T"].is_object() && json["top"]["xi_T"].is_number());
    }
}

fn brute_bmo(ivs: &[(f64, f64)]) -> f64 {
    let min = ivs.iter().map(|&(a, b)| b - a).fold(f64::INFINITY, f64::min);
    let fine = min.log2().floor() as i32 - 1;
    let reach = ivs.iter().map(|&(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
    let top = reach.log2().ceil() as i32 + 4;
    let count = |x: f64| ivs.iter().filter(|&&(a, b)| x >= a && x < b).count() as f64;
    let mut best = 0.0f64;
    for s in fine + 1..=top {
        let len = 2f64.powi(s);
        let n_cells = 1usize << (s - fine);
        let width = 2f64.powi(fine);
        let m_lo = (-(2f64.powi(top)) / len).floor() as i64;
        let m_hi = (2f64.powi(top) / len).ceil() as i64;
        for m in m_lo..m_hi {
            let vals: Vec<f64> = (0..n_cells).map(|c| count(m as f64 * len + (c as f64 + 0.5) * width)).collect();
            let mean = vals.iter().sum::<f64>() / n_cells as f64;
            best = best.max(vals.iter().map(|v| (v - mean).abs()).sum::<f64>() / n_cells as f64);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bmo_matches_brute_force(raw in prop::collection::vec((-3i32..=1, -8i64..8), 1..6)) {
        let ivs: Vec<(f64, f64)> = raw
            .iter()
            .map(|&(k, m)| {
                let d = DyadicInterval::new(k, m);
                (d.left(), d.right())
            })
            .collect();
        let fast = dyadic_bmo(&ivs).unwrap();
        let slow = brute_bmo(&ivs);
        prop_assert!((fast - slow).abs() < 1e-12, "fast {} slow {}", fast, slow);
    }

    #[test]
    fn dyadic_maximal_matches_direct_averages(vals in prop::collection::vec(-5.0f64..5.0, 32)) {
        let dom = Domain::Compact { left: 0.0, right: 4.0 };
        let f = SampledFunction::from_reals(dom, &vals).unwrap();
        let m = dyadic_maximal(&f).unwrap();
        for j in 0..32 {
            let mut best = 0.0f64;
            for s in 0..=5u32 {
                let b = 1usize << s;
                let start = (j / b) * b;
                let avg = vals[start..start + b].iter().map(|v| v.abs()).sum::<f64>() / b as f64;
                best = best.max(avg);
            }
            prop_assert!((m.samples()[j].re - best).abs() < 1e-12);
        }
    }
}

#[test]
fn bmo_of_dilated_tops_grows_with_dilation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = random_instance(&mut rng, small_params()).unwrap();
    let sys = inst.system().unwrap();
    let rep = sys.energy_increment(&sys.all_ids(), sys.energy(&sys.all_ids()) * 0.2).unwrap();
    let b0 = bmo_check(&rep.trees, 0).unwrap();
    let b2 = bmo_check(&rep.trees, 2).unwrap();
    assert!(b0 > 0.0 && b2 > 0.0);
}

#[test]
fn maximal_requires_dyadic_grid() {
    let f = SampledFunction::from_real_fn(Domain::Compact { left: 0.5, right: 3.5 }, 32, |x| x).unwrap();
    assert!(dyadic_maximal(&f).is_err());
}

#[test]
fn tree_probe_is_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inst = random_instance(&mut rng, small_params()).unwrap();
    let sys = inst.system().unwrap();
    let dec = sys.full_decomposition(false).unwrap();
    for t in dec.trees().take(5) {
        let probe = sys.tree_estimate_probe(t, &inst.f, &inst.e, &inst.lin, 1.5).unwrap();
        assert!(probe.lhs.is_finite() && probe.rhs.is_finite());
    }
}

#[test]
fn three_index_tiles_are_rejected() {
    let rho = R.iter().copied().find(|r| r.class == 3).unwrap();
    let side_m = if rho.side == vcarleson::timefreq::Side::Left { 0 } else { 1 };
    let p = build_multitile(DyadicInterval::new(-1, 0), DyadicInterval::new(0, side_m), rho).unwrap();
    assert!(TileSystem::with_coefficients(vec![p], vec![Complex64::new(1.0, 0.0)], 1.0).is_err());
}
