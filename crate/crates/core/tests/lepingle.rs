use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcarleson::grid::{Domain, SampledFunction};
use vcarleson::lepingle::{
    dyadic_averages, martingale_variation, psi_profile, random_step_function, smooth_family, square_function,
    square_function_values, variation_ratio,
};
use vcarleson::treeselect::dyadic_maximal;
use vcarleson::varnorm::VariationParams;

fn unit() -> Domain {
    Domain::Compact { left: 0.0, right: 1.0 }
}

#[test]
fn constants_are_fixed_points() {
    let f = SampledFunction::from_real_fn(Domain::Periodic, 256, |_| 1.75).unwrap();
    let e = dyadic_averages(&f, -8..=0).unwrap();
    assert!(e.levels.iter().flatten().all(|&v| v == 1.75));
    let a = smooth_family(&f, -8..=0).unwrap();
    assert!(a.levels.iter().flatten().all(|&v| (v - 1.75).abs() < 1e-13));
    let v = martingale_variation(&f, VariationParams::new(2.0).unwrap(), -8..=0).unwrap();
    assert!(v.samples().iter().all(|z| z.re == 0.0));
}

#[test]
fn tower_identity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let f = random_step_function(&mut rng, Domain::Periodic, 512, 512).unwrap();
        let full = dyadic_averages(&f, -9..=0).unwrap();
        for k in -9..=-1 {
            let ek = SampledFunction::from_reals(Domain::Periodic, full.level(k).unwrap()).unwrap();
            let again = dyadic_averages(&ek, -9..=0).unwrap();
            for k2 in k..=0 {
                assert_eq!(again.level(k2).unwrap(), full.level(k2).unwrap());
            }
            assert_eq!(again.level(k).unwrap(), full.level(k).unwrap(), "idempotence at {k}");
        }
    }
}

#[test]
fn indicator_variation_matches_geometric_series() {
    // 1_[0, 2^-m) at x = 0: levels 1 up to 2^-m, then halving each step
    for m in 1..6 {
        let f = SampledFunction::from_real_fn(unit(), 1024, |x| if x < 2f64.powi(-m) { 1.0 } else { 0.0 }).unwrap();
        let k_max = 2;
        let last = 2f64.powi(-m - k_max);
        for r in [1.0, 2.0, 3.5] {
            let v = martingale_variation(&f, VariationParams::new(r).unwrap(), -10..=k_max).unwrap();
            assert!((v.samples()[0].re - (1.0 - last)).abs() < 1e-15, "m {m} r {r}");
        }
    }
}

#[test]
fn misaligned_grids_are_rejected() {
    let f = SampledFunction::from_real_fn(Domain::Compact { left: 0.5, right: 1.5 }, 64, |x| x).unwrap();
    assert!(dyadic_averages(&f, -6..=0).is_err());
    let g = SampledFunction::from_real_fn(unit(), 64, |x| x).unwrap();
    assert!(dyadic_averages(&g, -7..=0).is_err());
    let p = SampledFunction::from_real_fn(Domain::Periodic, 64, |x| x).unwrap();
    assert!(dyadic_averages(&p, -6..=1).is_err());
}

#[test]
fn averages_below_dyadic_maximal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let f = random_step_function(&mut rng, unit(), 256, 64).unwrap();
        let f = f.map(|z| num_complex::Complex64::new(z.re.abs(), 0.0));
        let m = dyadic_maximal(&f).unwrap();
        let e = dyadic_averages(&f, -8..=0).unwrap();
        for level in &e.levels {
            for (v, mx) in level.iter().zip(m.samples()) {
                assert!(*v <= mx.re * (1.0 + 1e-14));
            }
        }
    }
}

#[test]
fn smooth_family_limits() {
    let f = SampledFunction::from_real_fn(Domain::Periodic, 1024, |x| (2.0 * std::f64::consts::PI * 3.0 * x).sin()).unwrap();
    let a = smooth_family(&f, -10..=0).unwrap();
    let err = |k: i32| {
        let l = a.level(k).unwrap();
        (l.iter().zip(f.samples()).map(|(x, y)| (x - y.re).powi(2)).sum::<f64>() / 1024.0).sqrt()
    };
    assert!(err(-10) < 1e-15);
    assert!(err(-9) < err(-6) && err(-6) < err(-3));
    let sup = |k: i32| a.level(k).unwrap().iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(sup(-4) > sup(-2) && sup(-2) > sup(0), "{} {} {}", sup(-4), sup(-2), sup(0));
    assert!(sup(0) < 0.05, "{}", sup(0));
}

#[test]
fn square_function_of_haar_matches_direct_sum() {
    let n = 256usize;
    let dx = 1.0 / n as f64;
    // left child of [1/4, 1/2) minus right child
    let f = SampledFunction::from_real_fn(unit(), n, |x| {
        if (0.25..0.375).contains(&x) {
            1.0
        } else if (0.375..0.5).contains(&x) {
            -1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let vals = f.real_parts();
    let fast = square_function_values(&f, -8..=0).unwrap();
    let mut direct = vec![0.0f64; n];
    for k in -8..=0 {
        let scale = 2f64.powi(k);
        let block = (scale / dx) as usize;
        let offsets: Vec<i64> = (-(n as i64)..=n as i64).collect();
        let w: Vec<f64> = offsets.iter().map(|&j| psi_profile(j as f64 * dx / scale)).collect();
        let total: f64 = w.iter().sum();
        for (i, d) in direct.iter_mut().enumerate() {
            let e = if block == 0 || block == 1 {
                vals[i]
            } else {
                let s = (i / block) * block;
                vals[s..s + block].iter().sum::<f64>() / block as f64
            };
            let mut a = 0.0;
            for (o, wt) in offsets.iter().zip(&w) {
                let src = i as i64 - o;
                if *wt > 0.0 && (0..n as i64).contains(&src) {
                    a += vals[src as usize] * wt;
                }
            }
            let a = if total > 0.0 { a / total } else { vals[i] };
            *d += (a - e).powi(2);
        }
    }
    for (x, y) in fast.iter().zip(&direct) {
        assert!((x - y.sqrt()).abs() < 1e-12, "{x} vs {}", y.sqrt());
    }
    let mass_inside: f64 = fast[48..160].iter().map(|v| v * v).sum();
    let mass_all: f64 = fast.iter().map(|v| v * v).sum();
    assert!(mass_inside > 0.8 * mass_all);
    assert_eq!(square_function(&SampledFunction::zeros(unit(), n).unwrap(), -8..=0, 2.0).unwrap().value, 0.0);
}

#[test]
fn ratios_stay_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let vp = VariationParams::new(3.0).unwrap();
    let mut sup = 0.0f64;
    let mut sq = 0.0f64;
    for _ in 0..20 {
        let f = random_step_function(&mut rng, Domain::Periodic, 1024, 128).unwrap();
        sup = sup.max(variation_ratio(&f, vp, -10..=0).unwrap());
        sq = sq.max(square_function(&f, -10..=0, 2.0).unwrap().ratio);
    }
    assert!(sup.is_finite() && sup < 10.0, "{sup}");
    assert!(sq.is_finite() && sq < 10.0, "{sq}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn variation_grows_with_scale_range(vals in prop::collection::vec(-3.0f64..3.0, 64), lo in -6i32..=-2, r in 1.0f64..4.0) {
        let f = SampledFunction::from_reals(Domain::Periodic, &vals).unwrap();
        let vp = VariationParams::new(r).unwrap();
        let short = martingale_variation(&f, vp, lo..=-1).unwrap();
        let long = martingale_variation(&f, vp, -6..=0).unwrap();
        for (a, b) in short.samples().iter().zip(long.samples()) {
            prop_assert!(a.re <= b.re * (1.0 + 1e-12) + 1e-15);
        }
    }
}
