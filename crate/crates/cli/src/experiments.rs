//! Parameter validation and execution for each experiment.
//!
//! Random draws come from one `ChaCha8Rng` seeded with the run seed, in this order:
//! decompose draws the instance; lepingle draws the plotted function, then the sweep at
//! `grid`, then the sweep at `grid / 2`; mpz draws its function; nlft draws the sweep
//! potential, then one seed per trace-comparison run; selftest draws each case as
//! (length, values, exponent index).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use vcarleson::grid::Domain;
use vcarleson::lepingle::{dyadic_averages, lepingle_sweep, random_step_function};
use vcarleson::mpz::{random_supported_function, vmpz_norm_threaded};
use vcarleson::nlft::{frequency_sweep, nlft_evolve, random_potential, trace_comparison_experiment, Convention, FrequencyRow};
use vcarleson::sharpness::growth_experiment;
use vcarleson::timefreq::{constant_block_violations, Multitile};
use vcarleson::treeselect::{random_instance, InstanceParams};
use vcarleson::varnorm::{variation_norm_bruteforce, BRUTEFORCE_MAX_LEN};
use vcarleson::{Complex64, Exponent, IndexedSequence, VariationParams};

use crate::config::{Experiment, Params};
use crate::{Artifact, CliError};

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub enum Job {
    Sharpness { p: f64, r: Exponent, s: Exponent, n_list: Vec<usize>, grid_count: usize },
    Decompose { instance: InstanceParams, second_pass: bool, tiles: Option<String> },
    Lepingle { grid: usize, r: f64, samples: usize, pieces: usize },
    Mpz { p: f64, r: f64, grid: usize, length: f64, pieces: usize },
    Nlft(NlftJob),
    Selftest { cases: usize, max_len: usize, r_list: Vec<Exponent>, tolerance: f64 },
}

#[derive(Debug, Clone)]
pub struct NlftJob {
    pub grid: usize,
    pub amplitude: f64,
    pub r: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub k_count: usize,
    pub amplitudes: Vec<f64>,
    pub trace_runs: usize,
    pub trace_grid: usize,
}

fn check(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(msg))
    }
}

fn finite_r(e: Exponent, what: &str) -> Result<f64, CliError> {
    match e {
        Exponent::Finite(x) if x >= 1.0 => Ok(x),
        _ => Err(CliError::config(format!("{what} must be a finite number ≥ 1"))),
    }
}

/// Reads and validates the parameters of `experiment`; nothing is computed here.
pub fn prepare(experiment: Experiment, p: &Params) -> Result<Job, CliError> {
    match experiment {
        Experiment::Sharpness => {
            let pv = p.f64("p", 1.2)?;
            let r = p.exponent("r", Exponent::Finite(4.0))?;
            let s = p.exponent("s", Exponent::Infinite)?;
            let n_list = p.usize_list("N_list", &[64, 128, 256, 512, 1024, 2048, 4096])?;
            let grid_count = p.usize("grid_count", 1 << 15)?;
            check(pv.is_finite() && pv >= 1.0, "p must be a finite number ≥ 1")?;
            check(r.value() >= 1.0, "r must be ≥ 1")?;
            check(s.value() >= 1.0, "s must be ≥ 1")?;
            check(n_list.len() >= 2, "N_list needs at least two entries")?;
            check(n_list.iter().all(|&n| (1..=1 << 16).contains(&n)), "each N must lie in 1..=65536")?;
            check(grid_count.is_power_of_two() && grid_count <= 1 << 22, "grid_count must be a power of two ≤ 2^22")?;
            Ok(Job::Sharpness { p: pv, r, s, n_list, grid_count })
        }
        Experiment::Decompose => {
            let d = InstanceParams::default();
            let n_tiles = p.usize("n_tiles", d.n_tiles)?;
            let grid = p.usize("grid_count", d.grid)?;
            let length = p.f64("length", d.length)?;
            let r = finite_r(p.exponent("r", Exponent::Finite(d.r))?, "r")?;
            let second_pass = p.bool("second_pass", true)?;
            let tiles = p.string("tiles")?;
            check((1..=1000).contains(&n_tiles), "n_tiles must lie in 1..=1000")?;
            check(grid.is_power_of_two() && (64..=1 << 16).contains(&grid), "grid_count must be a power of two in 64..=65536")?;
            check(length >= 4.0 && length <= 1024.0 && length.log2().fract() == 0.0, "length must be a power of two in 4..=1024")?;
            check(r > 1.0, "r must exceed 1")?;
            Ok(Job::Decompose { instance: InstanceParams { n_tiles, grid, length, r }, second_pass, tiles })
        }
        Experiment::Lepingle => {
            let grid = p.usize("grid_count", 1 << 12)?;
            let r = finite_r(p.exponent("r", Exponent::Finite(3.0))?, "r")?;
            let samples = p.usize("samples", 200)?;
            let pieces = p.usize("pieces", 64)?;
            check(grid.is_power_of_two() && (4..=1 << 20).contains(&grid), "grid_count must be a power of two in 4..=2^20")?;
            check(samples >= 1, "samples must be positive")?;
            check(pieces >= 1 && pieces <= grid / 2 && (grid / 2) % pieces == 0, "pieces must divide grid_count / 2")?;
            Ok(Job::Lepingle { grid, r, samples, pieces })
        }
        Experiment::Mpz => {
            let pv = p.f64("p", 1.5)?;
            let r = finite_r(p.exponent("r", Exponent::Finite(1.8))?, "r")?;
            let grid = p.usize("grid_count", 256)?;
            let length = p.f64("length", 2.0)?;
            let pieces = p.usize("pieces", 16)?;
            check((1.0..2.0).contains(&pv), "p must lie in [1, 2)")?;
            check(grid.is_power_of_two() && (2..=1 << 14).contains(&grid), "grid_count must be a power of two in 2..=16384")?;
            check(length >= 1.0 && (grid as f64 / length).fract() == 0.0, "length must be ≥ 1 and divide the grid into whole cells")?;
            let inside = (grid as f64 / length) as usize;
            check(pieces >= 1 && inside % pieces == 0, "pieces must divide the cells inside [0, 1)")?;
            Ok(Job::Mpz { p: pv, r, grid, length, pieces })
        }
        Experiment::Nlft => {
            let job = NlftJob {
                grid: p.usize("grid_count", 256)?,
                amplitude: p.f64("amplitude", 0.25)?,
                r: finite_r(p.exponent("r", Exponent::Finite(1.5))?, "r")?,
                k_min: p.f64("k_min", -8.0)?,
                k_max: p.f64("k_max", 8.0)?,
                k_count: p.usize("k_count", 17)?,
                amplitudes: p.f64_list("amplitudes", &(4..=10).rev().map(|e| 2f64.powi(-e)).collect::<Vec<_>>())?,
                trace_runs: p.usize("trace_runs", 5)?,
                trace_grid: p.usize("trace_grid", 256)?,
            };
            check((2..=1 << 20).contains(&job.grid), "grid_count must lie in 2..=2^20")?;
            check((2..=1 << 16).contains(&job.trace_grid), "trace_grid must lie in 2..=65536")?;
            check(job.amplitude.is_finite() && job.amplitude > 0.0, "amplitude must be positive")?;
            check(job.r < 2.0, "r must lie in [1, 2) for the trace comparison")?;
            check(job.k_min.is_finite() && job.k_max.is_finite() && job.k_min <= job.k_max, "need k_min ≤ k_max")?;
            check(job.k_count >= 1 && (job.k_count > 1 || job.k_min == job.k_max), "k_count must be positive")?;
            check(!job.amplitudes.is_empty() && job.amplitudes.iter().all(|a| a.is_finite() && *a > 0.0), "amplitudes must be positive")?;
            check(job.trace_runs >= 1, "trace_runs must be positive")?;
            Ok(Job::Nlft(job))
        }
        Experiment::Selftest => {
            let cases = p.usize("cases", 1000)?;
            let max_len = p.usize("max_len", 12)?;
            let r_list = p.exponent_list(
                "r_list",
                &[Exponent::Finite(1.0), Exponent::Finite(1.5), Exponent::Finite(2.0), Exponent::Finite(3.0), Exponent::Infinite],
            )?;
            let tolerance = p.f64("tolerance", 1e-12)?;
            check(cases >= 1, "cases must be positive")?;
            check((1..=BRUTEFORCE_MAX_LEN).contains(&max_len), "max_len exceeds the exhaustive-search limit")?;
            check(!r_list.is_empty() && r_list.iter().all(|r| r.value() >= 1.0), "r_list entries must be ≥ 1")?;
            check(tolerance >= 0.0, "tolerance must be non-negative")?;
            Ok(Job::Selftest { cases, max_len, r_list, tolerance })
        }
    }
}

fn csv(name: &str, text: String) -> Artifact {
    Artifact::new(name, text.into_bytes())
}

fn buffered(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut out = Vec::new();
    f(&mut out).expect("writing to memory cannot fail");
    out
}

impl Job {
    /// Runs the job; the flag is false when the experiment's own checks fail.
    pub fn execute(&self, seed: u64, threads: usize) -> Result<(Vec<Artifact>, bool), CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Job::Sharpness { p, r, s, n_list, grid_count } => {
                let rep = growth_experiment(*p, r.value(), s.value(), n_list, *grid_count)?;
                let mut out = vec![
                    Artifact::new("sharpness.csv", buffered(|w| rep.write_csv(w))),
                    Artifact::json("sharpness_summary.json", &rep.summary_json()),
                ];
                if let Some(fit) = rep.log_fit {
                    out.push(Artifact::json(
                        "sharpness_power_fit.json",
                        &json!({ "s": s.value(), "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared }),
                    ));
                }
                Ok((out, true))
            }
            Job::Decompose { instance, second_pass, tiles } => decompose(&mut rng, *instance, *second_pass, tiles.as_deref()),
            Job::Lepingle { grid, r, samples, pieces } => {
                let f = random_step_function(&mut rng, Domain::Periodic, *grid, *pieces)?;
                let fine = -(grid.trailing_zeros() as i32);
                let sweep = dyadic_averages(&f, fine..=0)?;
                let full = lepingle_sweep(&mut rng, *grid, *r, *samples, *pieces)?;
                let half = lepingle_sweep(&mut rng, grid / 2, *r, *samples, *pieces)?;
                let change = |a: f64, b: f64| if b > 0.0 { a / b - 1.0 } else { 0.0 };
                let summary = json!({
                    "grid": full.grid,
                    "r": full.r,
                    "samples": full.samples,
                    "variation_sup": full.variation_sup,
                    "square_sup": full.square_sup,
                    "half_grid": { "grid": half.grid, "variation_sup": half.variation_sup, "square_sup": half.square_sup },
                    "variation_change": change(full.variation_sup, half.variation_sup),
                    "square_change": change(full.square_sup, half.square_sup),
                });
                Ok((
                    vec![Artifact::new("lepingle.csv", buffered(|w| sweep.write_csv(w))), Artifact::json("lepingle.json", &summary)],
                    true,
                ))
            }
            Job::Mpz { p, r, grid, length, pieces } => {
                let f = random_supported_function(&mut rng, *length, *grid, *pieces)?;
                let rep = vmpz_norm_threaded(&f, *p, *r, threads)?;
                Ok((
                    vec![Artifact::json("mpz.json", &rep.summary_json()), Artifact::new("mpz.csv", buffered(|w| rep.write_csv(w)))],
                    true,
                ))
            }
            Job::Nlft(job) => nlft(&mut rng, job, threads),
            Job::Selftest { cases, max_len, r_list, tolerance } => selftest(&mut rng, *cases, *max_len, r_list, *tolerance),
        }
    }
}

fn decompose(
    rng: &mut ChaCha8Rng,
    params: InstanceParams,
    second_pass: bool,
    tiles: Option<&str>,
) -> Result<(Vec<Artifact>, bool), CliError> {
    let mut inst = random_instance(rng, params)?;
    if let Some(path) = tiles {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{path}: {e}")))?;
        inst.tiles = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(n, l)| serde_json::from_str::<Multitile>(l).map_err(|e| CliError::config(format!("{path}:{}: {e}", n + 1))))
            .collect::<Result<_, _>>()?;
    }
    let sys = inst.system()?;
    let all = sys.all_ids();
    let energy = sys.energy(&all);
    let density = sys.density(&all)?;
    let dec = sys.full_decomposition(second_pass)?;
    let mut violations: Vec<String> = Vec::new();
    for (id, tile) in sys.tiles().iter().enumerate() {
        violations.extend(constant_block_violations(tile).into_iter().map(|v| format!("tile {id}: {v}")));
    }
    for t in dec.trees() {
        if !sys.is_tree(&t.tile_ids, &t.top) {
            violations.push(format!("tree at {:?} fails the tree axioms", t.top.i_t));
        }
        violations.extend(sys.observation_violations(t));
    }
    let mut tiles_jsonl = String::new();
    for t in sys.tiles() {
        writeln!(tiles_jsonl, "{}", serde_json::to_string(t).expect("tiles serialize")).unwrap();
    }
    let c = dec.constants();
    let constants = json!({
        "f_measure": dec.f_measure,
        "e_measure": dec.e_measure,
        "c0": dec.c0,
        "energy": energy,
        "energy_over_sqrt_f": if dec.f_measure > 0.0 { energy / dec.f_measure.sqrt() } else { 0.0 },
        "density": density,
        "energy_length": c.energy_length,
        "density_length": c.density_length,
        "union_length": c.union_length,
        "energy_bmo": c.energy_bmo,
        "max_sum_ratio": dec.max_sum_ratio(),
        "levels": dec.levels.len(),
        "trees": dec.trees().count(),
        "violations": violations,
    });
    let trees = serde_json::to_value(&dec).expect("decompositions serialize");
    Ok((
        vec![
            Artifact::new("tiles.jsonl", tiles_jsonl.into_bytes()),
            Artifact::json("trees.json", &trees),
            csv("summary.csv", dec.summary_csv()),
            Artifact::json("constants.json", &constants),
        ],
        violations.is_empty(),
    ))
}

fn nlft(rng: &mut ChaCha8Rng, job: &NlftJob, threads: usize) -> Result<(Vec<Artifact>, bool), CliError> {
    let f = random_potential(rng, job.grid, job.amplitude)?;
    let ks: Vec<f64> = if job.k_count == 1 {
        vec![job.k_min]
    } else {
        (0..job.k_count).map(|i| job.k_min + (job.k_max - job.k_min) * i as f64 / (job.k_count - 1) as f64).collect()
    };
    let chunk = ks.len().div_ceil(threads.clamp(1, ks.len()));
    let parts: Vec<vcarleson::Result<Vec<FrequencyRow>>> = std::thread::scope(|s| {
        let handles: Vec<_> = ks.chunks(chunk).map(|part| s.spawn(|| frequency_sweep(&f, part, job.r))).collect();
        handles.into_iter().map(|h| h.join().expect("frequency worker panicked")).collect()
    });
    let mut table = String::from("k,var_curve,var_trace,delta\n");
    for part in parts {
        for row in part? {
            writeln!(table, "{},{},{},{}", row.k, row.var_curve, row.var_trace, row.delta).unwrap();
        }
    }
    let curve = nlft_evolve(&f, ks[0], Convention::Left)?;
    let seeds: Vec<u64> = (0..job.trace_runs).map(|_| rng.gen()).collect();
    let cmp = trace_comparison_experiment(job.r, &job.amplitudes, &seeds, job.trace_grid)?;
    let fit = cmp.fit.map_or(Value::Null, |f| json!({ "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared }));
    Ok((
        vec![
            csv("nlft.csv", table),
            Artifact::new("curve.jsonl", buffered(|w| curve.write_json_lines(w))),
            Artifact::new("trace_comparison.csv", buffered(|w| cmp.write_csv(w))),
            Artifact::json(
                "trace_comparison.json",
                &json!({ "r": cmp.r, "grid": cmp.grid, "k": 0.0, "max_drift": curve.max_drift(), "fit": fit }),
            ),
        ],
        true,
    ))
}

fn selftest(
    rng: &mut ChaCha8Rng,
    cases: usize,
    max_len: usize,
    r_list: &[Exponent],
    tolerance: f64,
) -> Result<(Vec<Artifact>, bool), CliError> {
    let mut failures = Vec::new();
    let mut max_diff = 0.0f64;
    let mut table = String::from("case,len,r,dp,bruteforce,diff\n");
    for case in 0..cases {
        let len = rng.gen_range(1..=max_len);
        let values: Vec<Complex64> = (0..len).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let r = r_list[rng.gen_range(0..r_list.len())];
        let vp = VariationParams::new(r.value())?;
        let seq = IndexedSequence::from_values(values)?;
        let dp = vcarleson::variation_norm(&seq, vp);
        let brute = variation_norm_bruteforce(&seq, vp)?;
        let diff = (dp - brute).abs();
        max_diff = max_diff.max(diff);
        if !(diff <= tolerance) {
            failures.push(case);
        }
        writeln!(table, "{case},{len},{},{dp},{brute},{diff}", r.value()).unwrap();
    }
    let summary = json!({
        "cases": cases,
        "max_len": max_len,
        "tolerance": tolerance,
        "max_abs_diff": max_diff,
        "failures": failures,
        "passed": failures.is_empty(),
    });
    Ok((vec![csv("selftest.csv", table), Artifact::json("selftest.json", &summary)], failures.is_empty()))
}
