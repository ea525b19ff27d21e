//! Acceptance suite.
//!
//! Each test implements one numbered criterion at its stated tolerance and
//! prints a `[acceptance] criterion N: PASS` line (visible with
//! `cargo test --test acceptance -- --nocapture`). Criteria 6 and 7 share
//! one calibrated worst-case ensemble; criterion 11 re-runs the workloads
//! of criteria 4 and 6 and compares output files byte for byte.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drdyn_core::report::{
    write_trajectory_csv, EnsembleManifest, RunManifest, to_json_pretty,
};
use drdyn_core::stability::ENVELOPE_EXCEEDANCE_TOL;
use drdyn_core::{
    calibrate_gain, dr_step, fit_kl_envelope_from, fixed_points, iterate, project_line,
    project_sphere, reflect, simulate_perturbed, split_by_parity, sup_distance_curve,
    validate_envelope, AxisRange, Certificate, CompactGrid, ConvergenceCriteria,
    PerturbationMode, PerturbationProfile, PerturbedEnsemble, ProblemConfig, StopRule, Vector,
};

fn pass(criterion: usize, detail: &str) {
    println!("[acceptance] criterion {criterion}: PASS ({detail})");
}

/// Composition route `(x + R_L(R_S(x))) / 2`, independent of the closed form.
fn dr_compose(x: &Vector, cfg: &ProblemConfig) -> Vector {
    let ps = project_sphere(x).expect("nonzero input");
    let rs = reflect(x, &ps).unwrap();
    let pl = project_line(&rs, cfg).unwrap();
    let rl = reflect(&rs, &pl).unwrap();
    Vector::new(
        x.coords()
            .iter()
            .zip(rl.coords())
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_01_closed_form_matches_composition_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let dims = [2usize, 3, 7, 10];
    let mut worst: f64 = 0.0;
    for case in 0..100_000 {
        let d = dims[case % dims.len()];
        let mut coords: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm: f64 = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let target = 10f64.powf(rng.random_range(-3.0..3.0));
        for c in coords.iter_mut() {
            *c *= target / norm;
        }
        let x = Vector::new(coords).unwrap();
        let lambda = rng.random_range(0.0..1.5);
        let cfg = ProblemConfig::new(d, lambda).unwrap();
        let closed = dr_step(&x, &cfg).unwrap();
        let composed = dr_compose(&x, &cfg);
        let tol = 1e-12 * x.norm().max(1.0);
        for (a, b) in closed.coords().iter().zip(composed.coords()) {
            let diff = (a - b).abs();
            worst = worst.max(diff / x.norm().max(1.0));
            assert!(
                diff <= tol,
                "coordinate mismatch {diff:e} > {tol:e} at x = {x}, lambda = {lambda}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    pass(
        1,
        &format!(
            "1e5 cases, worst scaled coordinate gap {worst:.2e} <= 1e-12, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Deterministic box samples shared by criteria 2 and 3.
fn delta_box_samples(lambda_index: usize) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2 + lambda_index as u64);
    (0..100_000)
        .map(|_| {
            Vector::new(vec![
                rng.random_range(1e-3..=1.0),
                rng.random_range(-10.0..10.0),
            ])
            .unwrap()
        })
        .collect()
}

const CRITERION_2_LAMBDAS: [f64; 4] = [0.0, 0.3, 0.7, 0.9];

#[test]
fn criterion_02_certificate_never_increases_along_the_step() {
    let started = Instant::now();
    let mut worst = f64::INFINITY;
    for (li, &lambda) in CRITERION_2_LAMBDAS.iter().enumerate() {
        let cfg = ProblemConfig::new(2, lambda).unwrap();
        let cert = Certificate::new(&cfg).unwrap();
        let mut violations = 0usize;
        for x in delta_box_samples(li) {
            let fx = cert.eval_f(&x).unwrap();
            let tx = dr_step(&x, &cfg).unwrap();
            let ftx = cert.eval_f(&tx).unwrap();
            worst = worst.min(fx - ftx);
            if ftx > fx + 1e-10 {
                violations += 1;
            }
        }
        assert_eq!(violations, 0, "decrease violations at lambda = {lambda}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    pass(
        2,
        &format!(
            "4 x 1e5 samples, zero violations, smallest decrease {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_strict_minimum_at_the_fixed_point() {
    for (li, &lambda) in CRITERION_2_LAMBDAS.iter().enumerate() {
        let cfg = ProblemConfig::new(2, lambda).unwrap();
        let cert = Certificate::new(&cfg).unwrap();
        let mut checked = 0usize;
        for x in delta_box_samples(li) {
            if x.dist(cert.x_star()) > 1e-6 {
                checked += 1;
                let fx = cert.eval_f(&x).unwrap();
                assert!(
                    fx - cert.f_star() > 0.0,
                    "minimum not strict at {x}, lambda = {lambda}"
                );
            }
        }
        assert!(checked > 99_000);
    }
    pass(3, "4 x 1e5 samples, F(x) > F(x*) with zero violations");
}

/// Start distribution of criterion 4: first coordinate in [0.05, 5],
/// total norm at most 10.
fn criterion_4_starts(d: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    (0..count)
        .map(|_| {
            let x1: f64 = rng.random_range(0.05..=5.0);
            let mut tail: Vec<f64> = (0..d - 1)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let tail_norm: f64 = tail.iter().map(|c| c * c).sum::<f64>().sqrt();
            let cap = (100.0 - x1 * x1).sqrt();
            let target = rng.random_range(0.0..cap);
            if tail_norm > 0.0 {
                for c in tail.iter_mut() {
                    *c *= target / tail_norm;
                }
            }
            let mut coords = vec![x1];
            coords.extend(tail);
            Vector::new(coords).unwrap()
        })
        .collect()
}

#[test]
fn criterion_04_global_convergence_over_lambda_and_dimension() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut worst_steps = 0usize;
    for &lambda in &[0.0, 0.3, 0.7, 0.9] {
        for &d in &[2usize, 3, 10] {
            let cfg = ProblemConfig::new(d, lambda).unwrap();
            for start in criterion_4_starts(d, 100, &mut rng) {
                let traj = iterate(&start, &cfg, 10_000, StopRule::default()).unwrap();
                let final_dist = traj.final_diag().dist_to_fixed.unwrap();
                assert!(
                    traj.converged_at().is_some() && final_dist < 1e-9,
                    "no convergence from {start} (lambda = {lambda}, d = {d}): dist {final_dist:e}"
                );
                worst_steps = worst_steps.max(traj.num_points() - 1);
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    pass(
        4,
        &format!(
            "1200 starts converged below 1e-9, worst run {worst_steps} steps, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_05_fixed_points_on_the_lambda_grid() {
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let lambda = i as f64 / 49.0;
        let cfg = ProblemConfig::new(2, lambda).unwrap();
        let (plus, minus) = fixed_points(&cfg).unwrap();
        for p in [plus, minus] {
            let moved = dr_step(&p, &cfg).unwrap().dist(&p);
            worst = worst.max(moved);
            assert!(moved <= 1e-14, "fixed point moved {moved:e} at lambda = {lambda}");
        }
    }
    pass(5, &format!("50-point lambda grid, worst drift {worst:.2e} <= 1e-14"));
}

const CRIT6_SEED: u64 = 42;
const CRIT6_N: usize = 2000;
const CRIT6_RUNS: usize = 20;
const CRIT6_M: usize = 16;
const CRIT6_TARGET: f64 = 1e-2;
const CRIT6_CANDIDATES: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

fn crit6_grid() -> CompactGrid {
    CompactGrid::new(
        vec![
            AxisRange {
                min: 0.5,
                max: 1.5,
                count: 10,
            },
            AxisRange {
                min: -1.0,
                max: 1.0,
                count: 5,
            },
        ],
        1e-3,
    )
    .unwrap()
}

fn crit6_config() -> ProblemConfig {
    ProblemConfig::new(2, 0.5).unwrap()
}

fn crit6_ensemble_for(c: f64) -> PerturbedEnsemble {
    let profile = PerturbationProfile::new(c, 0.5).unwrap();
    simulate_perturbed(
        &crit6_grid().nodes(),
        &crit6_config(),
        &profile,
        CRIT6_N,
        CRIT6_RUNS,
        PerturbationMode::AdversarialV {
            candidates: CRIT6_M,
        },
        CRIT6_SEED,
    )
    .unwrap()
}

/// Calibrated gain plus the worst-case ensemble it produces, shared by
/// criteria 6, 7, and 11.
fn calibrated() -> &'static (f64, PerturbedEnsemble) {
    static SHARED: OnceLock<(f64, PerturbedEnsemble)> = OnceLock::new();
    SHARED.get_or_init(|| {
        let calibration = calibrate_gain(
            &crit6_config(),
            &crit6_grid(),
            &CRIT6_CANDIDATES,
            CRIT6_TARGET,
            CRIT6_N,
            CRIT6_RUNS,
            PerturbationMode::AdversarialV {
                candidates: CRIT6_M,
            },
            0.5,
            CRIT6_SEED,
        )
        .unwrap();
        let c = calibration
            .admissible_c
            .expect("criterion 6 fails outright when no candidate gain is admissible");
        (c, crit6_ensemble_for(c))
    })
}

#[test]
fn criterion_06_calibrated_worst_case_ensemble_converges_uniformly() {
    let started = Instant::now();
    let (c, ensemble) = calibrated();
    let curve = sup_distance_curve(
        ensemble,
        &ConvergenceCriteria {
            threshold: CRIT6_TARGET,
            burn_in: 100,
            tail_tol: 1e-12,
        },
    )
    .unwrap();
    assert!(
        curve.final_sup <= CRIT6_TARGET,
        "sup final distance {:e} above 1e-2",
        curve.final_sup
    );
    assert!(curve.tail_monotone, "sup-distance curve rose after step 100");
    assert!(curve.all_finite);
    pass(
        6,
        &format!(
            "admissible c = {c}, sup final distance {:.2e}, curve non-increasing after step 100, {:.2} s",
            curve.final_sup,
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_07_fitted_envelope_dominates_held_out_half() {
    let (_, ensemble) = calibrated();
    let (fit, held) = split_by_parity(ensemble);
    let envelope = fit_kl_envelope_from(&fit, None).unwrap();
    assert!(
        envelope.is_kl_shaped(),
        "regularized envelope violates class-KL monotonicity"
    );
    let validation = validate_envelope(&envelope, &held, ENVELOPE_EXCEEDANCE_TOL).unwrap();
    assert_eq!(validation.uncovered_trajectories, 0);
    assert!(
        validation.rate < 0.01,
        "held-out exceedance rate {} >= 1%",
        validation.rate
    );
    pass(
        7,
        &format!(
            "exceedance rate {:.4}% over {} pairs, envelope KL-monotone",
            100.0 * validation.rate,
            validation.pairs
        ),
    );
}

fn boundary_starts() -> Vec<Vector> {
    let mut starts = Vec::new();
    for &a in &[0.25, 0.75, 1.25, 1.75, 2.25] {
        for &b in &[-1.0, 0.0, 1.0, 2.0] {
            starts.push(Vector::new(vec![a, b]).unwrap());
        }
    }
    starts
}

#[test]
fn criterion_08_tangent_case_converges_above_the_line() {
    let cfg = ProblemConfig::new(2, 1.0).unwrap();
    let stop = StopRule {
        step_tol: 1e-10,
        dist_tol: f64::INFINITY,
    };
    let starts = boundary_starts();
    assert_eq!(starts.len(), 20);
    for start in starts {
        let traj = iterate(&start, &cfg, 10_000, stop).unwrap();
        assert!(
            traj.converged_at().is_some(),
            "step norms never fell below 1e-10 from {start}"
        );
        let limit = traj.final_point();
        assert!(
            limit[0].abs() < 1e-6,
            "limit {limit} is off the hyperplane"
        );
        assert!(
            limit[1] > 1.0 + 1e-6,
            "limit {limit} does not sit strictly above the tangency point"
        );
    }
    pass(8, "20 starts: Cauchy below 1e-10, limits on the e2 axis above 1");
}

#[test]
fn criterion_09_supercritical_offset_never_converges() {
    let cfg = ProblemConfig::new(2, 1.5).unwrap();
    for start in boundary_starts() {
        let traj = iterate(&start, &cfg, 10_000, StopRule::default()).unwrap();
        assert!(traj.converged_at().is_none());
        // divergence evidence: tail step norms stay far from zero
        let tail_min = traj
            .diag()
            .iter()
            .skip(traj.num_points() - 1000)
            .filter_map(|d| d.step_norm)
            .fold(f64::INFINITY, f64::min);
        assert!(
            tail_min > 1e-6,
            "trajectory from {start} looks convergent (tail step {tail_min:e})"
        );
    }
    pass(9, "20 starts, 1e4 steps each: no convergence, tail steps > 1e-6");
}

#[test]
fn criterion_10_rate_functions_are_positive_definite_and_monotone() {
    let started = Instant::now();
    let cfg = ProblemConfig::new(2, 0.5).unwrap();
    let sample_box = drdyn_core::BoxSpec::default();
    let t_grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let g = drdyn_core::estimate_g(&t_grid, &cfg, 100_000, &sample_box, 42).unwrap();
    let alpha =
        drdyn_core::estimate_alpha(&t_grid, &cfg, 100_000, &sample_box, 42, Some(&g)).unwrap();
    for est in [&g, &alpha] {
        assert_eq!(est.values[0], 0.0, "{:?} must vanish at t = 0", est.kind);
        for (i, pair) in est.values.windows(2).enumerate() {
            assert!(pair[1] >= pair[0], "{:?} not monotone at index {i}", est.kind);
        }
        for (i, &t) in t_grid.iter().enumerate() {
            if t >= 0.05 {
                assert!(
                    est.values[i] > 0.0,
                    "{:?} not strictly positive at t = {t}",
                    est.kind
                );
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    pass(
        10,
        &format!(
            "g(0.05) = {:.3e}, alpha(0.05) = {:.3e}, budget 1e5, {:.2} s",
            g.values[5],
            alpha.values[5],
            elapsed.as_secs_f64()
        ),
    );
}

/// Writes the representative criterion-4 workload into `dir`.
fn write_criterion_4_outputs(dir: &std::path::Path) {
    let lambda = 0.7;
    let d = 3;
    let cfg = ProblemConfig::new(d, lambda).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let config = serde_json::json!({
        "command": "iterate",
        "lambda": lambda,
        "d": d,
        "n": 10_000,
        "step_tol": 1e-12,
        "dist_tol": 1e-9,
        "seed": 0xC4u64,
    });
    let mut manifest = RunManifest::new("iterate", config).unwrap();
    for (i, start) in criterion_4_starts(d, 10, &mut rng).into_iter().enumerate() {
        let traj = iterate(&start, &cfg, 10_000, StopRule::default()).unwrap();
        let name = format!("traj_{i:03}.csv");
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        std::fs::write(dir.join(&name), buf).unwrap();
        manifest.push_output(name, "trajectory_csv");
    }
    std::fs::write(
        dir.join("manifest.json"),
        to_json_pretty(&manifest).unwrap(),
    )
    .unwrap();
}

/// Writes the criterion-6 ensemble manifest plus a few trajectories.
fn write_criterion_6_outputs(dir: &std::path::Path, c: f64) {
    let ensemble = crit6_ensemble_for(c);
    let config = serde_json::json!({
        "command": "perturbed",
        "lambda": 0.5,
        "d": 2,
        "c": c,
        "cap_fraction": 0.5,
        "mode": "adversarial",
        "m": CRIT6_M,
        "n": CRIT6_N,
        "runs": CRIT6_RUNS,
        "seed": CRIT6_SEED,
    });
    let files: Vec<String> = (0..ensemble.trajectories().len())
        .map(|i| format!("traj_{i:04}.csv"))
        .collect();
    for (name, traj) in files.iter().zip(ensemble.trajectories()).take(3) {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, traj).unwrap();
        std::fs::write(dir.join(name), buf).unwrap();
    }
    let manifest = EnsembleManifest::new(&ensemble, config, Some(&files)).unwrap();
    std::fs::write(
        dir.join("manifest.json"),
        to_json_pretty(&manifest).unwrap(),
    )
    .unwrap();
}

fn assert_dirs_byte_identical(a: &std::path::Path, b: &std::path::Path) -> usize {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for name in &names {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert!(left == right, "{name} differs between identical runs");
    }
    names.len()
}

#[test]
fn criterion_11_reruns_are_byte_identical() {
    let (c, _) = calibrated();
    let root = tempfile::tempdir().unwrap();
    let mk = |name: &str| {
        let p = root.path().join(name);
        std::fs::create_dir(&p).unwrap();
        p
    };

    let (a4, b4) = (mk("c4_a"), mk("c4_b"));
    write_criterion_4_outputs(&a4);
    write_criterion_4_outputs(&b4);
    let n4 = assert_dirs_byte_identical(&a4, &b4);

    let (a6, b6) = (mk("c6_a"), mk("c6_b"));
    write_criterion_6_outputs(&a6, *c);
    write_criterion_6_outputs(&b6, *c);
    let n6 = assert_dirs_byte_identical(&a6, &b6);

    pass(
        11,
        &format!("criterion-4 rerun: {n4} files identical; criterion-6 rerun: {n6} files identical"),
    );
}
