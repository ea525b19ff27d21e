//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use drdyn_core::report::{
    to_json_pretty, write_curve_csv, write_curve_dat, write_envelope_csv, write_rate_csv,
    write_scan_csv, write_trajectory_csv, write_trajectory_dat, EnsembleManifest, RunManifest,
};
use drdyn_core::stability::{self, AxisRange, BoundarySettings, StabilityReport};
use drdyn_core::{
    calibrate_gain, check_lyapunov_conditions, estimate_alpha, estimate_g, fit_kl_envelope_from,
    iterate, simulate_perturbed, split_by_parity, sup_distance_curve, validate_envelope, BoxSpec,
    Certificate, CompactGrid, ConvergenceCriteria, Error, PerturbationMode, PerturbationProfile,
    ProblemConfig, Result, StopRule, Trajectory, Vector,
};

use crate::args::{
    BoundaryArgs, CertifyArgs, Cli, Command, IterateArgs, ModeArg, PerturbedArgs, ScanArgs,
};
use crate::config::{
    parse_axes, parse_f64_list, parse_linspace, parse_point, parse_points, resolve_seed,
    FileConfig,
};

/// Held-out envelope exceedance rate below which certification passes.
const EXCEEDANCE_PASS_RATE: f64 = 0.01;

pub enum Outcome {
    /// Exit code 0.
    Done,
    /// Exit code 2: the run completed but did not meet its target
    /// (budget exhausted without convergence, or a failed check).
    NotConverged,
}

pub struct Ctx {
    out_dir: PathBuf,
    seed: u64,
    gnuplot: bool,
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = resolve_seed(&file, cli.seed)?;
    let ctx = Ctx {
        out_dir: cli.out_dir,
        seed,
        gnuplot: cli.gnuplot,
    };
    let run = move || dispatch(cli.command, &file, &ctx);
    match cli.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter {
                what: "threads",
                why: e.to_string(),
            })?
            .install(run),
        None => run(),
    }
}

fn dispatch(command: Command, file: &FileConfig, ctx: &Ctx) -> Result<Outcome> {
    match command {
        Command::Iterate(mut args) => {
            file.apply_iterate(&mut args);
            cmd_iterate(&args, ctx)
        }
        Command::LyapunovScan(mut args) => {
            file.apply_scan(&mut args);
            cmd_lyapunov_scan(&args, ctx)
        }
        Command::Perturbed(mut args) => {
            file.apply_perturbed(&mut args)?;
            cmd_perturbed(&args, ctx)
        }
        Command::Certify(mut args) => {
            file.apply_certify(&mut args)?;
            cmd_certify(&args, ctx)
        }
        Command::Boundary(mut args) => {
            file.apply_boundary(&mut args);
            cmd_boundary(&args, ctx)
        }
    }
}

fn out_dir(ctx: &Ctx, command: &str) -> Result<PathBuf> {
    let dir = ctx.out_dir.join(command);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn mode_of(arg: ModeArg, m: usize) -> Result<PerturbationMode> {
    match arg {
        ModeArg::Random => Ok(PerturbationMode::RandomBall),
        ModeArg::Adversarial => PerturbationMode::adversarial(m),
    }
}

fn mode_name(arg: ModeArg) -> &'static str {
    match arg {
        ModeArg::Random => "random",
        ModeArg::Adversarial => "adversarial",
    }
}

fn cmd_iterate(args: &IterateArgs, ctx: &Ctx) -> Result<Outcome> {
    let start = parse_point(&args.start)?;
    if let Some(d) = args.d {
        if d != start.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: start.dim(),
            });
        }
    }
    let cfg = ProblemConfig::new(start.dim(), args.lambda)?;
    let stop = StopRule {
        step_tol: args.step_tol,
        dist_tol: args.dist_tol,
    };
    let traj = iterate(&start, &cfg, args.n, stop)?;
    let written = match args.thin {
        Some(stride) => traj.thinned(stride),
        None => traj.clone(),
    };

    let dir = out_dir(ctx, "iterate")?;
    let config = json!({
        "command": "iterate",
        "lambda": args.lambda,
        "d": cfg.d(),
        "start": start.coords(),
        "n": args.n,
        "step_tol": args.step_tol,
        "dist_tol": args.dist_tol,
        "thin": args.thin,
        "seed": ctx.seed,
    });
    let mut manifest = RunManifest::new("iterate", config)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &written)?;
    write_file(&dir, "trajectory.csv", &buf)?;
    manifest.push_output("trajectory.csv", "trajectory_csv");
    if ctx.gnuplot {
        let mut dat = Vec::new();
        write_trajectory_dat(&mut dat, &written)?;
        write_file(&dir, "trajectory.dat", &dat)?;
        manifest.push_output("trajectory.dat", "gnuplot_dat");
    }
    let final_diag = traj.final_diag();
    manifest.summary = json!({
        "steps": traj.num_points() - 1,
        "converged_at": traj.converged_at(),
        "final_step_norm": final_diag.step_norm,
        "final_dist_to_fixed": final_diag.dist_to_fixed,
    });
    write_file(&dir, "manifest.json", to_json_pretty(&manifest)?.as_bytes())?;

    match traj.converged_at() {
        Some(k) => {
            println!(
                "converged at step {k} (dist to x* = {:e}); outputs in {}",
                final_diag.dist_to_fixed.unwrap_or(f64::NAN),
                dir.display()
            );
            Ok(Outcome::Done)
        }
        None => {
            println!(
                "budget of {} steps exhausted without convergence; outputs in {}",
                args.n,
                dir.display()
            );
            Ok(Outcome::NotConverged)
        }
    }
}

/// Grid nodes for the scan; unlike compact start sets these may leave `H+`,
/// the writers simply leave undefined quantities empty.
fn scan_nodes(axes: &[AxisRange]) -> Result<Vec<Vector>> {
    if axes.len() < 2 {
        return Err(Error::InvalidParameter {
            what: "grid",
            why: "needs at least two axes".to_string(),
        });
    }
    let mut total = 1usize;
    for (i, a) in axes.iter().enumerate() {
        if a.count == 0 {
            return Err(Error::InvalidParameter {
                what: "grid",
                why: format!("axis {i} has zero nodes"),
            });
        }
        total = total.saturating_mul(a.count);
    }
    let mut nodes = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut coords = vec![0.0; axes.len()];
        for (j, a) in axes.iter().enumerate().rev() {
            let idx = rem % a.count;
            rem /= a.count;
            coords[j] = if a.count == 1 {
                a.min
            } else {
                a.min + (a.max - a.min) * idx as f64 / (a.count - 1) as f64
            };
        }
        nodes.push(Vector::new(coords)?);
    }
    Ok(nodes)
}

fn cmd_lyapunov_scan(args: &ScanArgs, ctx: &Ctx) -> Result<Outcome> {
    let axes = parse_axes(&args.grid)?;
    let nodes = scan_nodes(&axes)?;
    let cfg = ProblemConfig::new(axes.len(), args.lambda)?;
    let cert = Certificate::new(&cfg)?;
    let sample_box = BoxSpec::new(args.eps_floor, args.r_extent)?;
    let t_grid = parse_linspace(&args.t_grid)?;

    let g = estimate_g(&t_grid, &cfg, args.budget, &sample_box, ctx.seed)?;
    let alpha = estimate_alpha(&t_grid, &cfg, args.budget, &sample_box, ctx.seed, Some(&g))?;

    let dir = out_dir(ctx, "lyapunov-scan")?;
    let config = json!({
        "command": "lyapunov-scan",
        "lambda": args.lambda,
        "d": cfg.d(),
        "grid": args.grid,
        "t_grid": args.t_grid,
        "budget": args.budget,
        "eps_floor": args.eps_floor,
        "r_extent": args.r_extent,
        "seed": ctx.seed,
    });
    let mut manifest = RunManifest::new("lyapunov-scan", config)?;
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, &cert, &nodes)?;
    write_file(&dir, "scan.csv", &buf)?;
    manifest.push_output("scan.csv", "certificate_scan_csv");
    let mut gbuf = Vec::new();
    write_rate_csv(&mut gbuf, &g)?;
    write_file(&dir, "g.csv", &gbuf)?;
    manifest.push_output("g.csv", "rate_estimate_csv");
    let mut abuf = Vec::new();
    write_rate_csv(&mut abuf, &alpha)?;
    write_file(&dir, "alpha.csv", &abuf)?;
    manifest.push_output("alpha.csv", "rate_estimate_csv");
    manifest.summary = json!({
        "grid_points": nodes.len(),
        "g_max": g.values.last(),
        "alpha_max": alpha.values.last(),
    });
    write_file(&dir, "manifest.json", to_json_pretty(&manifest)?.as_bytes())?;

    println!(
        "scanned {} grid points; g and alpha estimated on {} radii; outputs in {}",
        nodes.len(),
        t_grid.len(),
        dir.display()
    );
    Ok(Outcome::Done)
}

fn perturbed_starts(args: &PerturbedArgs) -> Result<Vec<Vector>> {
    if let Some(raw) = &args.starts {
        return parse_points(raw);
    }
    if let Some(raw) = &args.k_grid {
        let grid = CompactGrid::new(parse_axes(raw)?, args.e1_floor)?;
        return Ok(grid.nodes());
    }
    Err(Error::InvalidParameter {
        what: "starts",
        why: "provide --starts or --k-grid".to_string(),
    })
}

fn cmd_perturbed(args: &PerturbedArgs, ctx: &Ctx) -> Result<Outcome> {
    let starts = perturbed_starts(args)?;
    let cfg = ProblemConfig::new(starts[0].dim(), args.lambda)?;
    let profile = PerturbationProfile::new(args.c, args.cap_fraction)?;
    let mode = mode_of(args.mode, args.m)?;
    let ensemble =
        simulate_perturbed(&starts, &cfg, &profile, args.n, args.runs, mode, ctx.seed)?;

    let dir = out_dir(ctx, "perturbed")?;
    let config = json!({
        "command": "perturbed",
        "lambda": args.lambda,
        "d": cfg.d(),
        "starts": starts.iter().map(|s| s.coords().to_vec()).collect::<Vec<_>>(),
        "c": args.c,
        "cap_fraction": args.cap_fraction,
        "mode": mode_name(args.mode),
        "m": args.m,
        "n": args.n,
        "runs": args.runs,
        "thin": args.thin,
        "seed": ctx.seed,
    });
    let files: Vec<String> = (0..ensemble.trajectories().len())
        .map(|i| format!("traj_{i:04}.csv"))
        .collect();
    for (traj, name) in ensemble.trajectories().iter().zip(&files) {
        let written: Trajectory = match args.thin {
            Some(stride) => traj.thinned(stride),
            None => traj.clone(),
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &written)?;
        write_file(&dir, name, &buf)?;
    }
    let manifest = EnsembleManifest::new(&ensemble, config, Some(&files))?;
    write_file(&dir, "manifest.json", to_json_pretty(&manifest)?.as_bytes())?;

    println!(
        "{} trajectories x {} steps ({} mode) written to {}",
        ensemble.trajectories().len(),
        args.n,
        mode_name(args.mode),
        dir.display()
    );
    Ok(Outcome::Done)
}

fn check_line(name: &str, pass: bool) {
    println!("  {name}: {}", if pass { "pass" } else { "FAIL" });
}

fn cmd_certify(args: &CertifyArgs, ctx: &Ctx) -> Result<Outcome> {
    let grid = CompactGrid::new(parse_axes(&args.k_grid)?, args.e1_floor)?;
    let cfg = ProblemConfig::new(grid.dim(), args.lambda)?;
    let sample_box = BoxSpec::new(args.eps_floor, args.r_extent)?;
    let t_grid = parse_linspace(&args.t_grid)?;
    let mode = mode_of(args.mode, args.m)?;

    let g = estimate_g(&t_grid, &cfg, args.budget, &sample_box, ctx.seed)?;
    let alpha = estimate_alpha(&t_grid, &cfg, args.budget, &sample_box, ctx.seed, Some(&g))?;
    let conditions =
        check_lyapunov_conditions(&cfg, args.budget, &sample_box, &alpha, ctx.seed, args.slack)?;

    let calibration = if args.calibrate {
        Some(calibrate_gain(
            &cfg,
            &grid,
            &parse_f64_list(&args.candidates)?,
            args.target_dist,
            args.n,
            args.runs,
            mode,
            args.cap_fraction,
            ctx.seed,
        )?)
    } else {
        None
    };
    let gain = match &calibration {
        Some(cal) => cal.admissible_c,
        None => Some(args.c),
    };

    let criteria = ConvergenceCriteria {
        threshold: args.target_dist,
        burn_in: args.burn_in,
        tail_tol: args.tail_tol,
    };
    let mut profile = None;
    let mut curve = None;
    let mut envelope = None;
    let mut validation = None;
    if let Some(c) = gain {
        let prof = PerturbationProfile::new(c, args.cap_fraction)?;
        let ensemble =
            simulate_perturbed(&grid.nodes(), &cfg, &prof, args.n, args.runs, mode, ctx.seed)?;
        curve = Some(sup_distance_curve(&ensemble, &criteria)?);
        let (fit, held) = split_by_parity(&ensemble);
        let env = fit_kl_envelope_from(&fit, None)?;
        validation = Some(validate_envelope(
            &env,
            &held,
            stability::ENVELOPE_EXCEEDANCE_TOL,
        )?);
        envelope = Some(env);
        profile = Some(prof);
    }

    let config = json!({
        "command": "certify",
        "lambda": args.lambda,
        "d": cfg.d(),
        "k_grid": args.k_grid,
        "e1_floor": args.e1_floor,
        "calibrate": args.calibrate,
        "candidates": args.candidates,
        "c": args.c,
        "cap_fraction": args.cap_fraction,
        "mode": mode_name(args.mode),
        "m": args.m,
        "n": args.n,
        "runs": args.runs,
        "target_dist": args.target_dist,
        "burn_in": args.burn_in,
        "tail_tol": args.tail_tol,
        "budget": args.budget,
        "eps_floor": args.eps_floor,
        "r_extent": args.r_extent,
        "t_grid": args.t_grid,
        "slack": args.slack,
        "seed": ctx.seed,
    });

    let checks_pass = conditions.checks.between.pass
        && conditions.checks.decrease.pass
        && conditions.checks.zero_set.pass;
    let curve_pass = curve.as_ref().map(|c| c.passes).unwrap_or(false);
    let envelope_pass = validation
        .as_ref()
        .map(|v| v.rate < EXCEEDANCE_PASS_RATE)
        .unwrap_or(false);
    let gain_pass = gain.is_some();
    let all_pass = checks_pass && curve_pass && envelope_pass && gain_pass;

    let report = StabilityReport {
        config: config.clone(),
        profile,
        checks: Some(conditions.checks),
        envelope,
        envelope_validation: validation,
        curves: curve.iter().cloned().collect(),
        violations: conditions.violations,
        calibration,
    };

    let dir = out_dir(ctx, "certify")?;
    let mut manifest = RunManifest::new("certify", config)?;
    write_file(&dir, "report.json", to_json_pretty(&report)?.as_bytes())?;
    manifest.push_output("report.json", "stability_report_json");
    if args.csv {
        if let Some(env) = &report.envelope {
            let mut buf = Vec::new();
            write_envelope_csv(&mut buf, env)?;
            write_file(&dir, "envelope.csv", &buf)?;
            manifest.push_output("envelope.csv", "envelope_csv");
        }
        if let Some(curve) = report.curves.first() {
            let mut buf = Vec::new();
            write_curve_csv(&mut buf, curve)?;
            write_file(&dir, "curve.csv", &buf)?;
            manifest.push_output("curve.csv", "sup_distance_csv");
        }
        let mut gbuf = Vec::new();
        write_rate_csv(&mut gbuf, &g)?;
        write_file(&dir, "g.csv", &gbuf)?;
        manifest.push_output("g.csv", "rate_estimate_csv");
        let mut abuf = Vec::new();
        write_rate_csv(&mut abuf, &alpha)?;
        write_file(&dir, "alpha.csv", &abuf)?;
        manifest.push_output("alpha.csv", "rate_estimate_csv");
    }
    if ctx.gnuplot {
        if let Some(curve) = report.curves.first() {
            let mut buf = Vec::new();
            write_curve_dat(&mut buf, curve)?;
            write_file(&dir, "curve.dat", &buf)?;
            manifest.push_output("curve.dat", "gnuplot_dat");
        }
    }
    manifest.summary = json!({
        "all_pass": all_pass,
        "gain": gain,
        "sup_final": report.curves.first().map(|c| c.final_sup),
        "exceedance_rate": report.envelope_validation.map(|v| v.rate),
    });
    write_file(&dir, "manifest.json", to_json_pretty(&manifest)?.as_bytes())?;

    println!("certification ({} mode, seed {}):", mode_name(args.mode), ctx.seed);
    check_line("lyapunov sandwich condition", report.checks.as_ref().unwrap().between.pass);
    check_line("lyapunov decrease condition", report.checks.as_ref().unwrap().decrease.pass);
    check_line("lyapunov zero set", report.checks.as_ref().unwrap().zero_set.pass);
    match gain {
        Some(c) => println!("  perturbation gain: {c}"),
        None => println!("  perturbation gain: no admissible candidate"),
    }
    check_line("uniform convergence curve", curve_pass);
    check_line("held-out envelope domination", envelope_pass);
    println!("report written to {}", dir.join("report.json").display());
    Ok(if all_pass {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn pad_points(points: &[Vector], d: usize) -> Result<Vec<Vector>> {
    points
        .iter()
        .map(|p| {
            if p.dim() > d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            let mut coords = vec![0.0; d];
            coords[..p.dim()].copy_from_slice(p.coords());
            Vector::new(coords)
        })
        .collect()
}

fn cmd_boundary(args: &BoundaryArgs, ctx: &Ctx) -> Result<Outcome> {
    let defaults = BoundarySettings::default();
    let lambda_one_starts = match &args.lambda_one_starts {
        Some(raw) => parse_points(raw)?,
        None => pad_points(&defaults.lambda_one_starts, args.d)?,
    };
    let diverge_starts = match &args.diverge_starts {
        Some(raw) => parse_points(raw)?,
        None => pad_points(&defaults.diverge_starts, args.d)?,
    };
    let h0_starts = match &args.h0_starts {
        Some(raw) => parse_points(raw)?,
        None => pad_points(&defaults.h0_starts, args.d)?,
    };
    let settings = BoundarySettings {
        d: args.d,
        n: args.n,
        lambda_one_starts,
        diverge_lambda: args.diverge_lambda,
        diverge_starts,
        h0_lambda: args.h0_lambda,
        h0_starts,
        thresholds: defaults.thresholds,
    };
    let report = stability::boundary_experiments(&settings)?;

    let dir = out_dir(ctx, "boundary")?;
    let config = json!({
        "command": "boundary",
        "d": args.d,
        "n": args.n,
        "diverge_lambda": args.diverge_lambda,
        "h0_lambda": args.h0_lambda,
        "lambda_one_starts": settings.lambda_one_starts.iter().map(|s| s.coords().to_vec()).collect::<Vec<_>>(),
        "diverge_starts": settings.diverge_starts.iter().map(|s| s.coords().to_vec()).collect::<Vec<_>>(),
        "h0_starts": settings.h0_starts.iter().map(|s| s.coords().to_vec()).collect::<Vec<_>>(),
        "seed": ctx.seed,
    });
    let mut manifest = RunManifest::new("boundary", config)?;
    write_file(&dir, "boundary.json", to_json_pretty(&report)?.as_bytes())?;
    manifest.push_output("boundary.json", "boundary_report_json");
    manifest.summary = json!({
        "lambda_one_pass": report.lambda_one_pass,
        "divergence_pass": report.divergence_pass,
        "h_zero_pass": report.h_zero_pass,
    });
    write_file(&dir, "manifest.json", to_json_pretty(&manifest)?.as_bytes())?;

    println!("boundary experiments (n = {}):", args.n);
    check_line("lambda = 1 tangent case", report.lambda_one_pass);
    check_line(
        &format!("lambda = {} divergence", args.diverge_lambda),
        report.divergence_pass,
    );
    check_line("H0 hyperplane case", report.h_zero_pass);
    println!("report written to {}", dir.join("boundary.json").display());
    Ok(
        if report.lambda_one_pass && report.divergence_pass && report.h_zero_pass {
            Outcome::Done
        } else {
            Outcome::NotConverged
        },
    )
}
