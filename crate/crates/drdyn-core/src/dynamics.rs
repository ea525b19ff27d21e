//! Exact and perturbed Douglas-Rachford trajectories.
//!
//! Exact runs apply the closed-form step with optional early stopping and
//! record per-step diagnostics. Perturbed runs realize the set-valued
//! two-ball construction: blur the point inside `B[x, tau(x)]`, step, blur
//! again inside `B[Tx', tau(Tx')]`. The radius
//!
//! ```text
//! tau(x) = min { c |x - x*|, cap_fraction <x,e1> }
//! ```
//!
//! vanishes only at `x*` and keeps every ball inside `H+`, so perturbed
//! paths can never leave the half-space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ProblemConfig, Vector};
use crate::lyapunov::{f_raw, Certificate};
use crate::sampling::sample_in_ball;

/// Early-stop rule: both the last step length and the distance to `x*`
/// must fall strictly below their tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub step_tol: f64,
    pub dist_tol: f64,
}

impl StopRule {
    /// Disables early stopping (strict `<` can never fire on zero).
    pub const fn none() -> Self {
        StopRule {
            step_tol: 0.0,
            dist_tol: 0.0,
        }
    }
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            step_tol: 1e-12,
            dist_tol: 1e-9,
        }
    }
}

/// Per-point diagnostics; fields are absent where the quantity is not
/// defined (no previous point, no fixed point for `lambda > 1`, certificate
/// undefined outside its domain or for `lambda >= 1`).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StepDiag {
    pub step_norm: Option<f64>,
    pub dist_to_fixed: Option<f64>,
    pub f: Option<f64>,
    pub v: Option<f64>,
}

/// An orbit with its diagnostics. `ks[i]` is the step index of `points[i]`;
/// the two differ from `0..=n` only after thinning.
#[derive(Clone, Debug)]
pub struct Trajectory {
    cfg: ProblemConfig,
    ks: Vec<usize>,
    points: Vec<Vector>,
    diag: Vec<StepDiag>,
    converged_at: Option<usize>,
}

impl Trajectory {
    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn start(&self) -> &Vector {
        &self.points[0]
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn diag(&self) -> &[StepDiag] {
        &self.diag
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    pub fn final_point(&self) -> &Vector {
        self.points.last().unwrap()
    }

    pub fn final_diag(&self) -> &StepDiag {
        self.diag.last().unwrap()
    }

    /// Step index at which the early-stop rule fired, if it did.
    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    /// Number of stored points (`n + 1` for an untrimmed n-step run).
    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// `(k, point, diagnostics)` rows, in step order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &Vector, &StepDiag)> {
        self.ks
            .iter()
            .zip(&self.points)
            .zip(&self.diag)
            .map(|((&k, p), d)| (k, p, d))
    }

    /// Keeps every `stride`-th point plus the first and last ones.
    /// Diagnostics are carried over unchanged, so `step_norm` still refers
    /// to the step that produced each retained point.
    pub fn thinned(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let last = self.points.len() - 1;
        let keep = |i: usize| i == 0 || i == last || i.is_multiple_of(stride);
        Trajectory {
            cfg: self.cfg,
            ks: self
                .ks
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, &k)| k)
                .collect(),
            points: self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, p)| p.clone())
                .collect(),
            diag: self
                .diag
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, d)| *d)
                .collect(),
            converged_at: self.converged_at,
        }
    }
}

/// Diagnostics context shared by exact and perturbed runs.
struct DiagContext {
    lambda: f64,
    x_star: Option<Vector>,
    f_star: Option<f64>,
}

impl DiagContext {
    fn new(cfg: &ProblemConfig) -> Result<Self> {
        let lambda = cfg.lambda();
        let x_star = if lambda <= 1.0 {
            Some(geometry::fixed_points(cfg)?.0)
        } else {
            None
        };
        let f_star = if lambda < 1.0 {
            x_star.as_ref().map(|xs| f_raw(xs.coords(), lambda))
        } else {
            None
        };
        Ok(DiagContext {
            lambda,
            x_star,
            f_star,
        })
    }

    fn diag(&self, point: &Vector, prev: Option<&Vector>) -> StepDiag {
        let step_norm = prev.map(|p| point.dist(p));
        let dist_to_fixed = self.x_star.as_ref().map(|xs| point.dist(xs));
        let f = (self.f_star.is_some() && geometry::in_delta(point))
            .then(|| f_raw(point.coords(), self.lambda));
        let v = match self.f_star {
            Some(f_star) if point[0] > 0.0 => {
                let mut stepped = point.coords().to_vec();
                let norm = point.norm();
                geometry::dr_step_in_place(&mut stepped, norm, self.lambda);
                Some(f_raw(&stepped, self.lambda) - f_star)
            }
            _ => None,
        };
        StepDiag {
            step_norm,
            dist_to_fixed,
            f,
            v,
        }
    }
}

/// Runs up to `n` exact steps from `start`.
///
/// Stops early once both tolerances of `stop` are met (possible only for
/// `lambda` in `[0, 1]`, where the fixed point exists). Fails with
/// `OriginNotProjectable` if an iterate reaches the origin, which only
/// happens from `H0` starts.
pub fn iterate(start: &Vector, cfg: &ProblemConfig, n: usize, stop: StopRule) -> Result<Trajectory> {
    cfg.check_dim(start)?;
    if start.norm() == 0.0 {
        return Err(Error::OriginNotProjectable);
    }
    let ctx = DiagContext::new(cfg)?;
    let mut points = Vec::with_capacity(n + 1);
    let mut diag = Vec::with_capacity(n + 1);
    points.push(start.clone());
    diag.push(ctx.diag(start, None));
    let mut converged_at = None;
    for k in 0..n {
        let next = geometry::dr_step(&points[k], cfg)?;
        let d = ctx.diag(&next, Some(&points[k]));
        points.push(next);
        diag.push(d);
        if let (Some(step), Some(dist)) = (d.step_norm, d.dist_to_fixed) {
            if step < stop.step_tol && dist < stop.dist_tol {
                converged_at = Some(k + 1);
                break;
            }
        }
    }
    let ks = (0..points.len()).collect();
    Ok(Trajectory {
        cfg: *cfg,
        ks,
        points,
        diag,
        converged_at,
    })
}

/// The radius family used for perturbations: `sigma(x) = c |x - x*|`,
/// capped by `cap_fraction <x,e1>` so that perturbation balls stay in `H+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationProfile {
    c: f64,
    cap_fraction: f64,
    base: SigmaBase,
}

/// The parametrized family behind `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SigmaBase {
    DistanceToFixed,
}

impl PerturbationProfile {
    pub fn new(c: f64, cap_fraction: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::invalid("c", format!("gain must be >= 0, got {c}")));
        }
        if !cap_fraction.is_finite() || cap_fraction <= 0.0 || cap_fraction >= 1.0 {
            return Err(Error::invalid(
                "cap_fraction",
                format!("must lie in (0, 1), got {cap_fraction}"),
            ));
        }
        Ok(PerturbationProfile {
            c,
            cap_fraction,
            base: SigmaBase::DistanceToFixed,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn cap_fraction(&self) -> f64 {
        self.cap_fraction
    }
}

impl Default for PerturbationProfile {
    fn default() -> Self {
        PerturbationProfile {
            c: 0.02,
            cap_fraction: 0.5,
            base: SigmaBase::DistanceToFixed,
        }
    }
}

/// How one perturbed step picks its outcome among the admissible set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PerturbationMode {
    /// Sample both balls uniformly once.
    RandomBall,
    /// Draw `candidates` independent two-ball samples, keep the one with the
    /// largest certificate value `V`: an approximation of the set-valued
    /// worst case, which the stability definitions quantify over.
    AdversarialV { candidates: usize },
}

impl PerturbationMode {
    pub fn adversarial(candidates: usize) -> Result<Self> {
        if candidates == 0 {
            return Err(Error::invalid("candidates", "must be at least 1"));
        }
        Ok(PerturbationMode::AdversarialV { candidates })
    }
}

/// `tau(x) = min { c |x - x*|, cap_fraction <x,e1> }`.
///
/// Zero exactly at `x*`; the cap keeps `B[x, tau(x)]` inside `H+`.
pub fn tau(x: &Vector, cfg: &ProblemConfig, profile: &PerturbationProfile) -> Result<f64> {
    cfg.check_dim(x)?;
    if x[0] <= 0.0 {
        return Err(Error::OutsideHPlus { x1: x[0] });
    }
    let cert = Certificate::new(cfg)?;
    Ok(tau_raw(x.coords(), &cert, profile))
}

fn tau_raw(coords: &[f64], cert: &Certificate, profile: &PerturbationProfile) -> f64 {
    let dist = cert.dist_to_star(coords);
    (profile.c * dist).min(profile.cap_fraction * coords[0])
}

/// Full record of one perturbed step: pre-blur point, stepped point, and
/// post-blur point, with the two radii used.
#[derive(Clone, Debug)]
pub struct PerturbedStepTrace {
    pub y: Vector,
    pub z: Vector,
    pub w: Vector,
    pub tau_x: f64,
    pub tau_z: f64,
}

fn two_ball_sample(
    coords: &[f64],
    cert: &Certificate,
    profile: &PerturbationProfile,
    rng: &mut ChaCha8Rng,
) -> PerturbedStepTrace {
    let lambda = cert.config().lambda();
    let tau_x = tau_raw(coords, cert, profile);
    let mut y = vec![0.0; coords.len()];
    sample_in_ball(rng, coords, tau_x, &mut y);
    debug_assert!(y[0] > 0.0);
    let mut z = y.clone();
    let norm = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    geometry::dr_step_in_place(&mut z, norm, lambda);
    let tau_z = tau_raw(&z, cert, profile);
    let mut w = vec![0.0; coords.len()];
    sample_in_ball(rng, &z, tau_z, &mut w);
    debug_assert!(w[0] > 0.0);
    PerturbedStepTrace {
        y: Vector::from_raw(y),
        z: Vector::from_raw(z),
        w: Vector::from_raw(w),
        tau_x,
        tau_z,
    }
}

/// One perturbed step with the intermediate points exposed.
pub fn perturbed_step_traced(
    x: &Vector,
    cfg: &ProblemConfig,
    profile: &PerturbationProfile,
    mode: PerturbationMode,
    rng: &mut ChaCha8Rng,
) -> Result<PerturbedStepTrace> {
    cfg.check_dim(x)?;
    if x[0] <= 0.0 {
        return Err(Error::OutsideHPlus { x1: x[0] });
    }
    let cert = Certificate::new(cfg)?;
    Ok(perturbed_step_inner(x.coords(), &cert, profile, mode, rng))
}

fn perturbed_step_inner(
    coords: &[f64],
    cert: &Certificate,
    profile: &PerturbationProfile,
    mode: PerturbationMode,
    rng: &mut ChaCha8Rng,
) -> PerturbedStepTrace {
    match mode {
        PerturbationMode::RandomBall => two_ball_sample(coords, cert, profile, rng),
        PerturbationMode::AdversarialV { candidates } => {
            let mut best: Option<(f64, PerturbedStepTrace)> = None;
            for _ in 0..candidates.max(1) {
                let trace = two_ball_sample(coords, cert, profile, rng);
                let score = cert.v_raw(trace.w.coords());
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, trace));
                }
            }
            best.unwrap().1
        }
    }
}

/// One perturbed step `x -> w` with `w` in the perturbed image of `x`.
pub fn perturbed_step(
    x: &Vector,
    cfg: &ProblemConfig,
    profile: &PerturbationProfile,
    mode: PerturbationMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vector> {
    Ok(perturbed_step_traced(x, cfg, profile, mode, rng)?.w)
}

/// A batch of perturbed trajectories with its provenance.
#[derive(Clone, Debug)]
pub struct PerturbedEnsemble {
    cfg: ProblemConfig,
    profile: PerturbationProfile,
    mode: PerturbationMode,
    seed: u64,
    runs_per_start: usize,
    seeds: Vec<u64>,
    trajectories: Vec<Trajectory>,
}

impl PerturbedEnsemble {
    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn profile(&self) -> &PerturbationProfile {
        &self.profile
    }

    pub fn mode(&self) -> PerturbationMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-trajectory RNG stream identifiers, in trajectory order.
    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn runs_per_start(&self) -> usize {
        self.runs_per_start
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// `(start_index, run_index)` of trajectory `i`.
    pub fn provenance(&self, i: usize) -> (usize, usize) {
        (i / self.runs_per_start, i % self.runs_per_start)
    }
}

/// Runs `runs_per_start` independent perturbed trajectories of length `n`
/// from every start, with no early stopping.
///
/// Each trajectory draws from its own counter-derived RNG stream, so the
/// ensemble is identical for a fixed seed regardless of thread count or
/// evaluation order.
pub fn simulate_perturbed(
    starts: &[Vector],
    cfg: &ProblemConfig,
    profile: &PerturbationProfile,
    n: usize,
    runs_per_start: usize,
    mode: PerturbationMode,
    seed: u64,
) -> Result<PerturbedEnsemble> {
    if starts.is_empty() {
        return Err(Error::invalid("starts", "must be non-empty"));
    }
    if runs_per_start == 0 {
        return Err(Error::invalid("runs_per_start", "must be at least 1"));
    }
    for s in starts {
        cfg.check_dim(s)?;
        if s[0] <= 0.0 {
            return Err(Error::OutsideHPlus { x1: s[0] });
        }
    }
    let cert = Certificate::new(cfg)?;
    let ctx = DiagContext::new(cfg)?;
    let total = starts.len() * runs_per_start;
    let trajectories: Vec<Trajectory> = (0..total)
        .into_par_iter()
        .map(|ti| {
            let start = &starts[ti / runs_per_start];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(ti));
            let mut points = Vec::with_capacity(n + 1);
            let mut diag = Vec::with_capacity(n + 1);
            points.push(start.clone());
            diag.push(ctx.diag(start, None));
            for k in 0..n {
                let trace =
                    perturbed_step_inner(points[k].coords(), &cert, profile, mode, &mut rng);
                debug_assert!(trace.y.dist(&points[k]) <= trace.tau_x + 1e-12);
                debug_assert!(trace.w.dist(&trace.z) <= trace.tau_z + 1e-12);
                let d = ctx.diag(&trace.w, Some(&points[k]));
                points.push(trace.w);
                diag.push(d);
            }
            let ks = (0..points.len()).collect();
            Trajectory {
                cfg: *cfg,
                ks,
                points,
                diag,
                converged_at: None,
            }
        })
        .collect();
    Ok(PerturbedEnsemble {
        cfg: *cfg,
        profile: *profile,
        mode,
        seed,
        runs_per_start,
        seeds: (0..total).map(stream_id).collect(),
        trajectories,
    })
}

/// RNG stream of trajectory `ti`; stream 0 is reserved.
fn stream_id(ti: usize) -> u64 {
    ti as u64 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::new(vec![a, b]).unwrap()
    }

    fn cfg(lambda: f64) -> ProblemConfig {
        ProblemConfig::new(2, lambda).unwrap()
    }

    #[test]
    fn iterate_reaches_fixed_point_immediately() {
        let traj = iterate(&vec2(2.0, 0.0), &cfg(0.0), 5, StopRule::default()).unwrap();
        assert_eq!(traj.points()[1].coords(), &[1.0, 0.0]);
        // the step after landing on x* has zero length, firing the rule
        assert_eq!(traj.converged_at(), Some(2));
        assert!(traj.final_diag().dist_to_fixed.unwrap() < 1e-15);
    }

    #[test]
    fn iterate_converges_from_a_3d_start() {
        let cfg = ProblemConfig::new(3, 0.5).unwrap();
        let start = Vector::new(vec![1.0, 5.0, 5.0]).unwrap();
        let traj = iterate(&start, &cfg, 10_000, StopRule::default()).unwrap();
        assert!(traj.converged_at().is_some());
        assert!(traj.final_diag().dist_to_fixed.unwrap() < 1e-9);
    }

    #[test]
    fn iterate_from_fixed_point_is_constant() {
        let cfg = cfg(0.7);
        let (x_star, _) = geometry::fixed_points(&cfg).unwrap();
        let traj = iterate(&x_star, &cfg, 10, StopRule::none()).unwrap();
        assert_eq!(traj.num_points(), 11);
        for p in traj.points() {
            assert!(p.dist(&x_star) < 1e-14);
        }
    }

    #[test]
    fn iterate_diag_fields_follow_domains() {
        // start outside the slab: F undefined at k = 0, defined afterwards
        let traj = iterate(&vec2(3.0, 1.0), &cfg(0.5), 3, StopRule::none()).unwrap();
        let d0 = traj.diag()[0];
        assert!(d0.step_norm.is_none() && d0.f.is_none());
        assert!(d0.v.is_some() && d0.dist_to_fixed.is_some());
        let d1 = traj.diag()[1];
        assert!(d1.step_norm.is_some() && d1.f.is_some() && d1.v.is_some());

        // lambda > 1: no fixed point, no certificate
        let div = iterate(&vec2(1.0, 0.0), &ProblemConfig::new(2, 1.5).unwrap(), 3, StopRule::default()).unwrap();
        assert!(div.converged_at().is_none());
        for d in div.diag() {
            assert!(d.dist_to_fixed.is_none() && d.f.is_none() && d.v.is_none());
        }
    }

    #[test]
    fn iterate_errors_from_origin_orbit() {
        // on H0 with lambda = 0.5 the orbit (0, 1) -> (0, 0.5) -> origin
        let err = iterate(&vec2(0.0, 1.0), &cfg(0.5), 10, StopRule::none());
        assert!(matches!(err, Err(Error::OriginNotProjectable)));
    }

    #[test]
    fn tau_examples() {
        let profile = PerturbationProfile::new(0.05, 0.5).unwrap();
        let cfg6 = cfg(0.6);
        let (x_star, _) = geometry::fixed_points(&cfg6).unwrap();
        assert_eq!(tau(&x_star, &cfg6, &profile).unwrap(), 0.0);

        // 0.05 * sqrt(0.4), verified with 50-digit arithmetic
        let t = tau(&vec2(1.0, 0.0), &cfg6, &profile).unwrap();
        assert!((t - 0.031_622_776_601_683_79).abs() < 1e-15);

        // cap binding
        let profile1 = PerturbationProfile::new(1.0, 0.5).unwrap();
        let t = tau(&vec2(0.01, 100.0), &cfg(0.0), &profile1).unwrap();
        assert!((t - 0.005).abs() < 1e-17);

        // min{10, 0.5} with a huge gain
        let big = PerturbationProfile::new(10.0, 0.5).unwrap();
        let t = tau(&vec2(1.0, 0.0), &cfg(0.0), &big).unwrap();
        assert_eq!(t, 0.0); // (1,0) is x* itself for lambda = 0
        let t = tau(&vec2(1.0, 1.0), &cfg(0.0), &big).unwrap();
        assert_eq!(t, 0.5);
    }

    #[test]
    fn perturbed_step_at_fixed_point_is_identity() {
        // lambda = 0.6: the computed norm of x* is exactly 1, so the step
        // reproduces x* bitwise and both balls have radius zero
        let cfg6 = cfg(0.6);
        let (x_star, _) = geometry::fixed_points(&cfg6).unwrap();
        let profile = PerturbationProfile::new(0.1, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = perturbed_step(&x_star, &cfg6, &profile, PerturbationMode::RandomBall, &mut rng)
            .unwrap();
        assert_eq!(w.coords(), x_star.coords());

        // generic lambda: the computed step may sit one ulp off x*, so the
        // perturbed point stays within a few ulps rather than bitwise
        let cfg5 = cfg(0.5);
        let (x_star, _) = geometry::fixed_points(&cfg5).unwrap();
        let w = perturbed_step(&x_star, &cfg5, &profile, PerturbationMode::RandomBall, &mut rng)
            .unwrap();
        assert!(w.dist(&x_star) < 1e-15);
    }

    #[test]
    fn zero_gain_step_equals_exact_step() {
        let cfg5 = cfg(0.5);
        let profile = PerturbationProfile::new(0.0, 0.5).unwrap();
        let x = vec2(1.3, -0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = perturbed_step(&x, &cfg5, &profile, PerturbationMode::RandomBall, &mut rng)
            .unwrap();
        let t = geometry::dr_step(&x, &cfg5).unwrap();
        assert_eq!(w.coords(), t.coords());
    }

    #[test]
    fn perturbed_step_requires_h_plus() {
        let profile = PerturbationProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = perturbed_step(
            &vec2(-1.0, 0.0),
            &cfg(0.5),
            &profile,
            PerturbationMode::RandomBall,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::OutsideHPlus { .. })));
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let cfg5 = cfg(0.5);
        let starts = [vec2(1.0, 0.5), vec2(0.7, -0.3)];
        let profile = PerturbationProfile::new(0.05, 0.5).unwrap();
        let run = || {
            simulate_perturbed(
                &starts,
                &cfg5,
                &profile,
                64,
                3,
                PerturbationMode::AdversarialV { candidates: 4 },
                99,
            )
            .unwrap()
        };
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(run);
        for (ta, tb) in a.trajectories().iter().zip(b.trajectories()) {
            for (pa, pb) in ta.points().iter().zip(tb.points()) {
                assert_eq!(pa.coords(), pb.coords());
            }
        }
    }

    #[test]
    fn zero_gain_ensemble_matches_iterate_bitwise() {
        let cfg5 = cfg(0.5);
        let starts = [vec2(1.2, 0.8)];
        let profile = PerturbationProfile::new(0.0, 0.5).unwrap();
        let ens = simulate_perturbed(
            &starts,
            &cfg5,
            &profile,
            40,
            2,
            PerturbationMode::RandomBall,
            7,
        )
        .unwrap();
        let exact = iterate(&starts[0], &cfg5, 40, StopRule::none()).unwrap();
        for traj in ens.trajectories() {
            assert_eq!(traj.num_points(), exact.num_points());
            for (p, q) in traj.points().iter().zip(exact.points()) {
                assert_eq!(p.coords(), q.coords());
            }
            for (a, b) in traj.diag().iter().zip(exact.diag()) {
                assert_eq!(a.v, b.v);
                assert_eq!(a.f, b.f);
            }
        }
    }

    #[test]
    fn perturbed_paths_stay_in_h_plus() {
        let cfg3 = cfg(0.3);
        let starts = [vec2(0.05, 3.0), vec2(2.0, -2.0)];
        let profile = PerturbationProfile::new(0.2, 0.5).unwrap();
        let ens = simulate_perturbed(
            &starts,
            &cfg3,
            &profile,
            200,
            2,
            PerturbationMode::RandomBall,
            3,
        )
        .unwrap();
        for traj in ens.trajectories() {
            for p in traj.points() {
                assert!(p[0] > 0.0);
            }
        }
    }

    #[test]
    fn thinning_keeps_endpoints_and_indices() {
        let traj = iterate(&vec2(1.5, 2.0), &cfg(0.5), 100, StopRule::none()).unwrap();
        let thin = traj.thinned(10);
        assert_eq!(*thin.ks().first().unwrap(), 0);
        assert_eq!(*thin.ks().last().unwrap(), 100);
        assert_eq!(thin.num_points(), 11);
        assert_eq!(thin.points()[1].coords(), traj.points()[10].coords());
    }
}
