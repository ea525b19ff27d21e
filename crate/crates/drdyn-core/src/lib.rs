//! Douglas-Rachford dynamics for the sphere/line feasibility pair.
//!
//! The iteration `x_{k+1} = T x_k` with `T = (I + R_L R_S)/2` finds a point
//! common to the unit sphere and a line offset by `lambda` on the second
//! axis. This crate provides:
//!
//! * [`geometry`] — exact projections, reflections, the closed-form step,
//!   region classification, and the fixed points;
//! * [`lyapunov`] — the explicit certificate `F` with its derived functions
//!   `U`, `V`, `W`, plus sampled estimates of the decrease-rate functions
//!   `g` and `alpha`;
//! * [`dynamics`] — exact trajectories with diagnostics, and set-valued
//!   perturbed trajectories whose state-dependent radius keeps them inside
//!   the half-space `H+`;
//! * [`stability`] — Lyapunov condition checks, empirical class-KL
//!   envelopes with held-out validation, uniform-convergence curves over
//!   compact start grids, gain calibration, and the boundary experiments;
//! * [`report`] — CSV/JSON writers with 17-significant-digit floats so
//!   reruns are byte-identical.
//!
//! ```
//! use drdyn_core::{dr_step, iterate, ProblemConfig, StopRule, Vector};
//!
//! let cfg = ProblemConfig::new(2, 0.0)?;
//! let start = Vector::new(vec![2.0, 0.0])?;
//! // one step lands on the intersection point e1
//! assert_eq!(dr_step(&start, &cfg)?.coords(), &[1.0, 0.0]);
//! let traj = iterate(&start, &cfg, 100, StopRule::default())?;
//! assert!(traj.converged_at().is_some());
//! # Ok::<(), drdyn_core::Error>(())
//! ```

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod lyapunov;
pub mod report;
pub mod sampling;
pub mod stability;

pub use dynamics::{
    iterate, perturbed_step, perturbed_step_traced, simulate_perturbed, tau, PerturbationMode,
    PerturbationProfile, PerturbedEnsemble, StepDiag, StopRule, Trajectory,
};
pub use error::{Error, Result};
pub use geometry::{
    classify_region, dr_step, fixed_points, in_delta, mirror, project_line, project_sphere,
    reflect, ProblemConfig, Region, Vector,
};
pub use lyapunov::{
    estimate_alpha, estimate_g, eval_f, Certificate, CertificateValue, RateEstimate, RateKind,
};
pub use sampling::BoxSpec;
pub use stability::{
    boundary_experiments, calibrate_gain, check_lyapunov_conditions, fit_kl_envelope,
    fit_kl_envelope_from, split_by_parity, sup_distance_curve, validate_envelope,
    verify_uniform_convergence, AxisRange, BoundaryReport, BoundarySettings, Calibration,
    CompactGrid, ConvergenceCriteria, KLEnvelope, StabilityReport, SupDistanceCurve, Violation,
};
