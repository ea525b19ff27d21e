//! Command-line surface.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "drdyn",
    version,
    about = "Douglas-Rachford sphere/line dynamics: exact and perturbed runs, \
             Lyapunov certificate scans, stability certification, boundary experiments",
    after_help = "Values from --config override command-line flags. \
                  DRDYN_SEED overrides the default seed when neither --seed \
                  nor a config seed is given."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration file; fields present in it override flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory the command writes its files into.
    #[arg(long, global = true, default_value = "drdyn-out", value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Cap on worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Additionally emit gnuplot-ready .dat files.
    #[arg(long, global = true)]
    pub gnuplot: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the exact iteration from one start.
    Iterate(IterateArgs),
    /// Tabulate F/U/V/W over a grid and estimate the rate functions g, alpha.
    LyapunovScan(ScanArgs),
    /// Simulate sigma-perturbed set-valued trajectories.
    Perturbed(PerturbedArgs),
    /// Run the stability checks and emit a certification report.
    Certify(CertifyArgs),
    /// Run the lambda = 1, lambda > 1, and H0 boundary experiments.
    Boundary(BoundaryArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Random,
    Adversarial,
}

#[derive(Parser, Debug)]
pub struct IterateArgs {
    /// Line offset lambda.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,

    /// Ambient dimension (inferred from --start when omitted).
    #[arg(long)]
    pub d: Option<usize>,

    /// Start point, comma-separated coordinates, e.g. "2,0".
    #[arg(long, value_name = "X1,X2,..")]
    pub start: String,

    /// Step budget.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,

    /// Early-stop tolerance on the step norm.
    #[arg(long, default_value_t = 1e-12)]
    pub step_tol: f64,

    /// Early-stop tolerance on the distance to x*.
    #[arg(long, default_value_t = 1e-9)]
    pub dist_tol: f64,

    /// Keep only every STRIDE-th trajectory row (plus first and last).
    #[arg(long, value_name = "STRIDE")]
    pub thin: Option<usize>,
}

#[derive(Parser, Debug)]
pub struct ScanArgs {
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,

    /// Evaluation grid, one min:max:count range per axis,
    /// e.g. "0.05:1:20,-2:2:21".
    #[arg(long, default_value = "0.05:1:20,-2:2:21")]
    pub grid: String,

    /// Radius grid for the rate estimates, min:max:count.
    #[arg(long, default_value = "0:1:101")]
    pub t_grid: String,

    /// Sample budget per estimate.
    #[arg(long, default_value_t = 100_000)]
    pub budget: usize,

    /// Lower bound of the sampling box on the first coordinate.
    #[arg(long, default_value_t = 1e-3)]
    pub eps_floor: f64,

    /// Half-width of the sampling box on coordinates 2..d.
    #[arg(long, default_value_t = 10.0)]
    pub r_extent: f64,
}

#[derive(Parser, Debug)]
pub struct PerturbedArgs {
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,

    /// Start points, semicolon-separated, e.g. "1,0.5;0.7,-0.3".
    #[arg(long, value_name = "P1;P2;..", conflicts_with = "k_grid")]
    pub starts: Option<String>,

    /// Start grid, one min:max:count range per axis.
    #[arg(long, value_name = "RANGES")]
    pub k_grid: Option<String>,

    /// Required floor on the first coordinate of grid starts.
    #[arg(long, default_value_t = 1e-3)]
    pub e1_floor: f64,

    /// Perturbation gain c in sigma(x) = c |x - x*|.
    #[arg(long, default_value_t = 0.02)]
    pub c: f64,

    /// Cap fraction in tau(x) = min(sigma(x), cap * <x,e1>).
    #[arg(long, default_value_t = 0.5)]
    pub cap_fraction: f64,

    /// How each step selects within the perturbation set.
    #[arg(long, value_enum, default_value_t = ModeArg::Random)]
    pub mode: ModeArg,

    /// Candidate draws per step in adversarial mode.
    #[arg(long, default_value_t = 16)]
    pub m: usize,

    /// Steps per trajectory (no early stopping).
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,

    /// Independent runs per start.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,

    /// Keep only every STRIDE-th row of each trajectory CSV.
    #[arg(long, value_name = "STRIDE")]
    pub thin: Option<usize>,
}

#[derive(Parser, Debug)]
pub struct CertifyArgs {
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,

    /// Compact start set K, one min:max:count range per axis.
    #[arg(long, default_value = "0.5:1.5:10,-1:1:5")]
    pub k_grid: String,

    /// Required floor on the first coordinate of K.
    #[arg(long, default_value_t = 1e-3)]
    pub e1_floor: f64,

    /// Sweep the gain candidates instead of using --c.
    #[arg(long)]
    pub calibrate: bool,

    /// Descending gain candidates for --calibrate.
    #[arg(long, default_value = "0.1,0.05,0.02,0.01")]
    pub candidates: String,

    /// Fixed perturbation gain (ignored under --calibrate).
    #[arg(long, default_value_t = 0.02)]
    pub c: f64,

    #[arg(long, default_value_t = 0.5)]
    pub cap_fraction: f64,

    #[arg(long, value_enum, default_value_t = ModeArg::Adversarial)]
    pub mode: ModeArg,

    #[arg(long, default_value_t = 16)]
    pub m: usize,

    /// Steps per trajectory.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    /// Runs per start.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,

    /// Sup-distance the ensemble must reach by step n.
    #[arg(long, default_value_t = 1e-2)]
    pub target_dist: f64,

    /// Steps before which the sup-distance curve may be non-monotone.
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,

    /// Allowed per-step curve increase after burn-in.
    #[arg(long, default_value_t = 1e-12)]
    pub tail_tol: f64,

    /// Sample budget for the rate estimates and condition checks.
    #[arg(long, default_value_t = 100_000)]
    pub budget: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub eps_floor: f64,

    #[arg(long, default_value_t = 10.0)]
    pub r_extent: f64,

    /// Radius grid for the rate estimates, min:max:count.
    #[arg(long, default_value = "0:1:101")]
    pub t_grid: String,

    /// Slack for the sampled decrease check.
    #[arg(long, default_value_t = 1e-5)]
    pub slack: f64,

    /// Also export the envelope and curves as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Parser, Debug)]
pub struct BoundaryArgs {
    /// Ambient dimension.
    #[arg(long, default_value_t = 2)]
    pub d: usize,

    /// Step budget per run.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,

    /// Offset for the divergence case (must exceed 1).
    #[arg(long, default_value_t = 1.5)]
    pub diverge_lambda: f64,

    /// Offset used for the H0 case.
    #[arg(long, default_value_t = 0.5)]
    pub h0_lambda: f64,

    /// Override the lambda = 1 starts, semicolon-separated points.
    #[arg(long, value_name = "P1;P2;..")]
    pub lambda_one_starts: Option<String>,

    /// Override the divergence starts.
    #[arg(long, value_name = "P1;P2;..")]
    pub diverge_starts: Option<String>,

    /// Override the H0 starts.
    #[arg(long, value_name = "P1;P2;..")]
    pub h0_starts: Option<String>,
}
