//! Output formats: CSV tables, manifests, and JSON with full-precision
//! floats.
//!
//! Every floating-point field is written with 17 significant digits, enough
//! to reproduce the exact f64 bit pattern on read-back, so reruns with the
//! same configuration produce byte-identical files and diff-based regression
//! checks are meaningful.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::dynamics::{PerturbationMode, PerturbedEnsemble, Trajectory};
use crate::error::{Error, Result};
use crate::lyapunov::{Certificate, RateEstimate};
use crate::stability::{KLEnvelope, SupDistanceCurve};

/// Formats one float with 17 significant digits.
pub fn fmt_g17(value: f64) -> String {
    format!("{value:.16e}")
}

fn opt_g17(value: Option<f64>) -> String {
    value.map(fmt_g17).unwrap_or_default()
}

/// Writes a trajectory as `k,x_1..x_d,step_norm,dist_to_fixed,F,V` with
/// empty fields where a quantity is undefined.
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory) -> io::Result<()> {
    let d = traj.config().d();
    write!(out, "k")?;
    for j in 1..=d {
        write!(out, ",x_{j}")?;
    }
    writeln!(out, ",step_norm,dist_to_fixed,F,V")?;
    for (k, point, diag) in traj.rows() {
        write!(out, "{k}")?;
        for c in point.coords() {
            write!(out, ",{}", fmt_g17(*c))?;
        }
        writeln!(
            out,
            ",{},{},{},{}",
            opt_g17(diag.step_norm),
            opt_g17(diag.dist_to_fixed),
            opt_g17(diag.f),
            opt_g17(diag.v),
        )?;
    }
    Ok(())
}

/// Writes a rate estimate as `t,value,budget,eps_floor,r_extent,seed`.
pub fn write_rate_csv<W: Write>(out: &mut W, est: &RateEstimate) -> io::Result<()> {
    writeln!(out, "t,value,budget,eps_floor,r_extent,seed")?;
    for (t, v) in est.t_grid.iter().zip(&est.values) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_g17(*t),
            fmt_g17(*v),
            est.sample_budget,
            fmt_g17(est.region_box.eps_floor()),
            fmt_g17(est.region_box.r_extent()),
            est.seed,
        )?;
    }
    Ok(())
}

/// Writes an envelope in long form as `s,n,beta`.
pub fn write_envelope_csv<W: Write>(out: &mut W, env: &KLEnvelope) -> io::Result<()> {
    writeln!(out, "s,n,beta")?;
    for (si, s) in env.s_grid.iter().enumerate() {
        for (ni, n) in env.n_grid.iter().enumerate() {
            writeln!(out, "{},{n},{}", fmt_g17(*s), fmt_g17(env.beta_hat[si][ni]))?;
        }
    }
    Ok(())
}

/// Writes a sup-distance curve as `n,sup_dist`.
pub fn write_curve_csv<W: Write>(out: &mut W, curve: &SupDistanceCurve) -> io::Result<()> {
    writeln!(out, "n,sup_dist")?;
    for (n, d) in curve.n_grid.iter().zip(&curve.sup_dist) {
        writeln!(out, "{n},{}", fmt_g17(*d))?;
    }
    Ok(())
}

/// Writes certificate values over a list of points as
/// `x_1..x_d,F,U,V,W` with empty fields outside each quantity's domain.
pub fn write_scan_csv<W: Write>(
    out: &mut W,
    cert: &Certificate,
    points: &[crate::geometry::Vector],
) -> io::Result<()> {
    let d = cert.config().d();
    for j in 1..=d {
        if j > 1 {
            write!(out, ",")?;
        }
        write!(out, "x_{j}")?;
    }
    writeln!(out, ",F,U,V,W")?;
    for x in points {
        for (j, c) in x.coords().iter().enumerate() {
            if j > 0 {
                write!(out, ",")?;
            }
            write!(out, "{}", fmt_g17(*c))?;
        }
        let cv = cert.certificate_value(x).ok();
        let v = cv.map(|c| c.v).or_else(|| cert.eval_v(x).ok());
        writeln!(
            out,
            ",{},{},{},{}",
            opt_g17(cv.map(|c| c.f)),
            opt_g17(cv.map(|c| c.u)),
            opt_g17(v),
            opt_g17(cv.map(|c| c.w)),
        )?;
    }
    Ok(())
}

/// Gnuplot-friendly trajectory table: `k dist_to_fixed F V step_norm`,
/// space-separated with `nan` for missing values.
pub fn write_trajectory_dat<W: Write>(out: &mut W, traj: &Trajectory) -> io::Result<()> {
    writeln!(out, "# k dist_to_fixed F V step_norm")?;
    for (k, _, diag) in traj.rows() {
        writeln!(
            out,
            "{k} {} {} {} {}",
            diag.dist_to_fixed.unwrap_or(f64::NAN),
            diag.f.unwrap_or(f64::NAN),
            diag.v.unwrap_or(f64::NAN),
            diag.step_norm.unwrap_or(f64::NAN),
        )?;
    }
    Ok(())
}

/// Gnuplot-friendly curve table: `n sup_dist`.
pub fn write_curve_dat<W: Write>(out: &mut W, curve: &SupDistanceCurve) -> io::Result<()> {
    writeln!(out, "# n sup_dist")?;
    for (n, d) in curve.n_grid.iter().zip(&curve.sup_dist) {
        writeln!(out, "{n} {d}")?;
    }
    Ok(())
}

/// JSON formatter that renders every float with 17 significant digits.
struct F17Pretty<'a> {
    inner: PrettyFormatter<'a>,
}

macro_rules! delegate {
    ($name:ident) => {
        fn $name<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
            self.inner.$name(writer)
        }
    };
    ($name:ident, first) => {
        fn $name<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
            self.inner.$name(writer, first)
        }
    };
}

impl Formatter for F17Pretty<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            self.inner.write_f64(writer, value)
        }
    }

    delegate!(begin_array);
    delegate!(end_array);
    delegate!(begin_array_value, first);
    delegate!(end_array_value);
    delegate!(begin_object);
    delegate!(end_object);
    delegate!(begin_object_key, first);
    delegate!(begin_object_value);
    delegate!(end_object_value);
}

struct F17Compact;

impl Formatter for F17Compact {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            CompactFormatter.write_f64(writer, value)
        }
    }
}

/// Serializes to indented JSON with full-precision floats.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        F17Pretty {
            inner: PrettyFormatter::new(),
        },
    );
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Serialize(e.to_string()))
}

/// Serializes to compact JSON with full-precision floats; this canonical
/// form is what configuration hashes are computed over.
pub fn to_json_compact<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, F17Compact);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| Error::Serialize(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(digest.len() * 2);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Hash of the canonical JSON form of a configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(to_json_compact(config)?.as_bytes()))
}

/// One file listed in a manifest.
#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub kind: String,
}

/// Generic run manifest: the configuration verbatim, its hash, and the
/// files the run produced.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub outputs: Vec<OutputFile>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Result<Self> {
        let config_sha256 = config_hash(&config)?;
        Ok(RunManifest {
            tool: concat!("drdyn ", env!("CARGO_PKG_VERSION")).to_string(),
            command: command.to_string(),
            config,
            config_sha256,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        })
    }

    pub fn push_output(&mut self, path: impl Into<String>, kind: impl Into<String>) {
        self.outputs.push(OutputFile {
            path: path.into(),
            kind: kind.into(),
        });
    }
}

/// Per-trajectory summary row of an ensemble manifest.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub start_index: usize,
    pub run_index: usize,
    pub rng_stream: u64,
    pub steps: usize,
    pub final_distance: Option<f64>,
    pub max_v: Option<f64>,
    pub file: Option<String>,
}

/// Ensemble manifest: configuration, profile, seeds, mode, and one summary
/// row per trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleManifest {
    pub tool: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub profile: crate::dynamics::PerturbationProfile,
    pub mode: PerturbationMode,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub runs_per_start: usize,
    pub trajectories: Vec<TrajectorySummary>,
}

impl EnsembleManifest {
    /// Builds the manifest; `files[i]`, when given, names the CSV written
    /// for trajectory `i`.
    pub fn new(
        ensemble: &PerturbedEnsemble,
        config: serde_json::Value,
        files: Option<&[String]>,
    ) -> Result<Self> {
        let config_sha256 = config_hash(&config)?;
        let trajectories = ensemble
            .trajectories()
            .iter()
            .enumerate()
            .map(|(i, traj)| {
                let (start_index, run_index) = ensemble.provenance(i);
                let max_v = traj
                    .diag()
                    .iter()
                    .filter_map(|d| d.v)
                    .fold(None, |acc: Option<f64>, v| {
                        Some(acc.map_or(v, |a| a.max(v)))
                    });
                TrajectorySummary {
                    index: i,
                    start_index,
                    run_index,
                    rng_stream: ensemble.seeds()[i],
                    steps: traj.num_points() - 1,
                    final_distance: traj.final_diag().dist_to_fixed,
                    max_v,
                    file: files.and_then(|f| f.get(i).cloned()),
                }
            })
            .collect();
        Ok(EnsembleManifest {
            tool: concat!("drdyn ", env!("CARGO_PKG_VERSION")).to_string(),
            config,
            config_sha256,
            profile: *ensemble.profile(),
            mode: ensemble.mode(),
            seed: ensemble.seed(),
            seeds: ensemble.seeds().to_vec(),
            runs_per_start: ensemble.runs_per_start(),
            trajectories,
        })
    }
}
