//! Configuration file handling and flag parsing helpers.
//!
//! `--config FILE` supplies a JSON object whose fields *override* the
//! command-line flags. The seed is resolved as: config file, then `--seed`,
//! then the `DRDYN_SEED` environment variable, then the default 42.

use serde::Deserialize;

use drdyn_core::stability::AxisRange;
use drdyn_core::{Error, Result, Vector};

use crate::args::{BoundaryArgs, CertifyArgs, IterateArgs, ModeArg, PerturbedArgs, ScanArgs};

pub const DEFAULT_SEED: u64 = 42;

/// Optional overrides loaded from `--config`. Field names mirror the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    pub d: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub start: Option<Vec<f64>>,
    pub starts: Option<Vec<Vec<f64>>>,
    pub step_tol: Option<f64>,
    pub dist_tol: Option<f64>,
    pub thin: Option<usize>,
    pub grid: Option<String>,
    pub k_grid: Option<String>,
    pub e1_floor: Option<f64>,
    pub t_grid: Option<String>,
    pub budget: Option<usize>,
    pub eps_floor: Option<f64>,
    pub r_extent: Option<f64>,
    pub c: Option<f64>,
    pub cap_fraction: Option<f64>,
    pub mode: Option<String>,
    pub m: Option<usize>,
    pub runs: Option<usize>,
    pub calibrate: Option<bool>,
    pub candidates: Option<Vec<f64>>,
    pub target_dist: Option<f64>,
    pub burn_in: Option<usize>,
    pub tail_tol: Option<f64>,
    pub slack: Option<f64>,
    pub diverge_lambda: Option<f64>,
    pub h0_lambda: Option<f64>,
    pub lambda_one_starts: Option<Vec<Vec<f64>>>,
    pub diverge_starts: Option<Vec<Vec<f64>>>,
    pub h0_starts: Option<Vec<Vec<f64>>>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter {
                what: "config",
                why: format!("{}: {e}", path.display()),
            })
    }

    fn mode_arg(&self) -> Result<Option<ModeArg>> {
        match self.mode.as_deref() {
            None => Ok(None),
            Some("random") => Ok(Some(ModeArg::Random)),
            Some("adversarial") => Ok(Some(ModeArg::Adversarial)),
            Some(other) => Err(Error::InvalidParameter {
                what: "config",
                why: format!("mode must be \"random\" or \"adversarial\", got \"{other}\""),
            }),
        }
    }

    pub fn apply_iterate(&self, args: &mut IterateArgs) {
        override_from(&mut args.lambda, self.lambda);
        if self.d.is_some() {
            args.d = self.d;
        }
        if let Some(start) = &self.start {
            args.start = join_coords(start);
        }
        override_from(&mut args.n, self.n);
        override_from(&mut args.step_tol, self.step_tol);
        override_from(&mut args.dist_tol, self.dist_tol);
        if self.thin.is_some() {
            args.thin = self.thin;
        }
    }

    pub fn apply_scan(&self, args: &mut ScanArgs) {
        override_from(&mut args.lambda, self.lambda);
        override_from_clone(&mut args.grid, self.grid.as_ref());
        override_from_clone(&mut args.t_grid, self.t_grid.as_ref());
        override_from(&mut args.budget, self.budget);
        override_from(&mut args.eps_floor, self.eps_floor);
        override_from(&mut args.r_extent, self.r_extent);
    }

    pub fn apply_perturbed(&self, args: &mut PerturbedArgs) -> Result<()> {
        override_from(&mut args.lambda, self.lambda);
        if let Some(starts) = &self.starts {
            args.starts = Some(join_points(starts));
            args.k_grid = None;
        }
        if let Some(grid) = &self.k_grid {
            args.k_grid = Some(grid.clone());
            args.starts = None;
        }
        override_from(&mut args.e1_floor, self.e1_floor);
        override_from(&mut args.c, self.c);
        override_from(&mut args.cap_fraction, self.cap_fraction);
        if let Some(mode) = self.mode_arg()? {
            args.mode = mode;
        }
        override_from(&mut args.m, self.m);
        override_from(&mut args.n, self.n);
        override_from(&mut args.runs, self.runs);
        if self.thin.is_some() {
            args.thin = self.thin;
        }
        Ok(())
    }

    pub fn apply_certify(&self, args: &mut CertifyArgs) -> Result<()> {
        override_from(&mut args.lambda, self.lambda);
        override_from_clone(&mut args.k_grid, self.k_grid.as_ref());
        override_from(&mut args.e1_floor, self.e1_floor);
        override_from(&mut args.calibrate, self.calibrate);
        if let Some(cands) = &self.candidates {
            args.candidates = cands
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
        }
        override_from(&mut args.c, self.c);
        override_from(&mut args.cap_fraction, self.cap_fraction);
        if let Some(mode) = self.mode_arg()? {
            args.mode = mode;
        }
        override_from(&mut args.m, self.m);
        override_from(&mut args.n, self.n);
        override_from(&mut args.runs, self.runs);
        override_from(&mut args.target_dist, self.target_dist);
        override_from(&mut args.burn_in, self.burn_in);
        override_from(&mut args.tail_tol, self.tail_tol);
        override_from(&mut args.budget, self.budget);
        override_from(&mut args.eps_floor, self.eps_floor);
        override_from(&mut args.r_extent, self.r_extent);
        override_from_clone(&mut args.t_grid, self.t_grid.as_ref());
        override_from(&mut args.slack, self.slack);
        Ok(())
    }

    pub fn apply_boundary(&self, args: &mut BoundaryArgs) {
        override_from(&mut args.d, self.d);
        override_from(&mut args.n, self.n);
        override_from(&mut args.diverge_lambda, self.diverge_lambda);
        override_from(&mut args.h0_lambda, self.h0_lambda);
        if let Some(s) = &self.lambda_one_starts {
            args.lambda_one_starts = Some(join_points(s));
        }
        if let Some(s) = &self.diverge_starts {
            args.diverge_starts = Some(join_points(s));
        }
        if let Some(s) = &self.h0_starts {
            args.h0_starts = Some(join_points(s));
        }
    }
}

fn override_from<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn override_from_clone<T: Clone>(slot: &mut T, value: Option<&T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn join_coords(coords: &[f64]) -> String {
    coords
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_points(points: &[Vec<f64>]) -> String {
    points
        .iter()
        .map(|p| join_coords(p))
        .collect::<Vec<_>>()
        .join(";")
}

/// Resolves the run seed: config beats flag beats environment beats default.
pub fn resolve_seed(file: &FileConfig, flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = file.seed {
        return Ok(seed);
    }
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("DRDYN_SEED") {
        Ok(raw) => raw.parse().map_err(|_| Error::InvalidParameter {
            what: "DRDYN_SEED",
            why: format!("cannot parse \"{raw}\" as an unsigned integer"),
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Parses "a,b,c" into coordinates.
pub fn parse_point(raw: &str) -> Result<Vector> {
    let coords: Vec<f64> = raw
        .split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| Error::InvalidParameter {
                what: "point",
                why: format!("cannot parse coordinate \"{tok}\""),
            })
        })
        .collect::<Result<_>>()?;
    Vector::new(coords)
}

/// Parses "a,b;c,d" into a list of points.
pub fn parse_points(raw: &str) -> Result<Vec<Vector>> {
    raw.split(';').map(parse_point).collect()
}

/// Parses one "min:max:count" range.
pub fn parse_axis(raw: &str) -> Result<AxisRange> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParameter {
            what: "range",
            why: format!("expected min:max:count, got \"{raw}\""),
        });
    }
    let min = parts[0].trim().parse().map_err(|_| Error::InvalidParameter {
        what: "range",
        why: format!("bad minimum in \"{raw}\""),
    })?;
    let max = parts[1].trim().parse().map_err(|_| Error::InvalidParameter {
        what: "range",
        why: format!("bad maximum in \"{raw}\""),
    })?;
    let count = parts[2].trim().parse().map_err(|_| Error::InvalidParameter {
        what: "range",
        why: format!("bad count in \"{raw}\""),
    })?;
    Ok(AxisRange { min, max, count })
}

/// Parses "r1,r2,..." where each r is min:max:count.
pub fn parse_axes(raw: &str) -> Result<Vec<AxisRange>> {
    raw.split(',').map(parse_axis).collect()
}

/// Expands a min:max:count range into grid values.
pub fn parse_linspace(raw: &str) -> Result<Vec<f64>> {
    let axis = parse_axis(raw)?;
    if axis.count == 0 {
        return Err(Error::InvalidParameter {
            what: "range",
            why: "count must be at least 1".to_string(),
        });
    }
    Ok((0..axis.count)
        .map(|i| {
            if axis.count == 1 {
                axis.min
            } else {
                axis.min + (axis.max - axis.min) * i as f64 / (axis.count - 1) as f64
            }
        })
        .collect())
}

/// Parses a comma-separated list of reals.
pub fn parse_f64_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| Error::InvalidParameter {
                what: "list",
                why: format!("cannot parse \"{tok}\""),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_points_and_axes() {
        let p = parse_point("2, 0").unwrap();
        assert_eq!(p.coords(), &[2.0, 0.0]);
        let pts = parse_points("1,0;0.5,-0.5").unwrap();
        assert_eq!(pts.len(), 2);
        let axes = parse_axes("0.5:1.5:10,-1:1:5").unwrap();
        assert_eq!(axes.len(), 2);
        assert_eq!(axes[0].count, 10);
        let grid = parse_linspace("0:1:101").unwrap();
        assert_eq!(grid.len(), 101);
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), 1.0);
        assert!(parse_point("1,nope").is_err());
        assert!(parse_axis("1:2").is_err());
    }

    #[test]
    fn config_overrides_flags() {
        let file: FileConfig =
            serde_json::from_str(r#"{"lambda": 0.9, "n": 55, "start": [3, 4]}"#).unwrap();
        let mut args = IterateArgs {
            lambda: 0.5,
            d: None,
            start: "2,0".to_string(),
            n: 10_000,
            step_tol: 1e-12,
            dist_tol: 1e-9,
            thin: None,
        };
        file.apply_iterate(&mut args);
        assert_eq!(args.lambda, 0.9);
        assert_eq!(args.n, 55);
        assert_eq!(args.start, "3,4");
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"lambdaa": 0.9}"#);
        assert!(err.is_err());
    }

    #[test]
    fn seed_resolution_order() {
        let mut file = FileConfig::default();
        assert_eq!(resolve_seed(&file, Some(7)).unwrap(), 7);
        file.seed = Some(3);
        assert_eq!(resolve_seed(&file, Some(7)).unwrap(), 3);
    }
}
