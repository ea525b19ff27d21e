//! Deterministic sample generation.
//!
//! Infimum estimators draw quasi-uniform points from a slab-shaped box via a
//! Kronecker (additive-recurrence) low-discrepancy sequence, chunked so that
//! results are bit-identical for a fixed `(seed, budget)` no matter how the
//! chunks are scheduled. Perturbed dynamics draw uniform points from
//! Euclidean balls with an explicit RNG stream.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Vector;

/// Sampling box `{ <x,e1> in [eps_floor, 1], |<x,ej>| <= r_extent }`.
///
/// The slab is unbounded in coordinates 2..d, and the function being
/// minimized blows up as `<x,e1> -> 0`, so estimates restrict to this box;
/// both knobs are reported alongside every estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxSpec {
    eps_floor: f64,
    r_extent: f64,
}

impl BoxSpec {
    pub fn new(eps_floor: f64, r_extent: f64) -> Result<Self> {
        if !eps_floor.is_finite() || eps_floor <= 0.0 || eps_floor > 1.0 {
            return Err(Error::invalid(
                "eps_floor",
                format!("must lie in (0, 1], got {eps_floor}"),
            ));
        }
        if !r_extent.is_finite() || r_extent <= eps_floor {
            return Err(Error::invalid(
                "r_extent",
                format!("must exceed eps_floor = {eps_floor}, got {r_extent}"),
            ));
        }
        Ok(BoxSpec {
            eps_floor,
            r_extent,
        })
    }

    pub fn eps_floor(&self) -> f64 {
        self.eps_floor
    }

    pub fn r_extent(&self) -> f64 {
        self.r_extent
    }

    /// Maps a unit-cube point into the box.
    pub(crate) fn map_unit(&self, unit: &[f64], out: &mut [f64]) {
        debug_assert_eq!(unit.len(), out.len());
        out[0] = self.eps_floor + unit[0] * (1.0 - self.eps_floor);
        for j in 1..unit.len() {
            out[j] = self.r_extent * (2.0 * unit[j] - 1.0);
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        let c = x.coords();
        c[0] >= self.eps_floor
            && c[0] <= 1.0
            && c[1..].iter().all(|&v| v.abs() <= self.r_extent)
    }

    /// Distance from `x` to the farthest corner of the box.
    pub(crate) fn max_dist_from(&self, x: &Vector) -> f64 {
        let c = x.coords();
        let mut sum = {
            let lo = (c[0] - self.eps_floor).abs();
            let hi = (1.0 - c[0]).abs();
            lo.max(hi).powi(2)
        };
        for &v in &c[1..] {
            let lo = (v + self.r_extent).abs();
            let hi = (self.r_extent - v).abs();
            sum += lo.max(hi).powi(2);
        }
        sum.sqrt()
    }
}

impl Default for BoxSpec {
    fn default() -> Self {
        BoxSpec {
            eps_floor: 1e-3,
            r_extent: 10.0,
        }
    }
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of one sample chunk from the run seed.
pub(crate) fn chunk_seed(seed: u64, chunk: u64) -> u64 {
    let mut state = seed ^ chunk.wrapping_mul(0xd1b5_4a32_d192_ed03);
    splitmix64(&mut state)
}

/// Chunk length used by the estimators; the merge is in chunk order, so the
/// value only affects parallel granularity, not results.
pub(crate) const SAMPLE_CHUNK: usize = 8192;

/// Kronecker sequence `u_i = frac(offset + (i+1) * alpha)` with the alphas
/// derived from the d-dimensional generalization of the golden ratio (the
/// positive root of `x^(d+1) = x + 1`).
pub(crate) struct Kronecker {
    alphas: Vec<f64>,
    offsets: Vec<f64>,
}

impl Kronecker {
    pub(crate) fn new(d: usize, seed: u64) -> Self {
        let mut phi = 1.5f64;
        for _ in 0..64 {
            // Newton on x^(d+1) - x - 1
            let p = phi.powi(d as i32 + 1) - phi - 1.0;
            let dp = (d as f64 + 1.0) * phi.powi(d as i32) - 1.0;
            phi -= p / dp;
        }
        let mut alphas = Vec::with_capacity(d);
        let mut a = 1.0;
        for _ in 0..d {
            a /= phi;
            alphas.push(a.fract());
        }
        let mut state = seed;
        let offsets = (0..d)
            .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64)
            .collect();
        Kronecker { alphas, offsets }
    }

    pub(crate) fn point(&self, index: usize, out: &mut [f64]) {
        let step = index as f64 + 1.0;
        for (slot, (&offset, &alpha)) in out.iter_mut().zip(self.offsets.iter().zip(&self.alphas))
        {
            *slot = (offset + step * alpha).fract();
        }
    }
}

/// Uniform draw from the closed ball `B[center, radius]`.
///
/// Direction is an isotropic Gaussian normalized to the unit sphere; the
/// radius is `radius * u^(1/d)`, the exact radial law of the uniform
/// distribution on a d-ball.
pub(crate) fn sample_in_ball<R: Rng>(rng: &mut R, center: &[f64], radius: f64, out: &mut [f64]) {
    debug_assert_eq!(center.len(), out.len());
    let d = center.len();
    loop {
        let mut norm_sq = 0.0;
        for slot in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *slot = g;
            norm_sq += g * g;
        }
        if norm_sq > 0.0 {
            let u: f64 = rng.random::<f64>();
            let r = radius
                * if d == 2 {
                    u.sqrt()
                } else {
                    u.powf(1.0 / d as f64)
                };
            let scale = r / norm_sq.sqrt();
            for (slot, &c) in out.iter_mut().zip(center) {
                *slot = c + *slot * scale;
            }
            return;
        }
    }
}
