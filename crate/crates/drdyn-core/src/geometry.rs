//! Projections, reflections, and the closed-form Douglas-Rachford step for
//! the sphere/line pair.
//!
//! The two sets are the unit Euclidean sphere `S` and the line `L` that runs
//! along the first axis at height `lambda` on the second axis. The
//! Douglas-Rachford operator averages the identity with the composition of
//! the two reflections, `T = (I + R_L R_S) / 2`, and for this pair it
//! collapses to a closed form: the first coordinate becomes `<x,e1>/|x|`,
//! every other coordinate is scaled by `1 - 1/|x|`, and `lambda` is added on
//! the second axis.
//!
//! All operations here are pure; none hold state.

use serde::Serialize;

use crate::error::{Error, Result};

/// A point in `R^d`: the state of the iteration.
///
/// Invariants enforced at construction: `d >= 2` (the construction uses both
/// `e1` and `e2`) and all coordinates finite.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector {
    coords: Vec<f64>,
}

impl Vector {
    /// Validates and wraps a coordinate list.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionTooSmall(coords.len()));
        }
        for (index, &value) in coords.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteCoordinate { index, value });
            }
        }
        Ok(Vector { coords })
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }

    /// Wraps coordinates produced internally, skipping validation.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() >= 2);
        Vector { coords }
    }

    /// The standard basis vector `e_axis` in `R^d`, scaled by `value`.
    pub fn axis(d: usize, axis: usize, value: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        let mut coords = vec![0.0; d];
        coords[axis] = value;
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Euclidean distance to `other`. Both vectors must share a dimension.
    pub fn dist(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

impl std::fmt::Display for Vector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Problem instance: dimension `d` and line offset `lambda`.
///
/// `lambda >= 0` is required; the mirrored case is reached through
/// [`mirror`]. `lambda > 1` is allowed so divergence experiments can run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProblemConfig {
    d: usize,
    lambda: f64,
}

impl ProblemConfig {
    pub fn new(d: usize, lambda: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::LambdaOutOfRange {
                lambda,
                expected: "[0, inf)",
            });
        }
        Ok(ProblemConfig { d, lambda })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Mixing dimensions across vectors is a contract violation; every
    /// configured operation checks it on entry.
    pub fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.dim(),
            });
        }
        Ok(())
    }
}

/// Sign class of `<x,e1>`: the open half-spaces `H+`/`H-`, the punctured
/// hyperplane `H0`, and the origin itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    HPlus,
    HMinus,
    HZero,
    Origin,
}

/// Orthogonal projection onto the line `L = {t e1 + lambda e2}`.
pub fn project_line(x: &Vector, cfg: &ProblemConfig) -> Result<Vector> {
    cfg.check_dim(x)?;
    let mut coords = vec![0.0; x.dim()];
    coords[0] = x[0];
    coords[1] = cfg.lambda();
    Ok(Vector::from_raw(coords))
}

/// Radial projection onto the unit sphere, `x / |x|`.
///
/// Fails at the origin, where the nearest point is not unique.
pub fn project_sphere(x: &Vector) -> Result<Vector> {
    let n = x.norm();
    if n == 0.0 {
        return Err(Error::OriginNotProjectable);
    }
    Ok(Vector::from_raw(x.coords().iter().map(|c| c / n).collect()))
}

/// Reflection `2p - x` of `x` through its projection `p`.
pub fn reflect(x: &Vector, p: &Vector) -> Result<Vector> {
    if x.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: p.dim(),
        });
    }
    Ok(Vector::from_raw(
        x.coords()
            .iter()
            .zip(p.coords())
            .map(|(xc, pc)| 2.0 * pc - xc)
            .collect(),
    ))
}

/// In-place closed-form step. `norm` must be the Euclidean norm of `coords`
/// and must be positive.
pub(crate) fn dr_step_in_place(coords: &mut [f64], norm: f64, lambda: f64) {
    debug_assert!(norm > 0.0);
    // |<x,e1>| <= |x| holds exactly; the clamp only absorbs a possible
    // one-ulp overshoot of the quotient.
    let first = (coords[0] / norm).clamp(-1.0, 1.0);
    let radial = 1.0 - 1.0 / norm;
    for c in coords.iter_mut() {
        *c *= radial;
    }
    coords[0] = first;
    coords[1] += lambda;
}

/// One Douglas-Rachford step via the closed form.
///
/// Agrees with the reflection composition `(x + R_L(R_S(x))) / 2` to within
/// rounding; the composition is kept as the independent test oracle.
pub fn dr_step(x: &Vector, cfg: &ProblemConfig) -> Result<Vector> {
    cfg.check_dim(x)?;
    let n = x.norm();
    if n == 0.0 {
        return Err(Error::OriginNotProjectable);
    }
    let mut coords = x.coords().to_vec();
    dr_step_in_place(&mut coords, n, cfg.lambda());
    Ok(Vector::from_raw(coords))
}

/// The two intersection points of the line and the sphere,
/// `x* = sqrt(1-lambda^2) e1 + lambda e2` and its mirror image `x_*`.
///
/// They are the only fixed points of the step when `lambda` is in `[0, 1]`;
/// at `lambda = 1` they coincide at `e2`.
pub fn fixed_points(cfg: &ProblemConfig) -> Result<(Vector, Vector)> {
    let lambda = cfg.lambda();
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange {
            lambda,
            expected: "[0, 1]",
        });
    }
    let head = (1.0 - lambda * lambda).sqrt();
    let mut plus = vec![0.0; cfg.d()];
    plus[0] = head;
    plus[1] = lambda;
    let mut minus = plus.clone();
    minus[0] = -head;
    Ok((Vector::from_raw(plus), Vector::from_raw(minus)))
}

/// Classifies `x` by the exact floating-point sign of `<x,e1>`.
///
/// No tolerance band is applied; callers that need robustness apply their
/// own margins.
pub fn classify_region(x: &Vector) -> Region {
    let x1 = x[0];
    if x1 > 0.0 {
        Region::HPlus
    } else if x1 < 0.0 {
        Region::HMinus
    } else if x.coords().iter().all(|&c| c == 0.0) {
        Region::Origin
    } else {
        Region::HZero
    }
}

/// Whether `x` lies in the slab `0 < <x,e1> <= 1` that one step absorbs
/// `H+` into.
pub fn in_delta(x: &Vector) -> bool {
    x[0] > 0.0 && x[0] <= 1.0
}

/// Negates the first coordinate, swapping `H+` and `H-`.
///
/// The step commutes with this map, which is how the `H-` case is reduced
/// to the `H+` one.
pub fn mirror(x: &Vector) -> Vector {
    let mut coords = x.coords().to_vec();
    coords[0] = -coords[0];
    Vector::from_raw(coords)
}
