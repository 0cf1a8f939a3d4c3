//! Geometry of the deformed generatrix: stretches, curvatures and the
//! hydrostatic load.
//!
//! `s` is the undeformed distance from the axis (scaled by the membrane
//! radius). A trial shape is the pair `z(s)`, `r(s)` with its first two
//! derivatives. The axis is oriented so that a positive pressure constant
//! produces a positive pole sag `z(0) > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::StretchState;

/// Hydrostatic load `Q = C - D z`, with `z` measured from the centre of
/// the undeformed membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    /// Constant pressure component.
    pub c: f64,
    /// Liquid-weight slope, non-negative.
    pub d: f64,
}

impl LoadParams {
    pub fn new(c: f64, d: f64) -> Result<Self> {
        if !c.is_finite() || !d.is_finite() {
            return Err(Error::InvalidInput("load parameters must be finite".into()));
        }
        if d < 0.0 {
            return Err(Error::InvalidInput(format!(
                "liquid weight D = {d} must be >= 0"
            )));
        }
        Ok(Self { c, d })
    }

    pub fn uniform(c: f64) -> Self {
        Self { c, d: 0.0 }
    }

    /// Singular-perturbation parameter `1/D`, defined only for `D > 0`.
    pub fn mu(&self) -> Option<f64> {
        (self.d > 0.0).then(|| 1.0 / self.d)
    }

    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }
}

/// Trial shape and its `s`-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub z: f64,
    pub r: f64,
    pub dz: f64,
    pub dr: f64,
    pub d2z: f64,
    pub d2r: f64,
}

impl ShapeEval {
    /// Flat, unstretched membrane at `s`.
    pub fn undeformed(s: f64) -> Self {
        Self {
            z: 0.0,
            r: s,
            dz: 0.0,
            dr: 1.0,
            d2z: 0.0,
            d2r: 0.0,
        }
    }

    /// Meridional stretch `sqrt(z'² + r'²)`.
    pub fn lambda1(&self) -> f64 {
        self.dz.hypot(self.dr)
    }
}

/// Principal stretches at an interior point `s > 0`.
pub fn stretches(shape: &ShapeEval, s: f64) -> Result<StretchState> {
    if s <= 0.0 {
        return Err(Error::Singularity(
            "circumferential stretch r/s is undefined at s = 0; use pole_stretches".into(),
        ));
    }
    if shape.r <= 0.0 {
        return Err(Error::Singularity(format!(
            "non-positive radius r = {} at s = {s}",
            shape.r
        )));
    }
    Ok(StretchState::new(shape.lambda1(), shape.r / s))
}

/// Stretches at the pole, using the limit `r/s → r'(0)`.
pub fn pole_stretches(shape: &ShapeEval) -> StretchState {
    StretchState::new(shape.lambda1(), shape.dr)
}

/// Principal curvatures `(k1, k2)` of the deformed surface.
pub fn curvatures(shape: &ShapeEval) -> Result<(f64, f64)> {
    let l1 = shape.lambda1();
    if !(l1 > 0.0) {
        return Err(Error::Singularity("zero meridional stretch".into()));
    }
    if shape.r == 0.0 {
        return Err(Error::Singularity(
            "curvature k2 evaluated on the axis".into(),
        ));
    }
    let k1 = (shape.d2r * shape.dz - shape.dr * shape.d2z) / (l1 * l1 * l1);
    let k2 = -shape.dz / (shape.r * l1);
    Ok((k1, k2))
}

/// Curvatures at the pole. By symmetry `k2 = k1` there, and `k1` only
/// needs `r'(0)` and `z''(0)` because `z'(0) = 0`.
pub fn pole_curvatures(shape: &ShapeEval) -> (f64, f64) {
    let l1 = shape.lambda1();
    let k1 = (shape.d2r * shape.dz - shape.dr * shape.d2z) / (l1 * l1 * l1);
    (k1, k1)
}

pub fn hydro_load(z: f64, load: &LoadParams) -> f64 {
    load.c - load.d * z
}

/// Angle between the outer normal and the symmetry axis, with
/// `cos α = r'/λ1`.
pub fn normal_angle(shape: &ShapeEval) -> f64 {
    let l1 = shape.lambda1();
    (-shape.dz / l1).atan2(shape.dr / l1)
}
