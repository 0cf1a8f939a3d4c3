//! Coordinate functions for the Ritz expansions
//!
//! ```text
//! z(s) = Σ x_k u_k(s),    r(s) = s + Σ x_{m+k} v_k(s)
//! ```
//!
//! Every family satisfies `u_k'(0) = u_k(1) = v_k(0) = v_k(1) = 0`, so the
//! clamped-edge and pole conditions hold for any coefficient vector.
//!
//! * polynomial: `u_k = (s² - 1) s^{2k-2}`, `v_k = (s² - 1) s^{2k-1}`
//! * adaptive: built from `φ(s) = I0(y(s))`, `y(s) = Σ_{k=1..n} p_k s^{2k-1}`,
//!   with `u_1 = 1 - φ(s)/φ(1)`, `u_2 = (s² - 1) φ(s)/φ(1)`,
//!   `u_k = s² u_{k-1}` for `k >= 3` and `v_k = s u_k`.
//!
//! The ratio `φ(s)/φ(1)` is evaluated as
//! `exp(|y(s)| - |y(1)|) · Î0(|y(s)|) / Î0(|y(1)|)` with `Î0(x) = e^{-x} I0(x)`,
//! so large shape parameters do not overflow.

pub mod bessel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{LoadParams, ShapeEval};

pub use bessel::{bessel_i0_i1, bessel_i0_i1_scaled};

/// Smallest admissible first shape parameter of the adaptive family.
/// Below it the family is numerically indistinguishable from the
/// polynomial one.
pub const P_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Polynomial,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    /// Coordinate functions per displacement component.
    pub m: usize,
    /// Shape parameters `p_1..p_n` (adaptive family only).
    #[serde(default)]
    pub p: Vec<f64>,
}

/// A scalar function with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    /// `s · self` with derivatives.
    fn times_s(self, s: f64) -> Self {
        Self::new(
            s * self.v,
            self.v + s * self.d1,
            2.0 * self.d1 + s * self.d2,
        )
    }
}

/// `s^n` with two derivatives, exact at `s = 0`.
fn mono(n: i32, s: f64) -> Jet {
    let nf = n as f64;
    let v = if n == 0 { 1.0 } else { s.powi(n) };
    let d1 = if n == 0 { 0.0 } else { nf * s.powi(n - 1) };
    let d2 = if n <= 1 {
        0.0
    } else {
        nf * (nf - 1.0) * s.powi(n - 2)
    };
    Jet::new(v, d1, d2)
}

/// `s^a - s^b`.
fn mono_diff(a: i32, b: i32, s: f64) -> Jet {
    let x = mono(a, s);
    let y = mono(b, s);
    Jet::new(x.v - y.v, x.d1 - y.d1, x.d2 - y.d2)
}

/// Value of `φ` and the parameter sensitivities needed by assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEval {
    pub phi: f64,
    pub dphi: f64,
    pub d2phi: f64,
    /// `∂φ/∂p_i`.
    pub dphi_dp: Vec<f64>,
    /// `∂φ'/∂p_i`.
    pub ddphi_dp: Vec<f64>,
}

/// `y(s) = Σ p_k s^{2k-1}` with two derivatives.
fn odd_argument(s: f64, p: &[f64]) -> Jet {
    p.iter().enumerate().fold(Jet::default(), |acc, (i, &pk)| {
        let t = mono(2 * i as i32 + 1, s);
        Jet::new(acc.v + pk * t.v, acc.d1 + pk * t.d1, acc.d2 + pk * t.d2)
    })
}

/// Unscaled `φ(s) = I0(y(s))` and its derivatives. Overflows for
/// `|y| > ~700`; assembly uses the scaled ratio instead.
pub fn phi(s: f64, p: &[f64]) -> PhiEval {
    let y = odd_argument(s, p);
    let ay = y.v.abs();
    let sg = y.v.signum();
    let (i0, i1_abs) = bessel_i0_i1(ay);
    let i1 = sg * i1_abs;
    let i1_over_y = if ay < 1e-8 { 0.5 } else { i1_abs / ay };
    let i1_prime = i0 - i1_over_y;
    let mut dphi_dp = Vec::with_capacity(p.len());
    let mut ddphi_dp = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let t = mono(2 * i as i32 + 1, s);
        dphi_dp.push(i1 * t.v);
        ddphi_dp.push(i1_prime * t.v * y.d1 + i1 * t.d1);
    }
    PhiEval {
        phi: i0,
        dphi: i1 * y.d1,
        d2phi: i1_prime * y.d1 * y.d1 + i1 * y.d2,
        dphi_dp,
        ddphi_dp,
    }
}

/// The ratio `R(s) = φ(s)/φ(1)` with `s`-derivatives and `p`-sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEval {
    pub r: Jet,
    /// `1 - R(s)`, evaluated without cancellation when `R` is close to 1.
    pub one_minus_r: f64,
    /// `∂R/∂p_i`.
    pub r_p: Vec<f64>,
    /// `∂R'/∂p_i`.
    pub dr_p: Vec<f64>,
}

pub fn phi_ratio(s: f64, p: &[f64]) -> RatioEval {
    let y = odd_argument(s, p);
    let y1: f64 = p.iter().sum();
    let (ay, ay1) = (y.v.abs(), y1.abs());
    let (sg, sg1) = (y.v.signum(), y1.signum());
    let (a0, a1) = bessel_i0_i1_scaled(ay);
    let (b0, b1) = bessel_i0_i1_scaled(ay1);
    let scale = (ay - ay1).exp() / b0;
    let i1_over_y = bessel::i1_over_x_scaled(ay);
    let i1 = sg * a1;
    let i1_prime = a0 - i1_over_y;

    let r = Jet::new(
        scale * a0,
        scale * i1 * y.d1,
        scale * (i1_prime * y.d1 * y.d1 + i1 * y.d2),
    );
    let edge = sg1 * b1 / b0;
    let mut r_p = Vec::with_capacity(p.len());
    let mut dr_p = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let t = mono(2 * i as i32 + 1, s);
        r_p.push(scale * i1 * t.v - r.v * edge);
        dr_p.push(scale * (i1_prime * t.v * y.d1 + i1 * t.d1) - r.d1 * edge);
    }
    let one_minus_r = if ay1 < 2.0 {
        // Σ_k [(y1/2)^{2k} - (y/2)^{2k}] / (k!)² over I0(y1)
        let (q, q1) = (0.25 * y.v * y.v, 0.25 * y1 * y1);
        let (mut tq, mut tq1, mut acc) = (1.0, 1.0, 0.0);
        for k in 1..40 {
            let kk = (k * k) as f64;
            tq *= q / kk;
            tq1 *= q1 / kk;
            acc += tq1 - tq;
        }
        acc / (b0 * ay1.exp())
    } else {
        1.0 - r.v
    };
    RatioEval {
        r,
        one_minus_r,
        r_p,
        dr_p,
    }
}

/// All coordinate functions of a basis at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPoint {
    pub u: Vec<Jet>,
    pub v: Vec<Jet>,
    /// `(∂u_k/∂p_i, ∂u_k'/∂p_i)` indexed `[k][i]`; empty for the
    /// polynomial family.
    pub u_p: Vec<Vec<(f64, f64)>>,
    pub v_p: Vec<Vec<(f64, f64)>>,
}

impl BasisSpec {
    pub fn polynomial(m: usize) -> Self {
        Self {
            family: BasisFamily::Polynomial,
            m,
            p: Vec::new(),
        }
    }

    pub fn adaptive(m: usize, p: Vec<f64>) -> Self {
        Self {
            family: BasisFamily::Adaptive,
            m,
            p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidInput("basis dimension m must be >= 1".into()));
        }
        if self.family == BasisFamily::Adaptive {
            match self.p.first() {
                None => {
                    return Err(Error::InvalidInput(
                        "adaptive basis needs at least one shape parameter".into(),
                    ))
                }
                Some(&p1) if !(p1 >= P_MIN) => {
                    return Err(Error::InvalidInput(format!(
                        "adaptive shape parameter p1 = {p1} below minimum {P_MIN}; use the polynomial family"
                    )))
                }
                _ => {}
            }
            if self.p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite shape parameter".into()));
            }
        }
        Ok(())
    }

    pub fn is_adaptive(&self) -> bool {
        self.family == BasisFamily::Adaptive
    }

    /// Number of shape parameters (0 for the polynomial family).
    pub fn n_params(&self) -> usize {
        if self.is_adaptive() {
            self.p.len()
        } else {
            0
        }
    }

    pub fn with_p(&self, p: Vec<f64>) -> Self {
        Self { p, ..self.clone() }
    }

    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }

    /// Evaluates every `u_k`, `v_k` (and their parameter sensitivities for
    /// the adaptive family) at `s`.
    pub fn eval_all(&self, s: f64) -> BasisPoint {
        let m = self.m;
        let mut u = Vec::with_capacity(m);
        let mut u_p = Vec::new();
        match self.family {
            BasisFamily::Polynomial => {
                for k in 1..=m as i32 {
                    u.push(mono_diff(2 * k, 2 * k - 2, s));
                }
            }
            BasisFamily::Adaptive => {
                let ratio = phi_ratio(s, &self.p);
                let r = ratio.r;
                for k in 1..=m as i32 {
                    // u_k = A + B·R with polynomial B
                    let (a0, b) = if k == 1 {
                        (1.0, Jet::new(-1.0, 0.0, 0.0))
                    } else {
                        (0.0, mono_diff(2 * k - 2, 2 * k - 4, s))
                    };
                    let value = if k == 1 {
                        ratio.one_minus_r
                    } else {
                        a0 + b.v * r.v
                    };
                    u.push(Jet::new(
                        value,
                        b.d1 * r.v + b.v * r.d1,
                        b.d2 * r.v + 2.0 * b.d1 * r.d1 + b.v * r.d2,
                    ));
                    u_p.push(
                        ratio
                            .r_p
                            .iter()
                            .zip(&ratio.dr_p)
                            .map(|(&rp, &drp)| (b.v * rp, b.d1 * rp + b.v * drp))
                            .collect::<Vec<_>>(),
                    );
                }
            }
        }
        let v = u.iter().map(|j| j.times_s(s)).collect();
        let v_p = u_p
            .iter()
            .map(|row: &Vec<(f64, f64)>| row.iter().map(|&(a, da)| (s * a, a + s * da)).collect())
            .collect();
        BasisPoint { u, v, u_p, v_p }
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.m {
            Err(Error::IndexOutOfRange {
                index: k,
                m: self.m,
            })
        } else {
            Ok(())
        }
    }
}

/// `u_k(s)` with two derivatives; `k` is 1-based.
pub fn eval_u(k: usize, s: f64, spec: &BasisSpec) -> Result<Jet> {
    spec.check_index(k)?;
    Ok(spec.eval_all(s).u[k - 1])
}

/// `v_k(s)` with two derivatives; `k` is 1-based.
pub fn eval_v(k: usize, s: f64, spec: &BasisSpec) -> Result<Jet> {
    spec.check_index(k)?;
    Ok(spec.eval_all(s).v[k - 1])
}

/// Coefficients of a trial shape together with the basis and load they
/// refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionState {
    pub x: Vec<f64>,
    pub spec: BasisSpec,
    pub load: LoadParams,
}

impl SolutionState {
    pub fn new(x: Vec<f64>, spec: BasisSpec, load: LoadParams) -> Result<Self> {
        spec.validate()?;
        if x.len() != 2 * spec.m {
            return Err(Error::InvalidInput(format!(
                "coefficient vector has length {}, expected {}",
                x.len(),
                2 * spec.m
            )));
        }
        Ok(Self { x, spec, load })
    }

    pub fn zero(spec: BasisSpec, load: LoadParams) -> Self {
        Self {
            x: vec![0.0; 2 * spec.m],
            spec,
            load,
        }
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    /// Pole sag `f = z(0)`.
    pub fn sag(&self) -> f64 {
        eval_shape(self, 0.0).z
    }
}

/// Combines precomputed basis values with coefficients.
pub fn combine(x: &[f64], bp: &BasisPoint, s: f64) -> ShapeEval {
    let m = bp.u.len();
    let mut sh = ShapeEval::undeformed(s);
    for (k, (u, v)) in bp.u.iter().zip(&bp.v).enumerate() {
        let (a, b) = (x[k], x[k + m]);
        sh.z += a * u.v;
        sh.dz += a * u.d1;
        sh.d2z += a * u.d2;
        sh.r += b * v.v;
        sh.dr += b * v.d1;
        sh.d2r += b * v.d2;
    }
    sh
}

pub fn eval_shape(state: &SolutionState, s: f64) -> ShapeEval {
    combine(&state.x, &state.spec.eval_all(s), s)
}

/// Parameter sensitivities of the trial shape at fixed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShapePDeriv {
    pub dz: f64,
    pub dr: f64,
    /// `∂z'/∂p_i`.
    pub ddz: f64,
    /// `∂r'/∂p_i`.
    pub ddr: f64,
}

pub fn combine_p(x: &[f64], bp: &BasisPoint) -> Vec<ShapePDeriv> {
    let m = bp.u.len();
    let n = bp.u_p.first().map_or(0, Vec::len);
    let mut out = vec![ShapePDeriv::default(); n];
    for k in 0..m {
        let (a, b) = (x[k], x[k + m]);
        for (i, o) in out.iter_mut().enumerate() {
            let (up, dup) = bp.u_p[k][i];
            let (vp, dvp) = bp.v_p[k][i];
            o.dz += a * up;
            o.ddz += a * dup;
            o.dr += b * vp;
            o.ddr += b * dvp;
        }
    }
    out
}

/// `∂(z, r, z', r')/∂p_i` at fixed coefficients, one entry per parameter.
pub fn shape_p_derivs(state: &SolutionState, s: f64) -> Result<Vec<ShapePDeriv>> {
    if !state.spec.is_adaptive() {
        return Err(Error::NotAdaptive);
    }
    Ok(combine_p(&state.x, &state.spec.eval_all(s)))
}
