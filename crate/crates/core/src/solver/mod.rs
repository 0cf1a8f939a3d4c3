//! Newton iteration on `g(x) = 0`, the equilibrium-error diagnostic and
//! the low-order starting guess.
//!
//! Continuation in the load and through folds lives in [`continuation`];
//! optimisation of the adaptive shape parameters in [`optimize`].

mod continuation;
mod optimize;

pub use continuation::{
    continue_in_load, sag_vector, solve_at_sag, ContinuationPoint, ContinuationResult,
    Parametrization, StepPolicy,
};
pub use optimize::{init_p1, optimize_basis, OptimizeOptions, OuterStep};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::Assembler;
use crate::basis::{eval_shape, BasisSpec, SolutionState};
use crate::error::{Error, Result};
use crate::kinematics::{
    curvatures, hydro_load, pole_curvatures, pole_stretches, stretches, LoadParams,
};
use crate::material::{principal_stresses, MaterialParams};
use crate::quadrature::{gauss_rule, QuadratureRule};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 25;
/// Points in the interior grid used for `delta_max`.
pub const DELTA_GRID: usize = 101;

/// Everything a solve needs besides the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub mat: MaterialParams,
    pub load: LoadParams,
    pub spec: BasisSpec,
    /// Fixed Gauss node count; `None` picks a rule from the basis.
    pub quad: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    /// Points at which `delta_at` is reported.
    pub probes: Vec<f64>,
}

impl Context {
    pub fn new(mat: MaterialParams, load: LoadParams, spec: BasisSpec) -> Self {
        Self {
            mat,
            load,
            spec,
            quad: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            probes: Vec::new(),
        }
    }

    pub fn with_load(&self, load: LoadParams) -> Self {
        Self {
            load,
            ..self.clone()
        }
    }

    pub fn with_spec(&self, spec: BasisSpec) -> Self {
        Self {
            spec,
            ..self.clone()
        }
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        match self.quad {
            Some(n) => gauss_rule(n),
            None => Ok(QuadratureRule::auto(
                self.spec
                    .p
                    .first()
                    .copied()
                    .filter(|_| self.spec.is_adaptive()),
            )),
        }
    }

    pub fn assembler(&self) -> Result<Assembler> {
        Assembler::new(&self.spec, self.mat, &self.rule()?)
    }

    pub fn state(&self, x: Vec<f64>) -> Result<SolutionState> {
        SolutionState::new(x, self.spec.clone(), self.load)
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Newton updates taken.
    pub iterations: usize,
    /// `‖g‖∞` before each update and after the last one.
    pub residual_history: Vec<f64>,
    /// Largest `Δ` over the interior grid; absent when `C = 0`.
    pub delta_max: Option<f64>,
    /// `(s, Δ(s))` at each requested probe.
    pub delta_at: Vec<(f64, f64)>,
    /// Optimised shape parameters (adaptive basis only).
    pub final_p: Option<Vec<f64>>,
    /// Condition number of the last factorised Jacobian.
    pub cond: Option<f64>,
    /// Outer iterations of the shape-parameter search.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outer: Vec<OuterStep>,
}

impl SolveReport {
    fn new() -> Self {
        Self {
            converged: false,
            iterations: 0,
            residual_history: Vec::new(),
            delta_max: None,
            delta_at: Vec::new(),
            final_p: None,
            cond: None,
            outer: Vec::new(),
        }
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Fills the Δ fields; left empty when the load constant is zero.
    pub fn attach_delta(
        &mut self,
        state: &SolutionState,
        mat: &MaterialParams,
        probes: &[f64],
    ) -> Result<()> {
        if state.load.c == 0.0 {
            return Ok(());
        }
        let (at, max) = delta_diagnostic(state, mat, probes)?;
        self.delta_at = probes.iter().copied().zip(at).collect();
        self.delta_max = Some(max);
        Ok(())
    }
}

pub(crate) fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

pub(crate) fn condition_number(h: &DMatrix<f64>) -> f64 {
    let sv = h.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves the dense system `h δ = rhs` by LU with partial pivoting.
/// Returns the solution and the condition estimate.
///
/// Large condition numbers alone are not rejected: many-term bases are
/// nearly dependent in floating point, yet the Newton step they give
/// still reduces the residual. Only a zero pivot or a non-finite step
/// counts as singular.
pub(crate) fn linear_solve(
    h: DMatrix<f64>,
    rhs: &DVector<f64>,
    iteration: usize,
) -> Result<(DVector<f64>, f64)> {
    let cond = condition_number(&h);
    let delta = h
        .lu()
        .solve(rhs)
        .filter(|d| d.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularJacobian { iteration })?;
    Ok((delta, cond))
}

/// Plain Newton iteration using a prepared assembler.
///
/// A step that leaves the admissible region (non-positive stretch) is
/// halved, up to ten times.
pub(crate) fn newton_with(
    asm: &Assembler,
    load: &LoadParams,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let mut report = SolveReport::new();
    let mut x = x0.to_vec();
    let mut g = asm.residual(&x, load)?;
    report.residual_history.push(inf_norm(&g));
    loop {
        let norm = report.final_residual();
        if norm <= tol {
            report.converged = true;
            return Ok((x, report));
        }
        if report.iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: norm,
            });
        }
        let h = asm.jacobian(&x, load)?;
        let (step, cond) = linear_solve(h, &g, report.iterations)?;
        report.cond = Some(cond);
        let mut t = 1.0;
        let (xn, gn) = loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
            match asm.residual(&trial, load) {
                Ok(gn) => break (trial, gn),
                Err(Error::NonFinite { .. }) if t > 1e-3 => t *= 0.5,
                Err(e) => return Err(e),
            }
        };
        x = xn;
        g = gn;
        report.iterations += 1;
        report.residual_history.push(inf_norm(&g));
    }
}

/// Newton's method on `g(x) = 0` at the context's load, followed by the
/// Δ diagnostic at the context's probes.
pub fn newton_solve(x0: &[f64], ctx: &Context) -> Result<(Vec<f64>, SolveReport)> {
    let asm = ctx.assembler()?;
    let (x, mut report) = newton_with(&asm, &ctx.load, x0, ctx.tol, ctx.max_iter)?;
    report.attach_delta(&ctx.state(x.clone())?, &ctx.mat, &ctx.probes)?;
    Ok((x, report))
}

/// `Δ(s) = |k1 T1 + k2 T2 - Q| / |C|` at one point; `s = 0` uses the pole
/// limits.
pub fn delta_at(state: &SolutionState, mat: &MaterialParams, s: f64) -> Result<f64> {
    let c = state.load.c;
    if c == 0.0 {
        return Err(Error::InvalidInput(
            "Δ is normalised by C and undefined for C = 0".into(),
        ));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidInput(format!("probe s = {s} outside [0, 1]")));
    }
    let sh = eval_shape(state, s);
    let (st, (k1, k2)) = if s == 0.0 {
        (pole_stretches(&sh), pole_curvatures(&sh))
    } else {
        (stretches(&sh, s)?, curvatures(&sh)?)
    };
    let (t1, t2) = principal_stresses(&st, mat);
    Ok((k1 * t1 + k2 * t2 - hydro_load(sh.z, &state.load)).abs() / c.abs())
}

/// Δ at each probe and its maximum over a uniform interior grid.
pub fn delta_diagnostic(
    state: &SolutionState,
    mat: &MaterialParams,
    probes: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let at = probes
        .iter()
        .map(|&s| delta_at(state, mat, s))
        .collect::<Result<Vec<_>>>()?;
    let mut max = 0.0f64;
    for i in 1..=DELTA_GRID {
        let s = i as f64 / (DELTA_GRID + 1) as f64;
        max = max.max(delta_at(state, mat, s)?);
    }
    Ok((at, max))
}

/// Starting guess from the one-term approximation.
///
/// The two-unknown problem is followed from a small pole sag of the sign
/// of `C` until its load reaches `C`; the converged pair is placed in the
/// first axial and first radial slots of a zero vector of length `2m`.
pub fn initial_guess(
    load: &LoadParams,
    mat: &MaterialParams,
    spec: &BasisSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut x0 = vec![0.0; 2 * spec.m];
    if load.c == 0.0 {
        return Ok(x0);
    }
    let ctx1 = Context::new(*mat, *load, spec.with_m(1));
    let x1 = continuation::one_term_solution(&ctx1).map_err(|e| {
        Error::Continuation(format!(
            "one-term approximation failed at C = {} ({e}); try a smaller load",
            load.c
        ))
    })?;
    x0[0] = x1[0];
    x0[spec.m] = x1[1];
    Ok(x0)
}

/// Copies the coefficients of an `m`-term solution into the leading
/// slots of each block of a longer vector.
pub fn embed(x: &[f64], m_new: usize) -> Vec<f64> {
    let m = x.len() / 2;
    let mut out = vec![0.0; 2 * m_new];
    let k = m.min(m_new);
    out[..k].copy_from_slice(&x[..k]);
    out[m_new..m_new + k].copy_from_slice(&x[m..m + k]);
    out
}

/// Newton from `x0`; if that fails, pins the guess's sag, solves for the
/// matching load and follows the curve from there to the context's load.
fn newton_or_track(x0: &[f64], ctx: &Context) -> Result<(Vec<f64>, SolveReport)> {
    let err = match newton_solve(x0, ctx) {
        Ok(out) => return Ok(out),
        Err(e) => e,
    };
    let sag: f64 = sag_vector(&ctx.spec)
        .iter()
        .zip(x0)
        .map(|(a, x)| a * x)
        .sum();
    let Ok((xs, cs, _)) = solve_at_sag(sag, ctx, x0) else {
        return Err(err);
    };
    let path = continue_in_load(cs, ctx.load.c, &StepPolicy::default(), ctx, &xs)?;
    match (path.failure, path.points.last()) {
        (None, Some(end)) => newton_solve(&end.x, ctx),
        _ => Err(err),
    }
}

/// Initial guess followed by Newton.
///
/// When Newton fails from the embedded one-term guess, the solution is
/// built up one term at a time, each converged `k`-term solution seeding
/// the `k+1`-term solve; a rung whose Newton iteration fails is reached by
/// following its load–sag curve instead. The adaptive family always climbs this way and
/// optimises its shape parameters at every rung: starting a many-term
/// adaptive basis directly at a small `p1` fails because its functions
/// are then nearly dependent.
pub fn solve(ctx: &Context) -> Result<(SolutionState, SolveReport)> {
    if !ctx.spec.is_adaptive() {
        let x0 = initial_guess(&ctx.load, &ctx.mat, &ctx.spec)?;
        if let Ok((x, report)) = newton_solve(&x0, ctx) {
            return Ok((ctx.state(x)?, report));
        }
    }
    let mut spec = ctx.spec.with_m(1);
    let mut x = initial_guess(&ctx.load, &ctx.mat, &spec)?;
    let opts = OptimizeOptions::default();
    loop {
        let rung = ctx.with_spec(spec.clone());
        let (xk, report) = if spec.is_adaptive() {
            let (p, xk, report) = optimize_basis(&rung, &x, &opts)?;
            spec = spec.with_p(p);
            (xk, report)
        } else {
            newton_or_track(&x, &rung)?
        };
        if spec.m == ctx.spec.m {
            return Ok((ctx.with_spec(spec).state(xk)?, report));
        }
        x = embed(&xk, spec.m + 1);
        spec = spec.with_m(spec.m + 1);
    }
}
