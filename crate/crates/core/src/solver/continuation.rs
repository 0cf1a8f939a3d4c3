//! Load continuation with a switch to sag parametrisation at folds.
//!
//! Near a limit point of the load–sag curve the Jacobian `H` becomes
//! singular and stepping in `C` fails. Prescribing the pole sag
//! `f = z(0)` instead and treating `C` as unknown gives the bordered
//! system
//!
//! ```text
//! [ H    ∂g/∂C ] [δx]   [g        ]
//! [ aᵀ   0     ] [δC] = [aᵀx - f  ]
//! ```
//!
//! with `a_k = u_k(0)`, which stays regular through the fold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{inf_norm, linear_solve, newton_with, Context, SolveReport};
use crate::assembly::Assembler;
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::kinematics::LoadParams;

/// Newton iterations above which a load step counts as a fold warning.
const SLOW_ITERATIONS: usize = 8;
/// Jacobian condition number above which the load step counts as a fold
/// warning.
const FOLD_COND: f64 = 1e10;
/// Newton iterations at or below which a step counts as easy.
const EASY_ITERATIONS: usize = 4;

/// `∂z(0)/∂x`: pole values of the axial functions, zeros for the radial
/// block.
pub fn sag_vector(spec: &BasisSpec) -> Vec<f64> {
    let bp = spec.eval_all(0.0);
    let mut a = vec![0.0; 2 * spec.m];
    for (k, u) in bp.u.iter().enumerate() {
        a[k] = u.v;
    }
    a
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// Newton on the bordered system in `(x, C)` at fixed sag.
pub(crate) fn bordered_newton(
    asm: &Assembler,
    d: f64,
    f_target: f64,
    x0: &[f64],
    c0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, SolveReport)> {
    let n = x0.len();
    let a = sag_vector(asm.spec());
    let mut x = x0.to_vec();
    let mut c = c0;
    let mut report = SolveReport::new();
    let eval = |x: &[f64], c: f64| -> Result<(DVector<f64>, f64)> {
        let load = LoadParams { c, d };
        let g = asm.residual(x, &load)?;
        let e = dot(&a, x) - f_target;
        let norm = inf_norm(&g).max(e.abs());
        let mut full = g.resize_vertically(n + 1, 0.0);
        full[n] = e;
        Ok((full, norm))
    };
    let (mut rhs, norm) = eval(&x, c)?;
    report.residual_history.push(norm);
    loop {
        let norm = report.final_residual();
        if norm <= tol {
            report.converged = true;
            return Ok((x, c, report));
        }
        if report.iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: norm,
            });
        }
        let load = LoadParams { c, d };
        let h = asm.jacobian(&x, &load)?;
        let dc = asm.load_derivative(&x, &load)?;
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&h);
        j.view_mut((0, n), (n, 1)).copy_from(&dc);
        for (k, &ak) in a.iter().enumerate() {
            j[(n, k)] = ak;
        }
        let (step, cond) = linear_solve(j, &rhs, report.iterations)?;
        report.cond = Some(cond);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(v, s)| v - t * s).collect();
            let tc = c - t * step[n];
            match eval(&trial, tc) {
                Ok((r, nrm)) => {
                    x = trial;
                    c = tc;
                    rhs = r;
                    report.residual_history.push(nrm);
                    break;
                }
                Err(Error::NonFinite { .. }) if t > 1e-3 => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        report.iterations += 1;
    }
}

/// Solves `g(x; C) = 0` together with `z(0) = f_target` for `(x, C)`.
/// The context's load supplies `D` and the starting value of `C`.
pub fn solve_at_sag(
    f_target: f64,
    ctx: &Context,
    x0: &[f64],
) -> Result<(Vec<f64>, f64, SolveReport)> {
    let asm = ctx.assembler()?;
    let (x, c, mut report) = bordered_newton(
        &asm,
        ctx.load.d,
        f_target,
        x0,
        ctx.load.c,
        ctx.tol,
        ctx.max_iter,
    )?;
    let load = ctx.load.with_c(c);
    report.attach_delta(
        &ctx.with_load(load).state(x.clone())?,
        &ctx.mat,
        &ctx.probes,
    )?;
    Ok((x, c, report))
}

/// One-term solution at the context's load, reached by stepping the
/// pole sag away from zero until the load first passes `C`.
pub(crate) fn one_term_solution(ctx: &Context) -> Result<Vec<f64>> {
    debug_assert_eq!(ctx.spec.m, 1);
    let target = ctx.load.c;
    let sign = target.signum();
    let asm = ctx.assembler()?;
    let a0 = sag_vector(&ctx.spec)[0];
    let d = ctx.load.d;
    let max_sag = 20.0;

    let mut df = 0.05;
    let mut prev: Option<(f64, Vec<f64>, f64)> = None;
    let mut f = 0.0f64;
    let mut x = vec![0.0, 0.0];
    let mut c = 0.0;
    while f.abs() < max_sag {
        let f_new = f + sign * df;
        let (xg, cg) = match &prev {
            Some((fp, xp, cp)) => {
                let t = (f_new - f) / (f - fp);
                (
                    vec![x[0] + t * (x[0] - xp[0]), x[1] + t * (x[1] - xp[1])],
                    c + t * (c - cp),
                )
            }
            None => (vec![f_new / a0, 0.0], 0.0),
        };
        match bordered_newton(&asm, d, f_new, &xg, cg, ctx.tol, ctx.max_iter) {
            Ok((xn, cn, _)) => {
                // first crossing of the target, so past a fold this lands on the
                // branch the sag reaches first
                if sign * (c - target) < 0.0 && sign * (cn - target) >= 0.0 {
                    let t = (target - c) / (cn - c);
                    let guess: Vec<f64> = x.iter().zip(&xn).map(|(p, q)| p + t * (q - p)).collect();
                    let (sol, _) = newton_with(&asm, &ctx.load, &guess, ctx.tol, ctx.max_iter)?;
                    return Ok(sol);
                }
                prev = Some((f, x, c));
                f = f_new;
                x = xn;
                c = cn;
            }
            Err(_) if df > 1e-4 => df *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Continuation(format!(
        "one-term load stays below {target} up to sag {max_sag}"
    )))
}

/// Step-size control for [`continue_in_load`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    /// First step in `C`; also the first sag step after a switch.
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    /// Largest accepted distance between neighbours in the `(C, f)` plane.
    pub max_arc: f64,
    pub max_points: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            initial: 0.05,
            min: 1e-4,
            max: 0.2,
            max_arc: 0.25,
            max_points: 2000,
        }
    }
}

impl StepPolicy {
    /// Constant steps of size `h`: no growth, no shrinking.
    pub fn fixed(h: f64) -> Self {
        Self {
            initial: h,
            min: h,
            max: h,
            max_arc: f64::INFINITY,
            max_points: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    Load,
    Sag,
}

/// A converged point of the load–sag curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPoint {
    pub c_value: f64,
    /// Pole sag `z(0)`.
    pub sag: f64,
    pub x: Vec<f64>,
    /// Sign of `dC/df` towards the neighbouring point: `1` on rising
    /// (stable) parts of the curve, `-1` on falling ones.
    pub stability_hint: i8,
    pub iterations: usize,
    pub parametrization: Parametrization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub points: Vec<ContinuationPoint>,
    /// Why the sweep stopped early, if it did.
    pub failure: Option<String>,
}

impl ContinuationResult {
    /// Number of sign changes of `ΔC/Δf` between consecutive points.
    pub fn fold_count(&self) -> usize {
        let slopes: Vec<f64> = self
            .points
            .windows(2)
            .map(|w| (w[1].c_value - w[0].c_value) / (w[1].sag - w[0].sag))
            .collect();
        slopes
            .windows(2)
            .filter(|w| w[0].signum() != w[1].signum())
            .count()
    }
}

fn secant(last: &[f64], prev: &[f64], t: f64) -> Vec<f64> {
    last.iter()
        .zip(prev)
        .map(|(a, b)| a + t * (a - b))
        .collect()
}

fn arc(p: &ContinuationPoint, c: f64, f: f64) -> f64 {
    (c - p.c_value).hypot(f - p.sag)
}

fn assign_hints(points: &mut [ContinuationPoint]) {
    let n = points.len();
    for i in 0..n {
        let (a, b) = if i > 0 {
            (i - 1, i)
        } else if n > 1 {
            (0, 1)
        } else {
            continue;
        };
        let slope = (points[b].c_value - points[a].c_value) / (points[b].sag - points[a].sag);
        points[i].stability_hint = if slope >= 0.0 { 1 } else { -1 };
    }
}

/// Follows the solution branch from `c_start` to `c_end`.
///
/// Steps in `C` use a secant predictor and adapt their size: halved on
/// failure, doubled after three easy steps. When a load step fails at
/// the minimum size, needs more than eight Newton iterations, or meets
/// an ill-conditioned Jacobian, the sweep switches to prescribing the
/// pole sag and stays there until `C` passes `c_end` in the sweep
/// direction. If both parametrisations fail the curve so far is
/// returned with the reason.
pub fn continue_in_load(
    c_start: f64,
    c_end: f64,
    policy: &StepPolicy,
    ctx: &Context,
    x_start: &[f64],
) -> Result<ContinuationResult> {
    if !(policy.min > 0.0 && policy.min <= policy.initial && policy.initial <= policy.max) {
        return Err(Error::InvalidInput(format!(
            "inconsistent step policy {policy:?}"
        )));
    }
    let asm = ctx.assembler()?;
    let d = ctx.load.d;
    let load_at = |c: f64| LoadParams { c, d };
    let a = sag_vector(&ctx.spec);
    let (x0, rep0) = newton_with(&asm, &load_at(c_start), x_start, ctx.tol, ctx.max_iter)?;
    let mut points = vec![ContinuationPoint {
        c_value: c_start,
        sag: dot(&a, &x0),
        x: x0,
        stability_hint: 0,
        iterations: rep0.iterations,
        parametrization: Parametrization::Load,
    }];
    let dir = (c_end - c_start).signum();
    let mut failure = None;
    let mut mode = Parametrization::Load;
    let mut h = policy.initial;
    let mut easy = 0;

    let adapt = |h: &mut f64, easy: &mut usize, iterations: usize| {
        if iterations <= EASY_ITERATIONS {
            *easy += 1;
            if *easy >= 3 {
                *h = (2.0 * *h).min(policy.max);
                *easy = 0;
            }
        } else {
            *easy = 0;
        }
    };

    while dir != 0.0 && points.len() < policy.max_points {
        let last = points.last().expect("at least the start point");
        let prev = points.len().checked_sub(2).map(|i| &points[i]);
        match mode {
            Parametrization::Load => {
                let remaining = (c_end - last.c_value) * dir;
                if remaining <= 0.0 {
                    break;
                }
                let step = h.min(remaining);
                let c_new = if step == remaining {
                    c_end
                } else {
                    last.c_value + dir * step
                };
                let guess = match prev {
                    Some(p) if p.c_value != last.c_value => secant(
                        &last.x,
                        &p.x,
                        (c_new - last.c_value) / (last.c_value - p.c_value),
                    ),
                    _ => last.x.clone(),
                };
                match newton_with(&asm, &load_at(c_new), &guess, ctx.tol, ctx.max_iter) {
                    Ok((x, rep)) => {
                        let f = dot(&a, &x);
                        if arc(last, c_new, f) > policy.max_arc && h > policy.min {
                            h = (0.5 * h).max(policy.min);
                            easy = 0;
                            continue;
                        }
                        let warn = rep.iterations > SLOW_ITERATIONS
                            || rep.cond.is_some_and(|c| c > FOLD_COND);
                        adapt(&mut h, &mut easy, rep.iterations);
                        points.push(ContinuationPoint {
                            c_value: c_new,
                            sag: f,
                            x,
                            stability_hint: 0,
                            iterations: rep.iterations,
                            parametrization: Parametrization::Load,
                        });
                        if warn {
                            mode = Parametrization::Sag;
                            h = policy.initial;
                        }
                    }
                    Err(Error::InvalidInput(msg)) => return Err(Error::InvalidInput(msg)),
                    Err(_) if h > policy.min => {
                        h = (0.5 * h).max(policy.min);
                        easy = 0;
                    }
                    Err(_) => {
                        mode = Parametrization::Sag;
                        h = policy.initial;
                        easy = 0;
                    }
                }
            }
            Parametrization::Sag => {
                let moved = prev.map_or(0.0, |p| last.c_value - p.c_value);
                if (last.c_value - c_end) * dir >= 0.0 && moved * dir > 0.0 {
                    break;
                }
                let sdir = match prev {
                    Some(p) if p.sag != last.sag => (last.sag - p.sag).signum(),
                    // df/dC > 0 on a stable branch
                    _ => dir,
                };
                let f_new = last.sag + sdir * h;
                let (guess, c_guess) = match prev {
                    Some(p) if p.sag != last.sag => {
                        let t = (f_new - last.sag) / (last.sag - p.sag);
                        (
                            secant(&last.x, &p.x, t),
                            last.c_value + t * (last.c_value - p.c_value),
                        )
                    }
                    _ => (last.x.clone(), last.c_value),
                };
                match bordered_newton(&asm, d, f_new, &guess, c_guess, ctx.tol, ctx.max_iter) {
                    Ok((x, c, rep)) if arc(last, c, f_new) <= policy.max_arc || h <= policy.min => {
                        adapt(&mut h, &mut easy, rep.iterations);
                        points.push(ContinuationPoint {
                            c_value: c,
                            sag: f_new,
                            x,
                            stability_hint: 0,
                            iterations: rep.iterations,
                            parametrization: Parametrization::Sag,
                        });
                    }
                    Err(Error::InvalidInput(msg)) => return Err(Error::InvalidInput(msg)),
                    Ok(_) | Err(_) if h > policy.min => {
                        h = (0.5 * h).max(policy.min);
                        easy = 0;
                    }
                    Ok(_) => unreachable!("accepted by the first arm"),
                    Err(e) => {
                        failure = Some(format!(
                            "both parametrisations failed near C = {:.6}, f = {:.6}: {e}",
                            last.c_value, last.sag
                        ));
                        break;
                    }
                }
            }
        }
    }

    if failure.is_none() && points.len() >= policy.max_points {
        failure = Some(format!("stopped after {} points", policy.max_points));
    }

    // a sag-mode sweep overshoots c_end; land on it exactly when possible
    if failure.is_none() && mode == Parametrization::Sag && points.len() >= 2 {
        let n = points.len();
        let (p, q) = (&points[n - 2], &points[n - 1]);
        if (q.c_value - c_end) * dir > 0.0 && (p.c_value - c_end) * dir <= 0.0 {
            let t = (c_end - p.c_value) / (q.c_value - p.c_value);
            let guess: Vec<f64> = p.x.iter().zip(&q.x).map(|(u, v)| u + t * (v - u)).collect();
            if let Ok((x, rep)) = newton_with(&asm, &load_at(c_end), &guess, ctx.tol, ctx.max_iter)
            {
                let f = dot(&a, &x);
                points[n - 1] = ContinuationPoint {
                    c_value: c_end,
                    sag: f,
                    x,
                    stability_hint: 0,
                    iterations: rep.iterations,
                    parametrization: Parametrization::Load,
                };
            }
        }
    }

    assign_hints(&mut points);
    Ok(ContinuationResult { points, failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialParams;
    use crate::solver::{initial_guess, newton_solve};

    fn t1_ctx(m: usize, c: f64) -> Context {
        Context::new(
            MaterialParams::new(0.02, -0.015, 0.00025),
            LoadParams::uniform(c),
            BasisSpec::polynomial(m),
        )
    }

    fn solved(ctx: &Context) -> Vec<f64> {
        let x0 = initial_guess(&ctx.load, &ctx.mat, &ctx.spec).unwrap();
        newton_solve(&x0, ctx).unwrap().0
    }

    #[test]
    fn sag_vector_reads_pole_values() {
        assert_eq!(
            sag_vector(&BasisSpec::polynomial(3)),
            vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        let a = sag_vector(&BasisSpec::adaptive(2, vec![3.0]));
        assert!(a[0] > 0.0 && a[0] < 1.0);
        assert!((a[1] + 1.0 / crate::basis::bessel_i0_i1(3.0).0).abs() < 1e-14);
    }

    #[test]
    fn zero_sag_gives_undeformed_state() {
        let ctx = t1_ctx(4, 0.0);
        let (x, c, rep) = solve_at_sag(0.0, &ctx, &[0.0; 8]).unwrap();
        assert!(rep.converged);
        assert_eq!(c, 0.0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sag_and_load_parametrisations_agree() {
        for (ctx, c) in [
            (t1_ctx(4, 1.2), 1.2),
            (
                Context::new(
                    MaterialParams::new(0.1, 0.0, 0.0),
                    LoadParams::new(0.5, 10.0).unwrap(),
                    BasisSpec::polynomial(3),
                ),
                0.5,
            ),
        ] {
            let x = solved(&ctx);
            let f = dot(&sag_vector(&ctx.spec), &x);
            // start away from the answer in both x and C
            let guess: Vec<f64> = x.iter().map(|v| 0.97 * v).collect();
            let start = ctx.with_load(ctx.load.with_c(0.9 * c));
            let (xs, cs, _) = solve_at_sag(f, &start, &guess).unwrap();
            assert!(((cs - c) / c).abs() < 1e-8, "{cs} vs {c}");
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in xs.iter().zip(&x) {
                assert!((a - b).abs() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn short_sweep_is_monotone_and_easy() {
        let ctx = t1_ctx(4, 0.3);
        let x = solved(&ctx);
        let res = continue_in_load(0.3, 0.6, &StepPolicy::default(), &ctx, &x).unwrap();
        assert!(res.failure.is_none());
        assert_eq!(res.points.last().unwrap().c_value, 0.6);
        for w in res.points.windows(2) {
            assert!(w[1].c_value > w[0].c_value && w[1].sag > w[0].sag);
            assert!(w[1].iterations <= 5, "{}", w[1].iterations);
            assert!(arc(&w[0], w[1].c_value, w[1].sag) <= StepPolicy::default().max_arc);
        }
        assert!(res.points.iter().all(|p| p.stability_hint == 1));
        assert_eq!(res.fold_count(), 0);
    }

    #[test]
    fn reversed_sweep_retraces_points() {
        let ctx = t1_ctx(4, 0.2);
        let policy = StepPolicy::fixed(0.05);
        let fwd = continue_in_load(0.2, 0.6, &policy, &ctx, &solved(&ctx)).unwrap();
        let end = fwd.points.last().unwrap();
        let back = continue_in_load(0.6, 0.2, &policy, &ctx, &end.x).unwrap();
        assert_eq!(fwd.points.len(), back.points.len());
        for (p, q) in fwd.points.iter().zip(back.points.iter().rev()) {
            assert!((p.c_value - q.c_value).abs() < 1e-12);
            for (a, b) in p.x.iter().zip(&q.x) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sweep_passes_both_folds() {
        let ctx = t1_ctx(3, 1.0);
        let res = continue_in_load(1.0, 2.5, &StepPolicy::default(), &ctx, &solved(&ctx)).unwrap();
        assert!(res.failure.is_none(), "{:?}", res.failure);
        assert_eq!(res.fold_count(), 2);
        // fold A: the load at the last rising point before the first falling one
        let first_fall = res
            .points
            .iter()
            .position(|p| p.stability_hint == -1)
            .unwrap();
        let peak = res.points[first_fall - 1].c_value;
        assert!(peak > 1.8 && peak < 1.85, "{peak}");
        assert!(res.points.iter().any(|p| p.stability_hint == -1));
        assert!(res
            .points
            .iter()
            .any(|p| p.parametrization == Parametrization::Sag));
        let last = res.points.last().unwrap();
        assert_eq!(last.c_value, 2.5);
        for w in res.points.windows(2) {
            assert!(arc(&w[0], w[1].c_value, w[1].sag) <= StepPolicy::default().max_arc);
        }
    }

    #[test]
    fn empty_range_returns_start_only() {
        let ctx = t1_ctx(2, 0.4);
        let res = continue_in_load(0.4, 0.4, &StepPolicy::default(), &ctx, &solved(&ctx)).unwrap();
        assert_eq!(res.points.len(), 1);
        assert!(continue_in_load(
            0.4,
            0.5,
            &StepPolicy {
                min: 1.0,
                ..StepPolicy::default()
            },
            &ctx,
            &solved(&ctx)
        )
        .is_err());
    }
}
