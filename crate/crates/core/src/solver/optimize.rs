//! Outer iteration on the adaptive shape parameters.
//!
//! The coefficients solve `g(x; p) = 0` for every trial `p`; along that
//! solution branch the derivative of the reduced potential `I(p)` equals
//! the explicit `∂Π/∂p`, so each outer step needs one warm-started inner
//! solve and one gradient evaluation.
//!
//! Near the optimum `I(p)` is extremely flat (gradients of order 1e-10
//! for six-term bases), so the iteration keeps a sign-change bracket and
//! stops on the relative width of that bracket, not on the size of the
//! gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{newton_with, Context, SolveReport};
use crate::basis::{eval_shape, SolutionState, P_MIN};
use crate::error::{Error, Result};
use crate::kinematics::LoadParams;
use crate::material::{principal_stresses, MaterialParams, StretchState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Relative change of `p` below which the iteration stops.
    pub tol_p: f64,
    /// Residual tolerance of the inner solves. Must be tight: the outer
    /// gradient is only as accurate as the inner solution.
    pub inner_tol: f64,
    pub max_outer: usize,
    /// Largest relative change of a parameter in one outer step.
    pub max_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            tol_p: 1e-6,
            inner_tol: 1e-12,
            max_outer: 80,
            max_step: 0.5,
        }
    }
}

/// One inner solve of the outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub p: Vec<f64>,
    /// Reduced potential at the inner solution.
    pub functional: f64,
    pub gradient: Vec<f64>,
    pub inner_iterations: usize,
}

/// Estimate of `p1` from the edge boundary-layer scale,
/// `p1² = D λ1² |cos α| / T1` at `s = 1` of a previous solution, or
/// `sqrt(D)` without one.
pub fn init_p1(
    previous: Option<&SolutionState>,
    load: &LoadParams,
    mat: &MaterialParams,
) -> Result<f64> {
    if !(load.d > 0.0) {
        return Err(Error::InvalidInput(
            "adaptive basis needs a liquid weight D > 0; use the polynomial family".into(),
        ));
    }
    let fallback = load.d.sqrt();
    let Some(state) = previous else {
        return Ok(fallback);
    };
    let sh = eval_shape(state, 1.0);
    let l1 = sh.lambda1();
    let (t1, _) = principal_stresses(&StretchState::new(l1, sh.r), mat);
    let cos_a = sh.dr / l1;
    let p = (load.d * l1 * l1 * cos_a.abs() / t1).sqrt();
    if t1 > 0.0 && p.is_finite() {
        Ok(p.max(P_MIN))
    } else {
        Ok(fallback)
    }
}

struct Trial {
    p: Vec<f64>,
    x: Vec<f64>,
    report: SolveReport,
    functional: f64,
    gradient: Vec<f64>,
}

struct Outer<'a> {
    ctx: &'a Context,
    opts: &'a OptimizeOptions,
    history: Vec<OuterStep>,
}

impl Outer<'_> {
    fn solve(&mut self, p: &[f64], x0: &[f64]) -> Result<Trial> {
        if self.history.len() >= self.opts.max_outer {
            return Err(Error::NoConvergence {
                iterations: self.history.len(),
                residual: f64::NAN,
            });
        }
        let ctx = self.ctx.with_spec(self.ctx.spec.with_p(p.to_vec()));
        let asm = ctx.assembler()?;
        let (x, report) = newton_with(&asm, &ctx.load, x0, self.opts.inner_tol, ctx.max_iter)?;
        let functional = asm.functional(&x, &ctx.load)?;
        let gradient: Vec<f64> = asm.p_gradient(&x, &ctx.load)?.iter().copied().collect();
        self.history.push(OuterStep {
            p: p.to_vec(),
            functional,
            gradient: gradient.clone(),
            inner_iterations: report.iterations,
        });
        Ok(Trial {
            p: p.to_vec(),
            x,
            report,
            functional,
            gradient,
        })
    }

    /// Solves at `p`, pulling it back towards `from` when the inner
    /// iteration fails.
    fn solve_towards(&mut self, p: f64, from: &Trial) -> Result<Trial> {
        let mut q = p;
        let mut last = None;
        for _ in 0..8 {
            match self.solve(&[q], &from.x) {
                Ok(t) => return Ok(t),
                Err(e @ Error::NoConvergence { .. })
                    if self.history.len() >= self.opts.max_outer =>
                {
                    return Err(e)
                }
                Err(Error::InvalidInput(m)) => return Err(Error::InvalidInput(m)),
                Err(e) => last = Some(e),
            }
            q = 0.5 * (q + from.p[0]);
        }
        Err(last.expect("loop ran"))
    }

    fn scalar(&mut self, first: Trial) -> Result<Trial> {
        let tol = self.opts.tol_p;
        let grow = 1.0 + self.opts.max_step;
        let mut cur = first;
        let mut prev: Option<Trial> = None;
        let sgn = |t: &Trial| t.gradient[0].signum();

        // widen geometrically (secant-accelerated) until the gradient flips
        let mut other = loop {
            let g = cur.gradient[0];
            if g == 0.0 {
                return Ok(cur);
            }
            let p = cur.p[0];
            let (lo, hi) = (p / grow, p * grow);
            let mut next = if g < 0.0 { hi } else { lo };
            if let Some(pr) = &prev {
                let dg = g - pr.gradient[0];
                if dg != 0.0 {
                    let s = p - g * (p - pr.p[0]) / dg;
                    if (s - p) * g < 0.0 {
                        next = s.clamp(lo, hi);
                    }
                }
            }
            next = next.max(P_MIN);
            if next == p {
                return self.golden(cur);
            }
            let t = match self.solve_towards(next, &cur) {
                Ok(t) => t,
                Err(_) => return self.golden(cur),
            };
            if sgn(&t) != sgn(&cur) {
                break t;
            }
            prev = Some(std::mem::replace(&mut cur, t));
        };

        // Illinois regula falsi on the bracket [cur, other]
        let mut ga = cur.gradient[0];
        let mut gb = other.gradient[0];
        let mut side = 0i8;
        loop {
            let (a, b) = (cur.p[0], other.p[0]);
            if (b - a).abs() <= tol * b.abs() {
                return Ok(if other.gradient[0].abs() <= cur.gradient[0].abs() {
                    other
                } else {
                    cur
                });
            }
            let mut q = b - gb * (b - a) / (gb - ga);
            let (lo, hi) = (a.min(b), a.max(b));
            let margin = 1e-3 * (hi - lo);
            if !(q > lo + margin && q < hi - margin) {
                q = 0.5 * (a + b);
            }
            let t = self.solve_towards(q, &other)?;
            let gt = t.gradient[0];
            if gt == 0.0 {
                return Ok(t);
            }
            if gt.signum() == gb.signum() {
                // same side as `other`: keep `cur`, halve its weight after a repeat
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            } else {
                cur = other;
                ga = gb;
                side = -1;
            }
            other = t;
            gb = gt;
        }
    }

    /// Golden-section search on `I(p1)` around the best visited point,
    /// used when the gradient never changes sign.
    fn golden(&mut self, best: Trial) -> Result<Trial> {
        let grow = 1.0 + self.opts.max_step;
        let p = best.p[0];
        let mut a = (p / (grow * grow)).max(P_MIN);
        let mut b = p * grow * grow;
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut tc = self.solve_towards(c, &best)?;
        let mut td = self.solve_towards(d, &best)?;
        while (b - a) > self.opts.tol_p * b {
            if tc.functional < td.functional {
                b = d;
                d = c;
                td = tc;
                c = b - ratio * (b - a);
                tc = self.solve_towards(c, &td)?;
            } else {
                a = c;
                c = d;
                tc = td;
                d = a + ratio * (b - a);
                td = self.solve_towards(d, &tc)?;
            }
        }
        let out = if tc.functional < td.functional {
            tc
        } else {
            td
        };
        Ok(if best.functional < out.functional {
            best
        } else {
            out
        })
    }

    /// Broyden iteration for several shape parameters; the first Jacobian
    /// of the gradient is taken by forward differences.
    fn broyden(&mut self, first: Trial) -> Result<Trial> {
        let n = first.p.len();
        let mut cur = first;
        let mut b = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut q = cur.p.clone();
            let h = 1e-4 * q[j].abs().max(1.0);
            q[j] += h;
            let t = self.solve(&q, &cur.x)?;
            for i in 0..n {
                b[(i, j)] = (t.gradient[i] - cur.gradient[i]) / h;
            }
        }
        loop {
            let g = DVector::from_column_slice(&cur.gradient);
            let step = b
                .clone()
                .lu()
                .solve(&(-&g))
                .ok_or(Error::SingularJacobian {
                    iteration: self.history.len(),
                })?;
            let mut scale: f64 = 1.0;
            for i in 0..n {
                let bound = self.opts.max_step * cur.p[i].abs().max(1.0);
                if step[i].abs() > bound {
                    scale = scale.min(bound / step[i].abs());
                }
            }
            let mut q: Vec<f64> = (0..n).map(|i| cur.p[i] + scale * step[i]).collect();
            q[0] = q[0].max(P_MIN);
            let t = self.solve(&q, &cur.x)?;
            let dp = DVector::from_iterator(n, (0..n).map(|i| t.p[i] - cur.p[i]));
            let rel = (0..n)
                .map(|i| dp[i].abs() / t.p[i].abs().max(1.0))
                .fold(0.0, f64::max);
            let dg = DVector::from_column_slice(&t.gradient) - g;
            let denom = dp.dot(&dp);
            if denom > 0.0 {
                b += (dg - &b * &dp) * dp.transpose() / denom;
            }
            cur = t;
            if rel <= self.opts.tol_p {
                return Ok(cur);
            }
        }
    }
}

/// Minimises the reduced potential over the shape parameters of an
/// adaptive basis, starting from `ctx.spec.p` and coefficients `x0`.
///
/// Returns the optimal parameters, the coefficients at them and the
/// report of the final inner solve, which also carries the outer
/// history.
pub fn optimize_basis(
    ctx: &Context,
    x0: &[f64],
    opts: &OptimizeOptions,
) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
    if !ctx.spec.is_adaptive() {
        return Err(Error::NotAdaptive);
    }
    ctx.spec.validate()?;
    let mut outer = Outer {
        ctx,
        opts,
        history: Vec::new(),
    };
    let first = outer.solve(&ctx.spec.p, x0)?;
    let best = if ctx.spec.p.len() == 1 {
        outer.scalar(first)?
    } else {
        outer.broyden(first)?
    };
    let mut report = best.report;
    let fctx = ctx.with_spec(ctx.spec.with_p(best.p.clone()));
    report.attach_delta(&fctx.state(best.x.clone())?, &ctx.mat, &ctx.probes)?;
    report.final_p = Some(best.p.clone());
    report.outer = outer.history;
    Ok((best.p, best.x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::solver::initial_guess;

    fn t2_ctx(m: usize, p: f64) -> Context {
        let mut ctx = Context::new(
            MaterialParams::new(0.1, 0.0, 0.0),
            LoadParams::new(0.5, 10.0).unwrap(),
            BasisSpec::adaptive(m, vec![p]),
        );
        ctx.probes = vec![0.9];
        ctx
    }

    fn run(ctx: &Context) -> (Vec<f64>, Vec<f64>, SolveReport) {
        let x0 = initial_guess(&ctx.load, &ctx.mat, &ctx.spec).unwrap();
        optimize_basis(ctx, &x0, &OptimizeOptions::default()).unwrap()
    }

    #[test]
    fn init_p1_fallbacks() {
        let mat = MaterialParams::new(0.1, 0.0, 0.0);
        let load = LoadParams::new(0.5, 10.0).unwrap();
        assert!((init_p1(None, &load, &mat).unwrap() - 10f64.sqrt()).abs() < 1e-15);
        assert!(init_p1(None, &LoadParams::uniform(0.5), &mat).is_err());
        // flat membrane carries no edge stress
        let flat = SolutionState::zero(BasisSpec::adaptive(2, vec![3.0]), load);
        assert_eq!(init_p1(Some(&flat), &load, &mat).unwrap(), 10f64.sqrt());
    }

    #[test]
    fn one_term_optimum() {
        let (p, _, rep) = run(&t2_ctx(1, 10f64.sqrt()));
        assert!((p[0] - 10.787).abs() < 0.05, "{p:?}");
        assert!(rep.converged);
        assert_eq!(rep.final_p.as_deref(), Some(p.as_slice()));
        let d = rep.delta_at[0].1;
        assert!(d > 0.04 && d < 4.0, "{d}");
    }

    #[test]
    fn optimum_is_the_grid_minimum() {
        let ctx = t2_ctx(2, 10f64.sqrt());
        let (p, x, _) = run(&ctx);
        let p = p[0];
        let cell = 0.05 * p;
        // walk outward from the optimum so every solve is warm-started
        let mut vals = [0.0; 13];
        for dir in [-1i32, 1] {
            let mut xq = x.clone();
            for k in 0..=6 {
                let q = p + (dir * k) as f64 * cell;
                let c = ctx.with_spec(ctx.spec.with_p(vec![q]));
                let asm = c.assembler().unwrap();
                xq = newton_with(&asm, &c.load, &xq, 1e-12, 25).unwrap().0;
                vals[(6 + dir * k) as usize] = asm.functional(&xq, &c.load).unwrap();
            }
        }
        let grid: Vec<f64> = (-6..=6).map(|k| p + k as f64 * cell).collect();
        let imin = (0..vals.len())
            .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
            .unwrap();
        assert!(
            (grid[imin] - p).abs() <= cell * 1.0001,
            "grid min at {} vs {p}",
            grid[imin]
        );
        // unimodal along the grid
        for i in 0..imin {
            assert!(vals[i] >= vals[i + 1]);
        }
        for i in imin..vals.len() - 1 {
            assert!(vals[i] <= vals[i + 1]);
        }
    }

    #[test]
    fn warm_starts_stay_cheap() {
        let (_, _, rep) = run(&t2_ctx(4, 10f64.sqrt()));
        let first = rep.outer[0].inner_iterations;
        for step in &rep.outer[1..] {
            assert!(step.inner_iterations <= first + 2, "{:?}", rep.outer);
        }
    }

    #[test]
    fn init_p1_lands_near_optimum() {
        let ctx = t2_ctx(3, 10f64.sqrt());
        let (p, x, _) = run(&ctx);
        let state = ctx.with_spec(ctx.spec.with_p(p.clone())).state(x).unwrap();
        let guess = init_p1(Some(&state), &ctx.load, &ctx.mat).unwrap();
        assert!(
            guess > p[0] / 3.0 && guess < 3.0 * p[0],
            "{guess} vs {}",
            p[0]
        );
    }

    #[test]
    fn two_parameters_do_not_worsen_the_potential() {
        let ctx1 = t2_ctx(2, 10f64.sqrt());
        let (p1, _, r1) = run(&ctx1);
        let i1 = r1.outer.iter().find(|s| s.p == p1).unwrap().functional;
        let ctx2 = ctx1.with_spec(BasisSpec::adaptive(2, vec![p1[0], 0.0]));
        let (_, _, r2) = run(&ctx2);
        let i2 = r2.outer.last().unwrap().functional;
        assert!(i2 <= i1 + 1e-12, "{i2} vs {i1}");
    }

    #[test]
    fn polynomial_basis_is_rejected() {
        let ctx = t2_ctx(2, 3.0).with_spec(BasisSpec::polynomial(2));
        assert!(matches!(
            optimize_basis(&ctx, &[0.0; 4], &OptimizeOptions::default()),
            Err(Error::NotAdaptive)
        ));
    }
}
