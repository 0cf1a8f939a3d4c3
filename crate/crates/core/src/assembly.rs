//! Discrete Ritz system: potential, residual `g`, Jacobian `H`, the load
//! derivative `∂g/∂C` and the shape-parameter gradient.
//!
//! With `a = λ1`, `b = λ2 = r/s`, `U = U(a, b)`, `V = U(b, a)` and
//! `Q = C - D z`, the residual is
//!
//! ```text
//! g_i     = ∫ [U z' u_i' s - Q r r' u_i] ds
//! g_{m+i} = ∫ [U r' v_i' s + V b v_i + Q r z' v_i] ds
//! ```
//!
//! which is the exact coefficient gradient of
//! `Π = ∫ [W s / 2 - (C z - D z²/2) r r'] ds`.
//! Integrands are evaluated as written; no integration by parts.

use nalgebra::{DMatrix, DVector};

use crate::basis::{combine, combine_p, BasisPoint, BasisSpec, SolutionState};
use crate::error::{Error, Result};
use crate::kinematics::{LoadParams, ShapeEval};
use crate::material::{energy, stiffness_derivs, stiffness_scalar, MaterialParams, StretchState};
use crate::quadrature::QuadratureRule;

pub type ResidualVector = DVector<f64>;
pub type JacobianMatrix = DMatrix<f64>;

/// Basis functions tabulated at the quadrature nodes of one rule.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub spec: BasisSpec,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub points: Vec<BasisPoint>,
}

impl BasisTable {
    pub fn new(spec: &BasisSpec, rule: &QuadratureRule) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            nodes: rule.nodes.clone(),
            weights: rule.weights.clone(),
            points: rule.nodes.iter().map(|&s| spec.eval_all(s)).collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }
}

/// Pointwise quantities shared by every integrand.
struct Node {
    s: f64,
    w: f64,
    sh: ShapeEval,
    a: f64,
    b: f64,
    q: f64,
    u: f64,
    v: f64,
    ua: f64,
    ub: f64,
    va: f64,
}

fn node_state(
    x: &[f64],
    bp: &BasisPoint,
    s: f64,
    w: f64,
    load: &LoadParams,
    mat: &MaterialParams,
) -> Result<Node> {
    let sh = combine(x, bp, s);
    let a = sh.lambda1();
    let b = sh.r / s;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::NonFinite {
            what: format!("stretch (λ1 = {a}, λ2 = {b})"),
            node: s,
        });
    }
    let (ua, ub) = stiffness_derivs(a, b, mat);
    let (va, _) = stiffness_derivs(b, a, mat);
    Ok(Node {
        s,
        w,
        sh,
        a,
        b,
        q: load.c - load.d * sh.z,
        u: stiffness_scalar(a, b, mat),
        v: stiffness_scalar(b, a, mat),
        ua,
        ub,
        va,
    })
}

fn check_finite(v: f64, what: &str, node: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            node,
        })
    }
}

/// Assembles the discrete system for a fixed basis, material and rule.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub mat: MaterialParams,
    pub table: BasisTable,
}

impl Assembler {
    pub fn new(spec: &BasisSpec, mat: MaterialParams, rule: &QuadratureRule) -> Result<Self> {
        Ok(Self {
            mat,
            table: BasisTable::new(spec, rule)?,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.table.spec
    }

    pub fn m(&self) -> usize {
        self.table.m()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != 2 * self.m() {
            return Err(Error::InvalidInput(format!(
                "coefficient vector has length {}, expected {}",
                x.len(),
                2 * self.m()
            )));
        }
        Ok(())
    }

    fn nodes<'a>(
        &'a self,
        x: &'a [f64],
        load: &'a LoadParams,
    ) -> impl Iterator<Item = (Result<Node>, &'a BasisPoint)> + 'a {
        let t = &self.table;
        t.points
            .iter()
            .zip(t.nodes.iter().zip(&t.weights))
            .map(move |(bp, (&s, &w))| (node_state(x, bp, s, w, load, &self.mat), bp))
    }

    /// Total potential `Π`, normalised so that `∇ₓΠ = g`.
    pub fn functional(&self, x: &[f64], load: &LoadParams) -> Result<f64> {
        self.check_len(x)?;
        let mut total = 0.0;
        for (node, _) in self.nodes(x, load) {
            let n = node?;
            let st = StretchState::new(n.a, n.b);
            let sh = &n.sh;
            let f = 0.5 * energy(st.i1(), st.i2(), &self.mat) * n.s
                - (load.c * sh.z - 0.5 * load.d * sh.z * sh.z) * sh.r * sh.dr;
            check_finite(f, "energy integrand", n.s)?;
            total += n.w * f;
        }
        Ok(total)
    }

    pub fn residual(&self, x: &[f64], load: &LoadParams) -> Result<ResidualVector> {
        self.check_len(x)?;
        let m = self.m();
        let mut g = DVector::zeros(2 * m);
        for (node, bp) in self.nodes(x, load) {
            let n = node?;
            let sh = &n.sh;
            let cz1 = n.u * sh.dz * n.s;
            let cz0 = -n.q * sh.r * sh.dr;
            let cr1 = n.u * sh.dr * n.s;
            let cr0 = n.v * n.b + n.q * sh.r * sh.dz;
            for k in 0..m {
                let gz = cz1 * bp.u[k].d1 + cz0 * bp.u[k].v;
                let gr = cr1 * bp.v[k].d1 + cr0 * bp.v[k].v;
                check_finite(gz, "axial residual", n.s)?;
                check_finite(gr, "radial residual", n.s)?;
                g[k] += n.w * gz;
                g[m + k] += n.w * gr;
            }
        }
        Ok(g)
    }

    /// Jacobian `∂g/∂x`. Diagonal blocks are accumulated for `i >= j` and
    /// mirrored; the axial–radial block is accumulated once and placed
    /// with its transpose.
    pub fn jacobian(&self, x: &[f64], load: &LoadParams) -> Result<JacobianMatrix> {
        self.check_len(x)?;
        let m = self.m();
        let d = load.d;
        let mut h = DMatrix::zeros(2 * m, 2 * m);
        for (node, bp) in self.nodes(x, load) {
            let n = node?;
            let sh = &n.sh;
            let (s, w) = (n.s, n.w);
            let zz1 = (n.ua * sh.dz * sh.dz / n.a + n.u) * s;
            let zz0 = d * sh.r * sh.dr;
            let rr1 = (n.ua * sh.dr * sh.dr / n.a + n.u) * s;
            let rr_mix = n.ub * sh.dr;
            let rr0 = (n.va * n.b + n.v + n.q * s * sh.dz) / s;
            let zr11 = n.ua * sh.dz * sh.dr / n.a * s;
            let zr10 = n.ub * sh.dz + n.q * sh.r;
            let zr00 = -d * sh.r * sh.dz;
            for i in 0..m {
                let (ui, vi) = (bp.u[i], bp.v[i]);
                for j in 0..=i {
                    let (uj, vj) = (bp.u[j], bp.v[j]);
                    h[(i, j)] += w * (zz1 * ui.d1 * uj.d1 + zz0 * ui.v * uj.v);
                    h[(m + i, m + j)] += w
                        * (rr1 * vi.d1 * vj.d1
                            + rr_mix * (vi.d1 * vj.v + vi.v * vj.d1)
                            + rr0 * vi.v * vj.v);
                }
                for j in 0..m {
                    let vj = bp.v[j];
                    h[(i, m + j)] +=
                        w * (zr11 * ui.d1 * vj.d1 + zr10 * ui.d1 * vj.v + zr00 * ui.v * vj.v);
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
                h[(m + j, m + i)] = h[(m + i, m + j)];
            }
            for j in 0..m {
                h[(m + j, i)] = h[(i, m + j)];
            }
        }
        if let Some(bad) = h.iter().position(|v: &f64| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("Jacobian entry {bad}"),
                node: f64::NAN,
            });
        }
        Ok(h)
    }

    /// `∂g/∂C` at fixed coefficients.
    pub fn load_derivative(&self, x: &[f64], load: &LoadParams) -> Result<ResidualVector> {
        self.check_len(x)?;
        let m = self.m();
        let mut out = DVector::zeros(2 * m);
        for (node, bp) in self.nodes(x, load) {
            let n = node?;
            let sh = &n.sh;
            for k in 0..m {
                out[k] -= n.w * sh.r * sh.dr * bp.u[k].v;
                out[m + k] += n.w * sh.r * sh.dz * bp.v[k].v;
            }
        }
        Ok(out)
    }

    /// `∂Π/∂p_i` at fixed coefficients.
    pub fn p_gradient(&self, x: &[f64], load: &LoadParams) -> Result<DVector<f64>> {
        if !self.spec().is_adaptive() {
            return Err(Error::NotAdaptive);
        }
        self.check_len(x)?;
        let mut out = DVector::zeros(self.spec().n_params());
        for (node, bp) in self.nodes(x, load) {
            let n = node?;
            let sh = &n.sh;
            for (i, d) in combine_p(x, bp).iter().enumerate() {
                let f = n.u * sh.dz * d.ddz * n.s - n.q * sh.r * sh.dr * d.dz
                    + n.u * sh.dr * d.ddr * n.s
                    + (n.v * n.b + n.q * sh.r * sh.dz) * d.dr;
                check_finite(f, "shape-parameter gradient", n.s)?;
                out[i] += n.w * f;
            }
        }
        Ok(out)
    }

    /// Central-difference Jacobian of the residual, for validation.
    pub fn fd_jacobian(&self, x: &[f64], load: &LoadParams, step: f64) -> Result<JacobianMatrix> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let hj = step * (1.0 + x[j].abs());
            xp[j] = x[j] + hj;
            let gp = self.residual(&xp, load)?;
            xp[j] = x[j] - hj;
            let gm = self.residual(&xp, load)?;
            xp[j] = x[j];
            h.set_column(j, &((gp - gm) / (2.0 * hj)));
        }
        Ok(h)
    }
}

/// Relative asymmetry `‖H - Hᵀ‖∞ / ‖H‖∞` (max-entry norms).
pub fn symmetry_defect(h: &JacobianMatrix) -> f64 {
    let scale = h.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (h - h.transpose()).amax() / scale
}

pub fn functional_value(
    state: &SolutionState,
    mat: &MaterialParams,
    rule: &QuadratureRule,
) -> Result<f64> {
    Assembler::new(&state.spec, *mat, rule)?.functional(&state.x, &state.load)
}

pub fn residual(
    state: &SolutionState,
    mat: &MaterialParams,
    rule: &QuadratureRule,
) -> Result<ResidualVector> {
    Assembler::new(&state.spec, *mat, rule)?.residual(&state.x, &state.load)
}

pub fn jacobian(
    state: &SolutionState,
    mat: &MaterialParams,
    rule: &QuadratureRule,
) -> Result<JacobianMatrix> {
    Assembler::new(&state.spec, *mat, rule)?.jacobian(&state.x, &state.load)
}

pub fn p_gradient(
    state: &SolutionState,
    mat: &MaterialParams,
    rule: &QuadratureRule,
) -> Result<DVector<f64>> {
    if !state.spec.is_adaptive() {
        return Err(Error::NotAdaptive);
    }
    Assembler::new(&state.spec, *mat, rule)?.p_gradient(&state.x, &state.load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_rule;
    use rand::{Rng, SeedableRng};

    fn t1_mat() -> MaterialParams {
        MaterialParams::new(0.02, -0.015, 0.00025)
    }

    fn random_x(rng: &mut impl Rng, m: usize, scale: f64) -> Vec<f64> {
        (0..2 * m).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / b.amax()
    }

    #[test]
    fn zero_state() {
        let rule = gauss_rule(32).unwrap();
        let asm = Assembler::new(&BasisSpec::polynomial(3), t1_mat(), &rule).unwrap();
        let x = vec![0.0; 6];
        assert_eq!(
            asm.functional(&x, &LoadParams::new(0.7, 3.0).unwrap())
                .unwrap(),
            0.0
        );
        assert_eq!(
            asm.residual(&x, &LoadParams::uniform(0.0)).unwrap().amax(),
            0.0
        );
    }

    #[test]
    fn residual_is_gradient_of_functional() {
        let rule = gauss_rule(64).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for (spec, load) in [
            (BasisSpec::polynomial(3), LoadParams::uniform(1.7)),
            (
                BasisSpec::polynomial(2),
                LoadParams::new(0.5, 10.0).unwrap(),
            ),
            (
                BasisSpec::adaptive(3, vec![6.0]),
                LoadParams::new(0.5, 10.0).unwrap(),
            ),
        ] {
            let asm = Assembler::new(&spec, t1_mat(), &rule).unwrap();
            let x = random_x(&mut rng, spec.m, 0.2);
            let g = asm.residual(&x, &load).unwrap();
            let mut xp = x.clone();
            for j in 0..x.len() {
                let h = 1e-6;
                xp[j] = x[j] + h;
                let fp = asm.functional(&xp, &load).unwrap();
                xp[j] = x[j] - h;
                let fm = asm.functional(&xp, &load).unwrap();
                xp[j] = x[j];
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() <= 1e-6 * g.amax(),
                    "{spec:?} j={j}: {fd} vs {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_fd_of_residual() {
        let rule = gauss_rule(64).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for (spec, load) in [
            (BasisSpec::polynomial(4), LoadParams::uniform(1.7)),
            (
                BasisSpec::polynomial(3),
                LoadParams::new(0.5, 10.0).unwrap(),
            ),
            (
                BasisSpec::adaptive(4, vec![9.0]),
                LoadParams::new(0.5, 10.0).unwrap(),
            ),
        ] {
            let asm = Assembler::new(&spec, t1_mat(), &rule).unwrap();
            for _ in 0..3 {
                let x = random_x(&mut rng, spec.m, 0.3);
                let h = asm.jacobian(&x, &load).unwrap();
                let fd = asm.fd_jacobian(&x, &load, 1e-6).unwrap();
                assert!(max_rel(&h, &fd) < 1e-6, "{spec:?}: {}", max_rel(&h, &fd));
            }
        }
    }

    #[test]
    fn jacobian_at_identity() {
        let rule = gauss_rule(64).unwrap();
        let asm = Assembler::new(&BasisSpec::polynomial(3), t1_mat(), &rule).unwrap();
        let x = vec![0.0; 6];
        let load = LoadParams::uniform(0.0);
        let h = asm.jacobian(&x, &load).unwrap();
        let fd = asm.fd_jacobian(&x, &load, 1e-6).unwrap();
        assert!((&h - &fd).amax() < 1e-8);
        // z-block carries no first-order stiffness in the flat state
        assert!(h.view((0, 0), (3, 3)).amax() < 1e-14);
    }

    #[test]
    fn load_derivative_matches_fd() {
        let rule = gauss_rule(64).unwrap();
        let asm = Assembler::new(&BasisSpec::polynomial(3), t1_mat(), &rule).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let x = random_x(&mut rng, 3, 0.3);
        let load = LoadParams::new(0.4, 2.0).unwrap();
        let dc = asm.load_derivative(&x, &load).unwrap();
        let h = 1e-6;
        let fd = (asm.residual(&x, &load.with_c(0.4 + h)).unwrap()
            - asm.residual(&x, &load.with_c(0.4 - h)).unwrap())
            / (2.0 * h);
        assert!((&dc - &fd).amax() < 1e-8 * dc.amax());
    }

    #[test]
    fn p_gradient_matches_fd_of_functional() {
        let rule = gauss_rule(128).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(13);
        let load = LoadParams::new(0.5, 10.0).unwrap();
        let x = random_x(&mut rng, 3, 0.1);
        let p = 7.0;
        let asm = Assembler::new(&BasisSpec::adaptive(3, vec![p]), t1_mat(), &rule).unwrap();
        let grad = asm.p_gradient(&x, &load).unwrap()[0];
        let h = 1e-5;
        let plus = Assembler::new(&BasisSpec::adaptive(3, vec![p + h]), t1_mat(), &rule)
            .unwrap()
            .functional(&x, &load)
            .unwrap();
        let minus = Assembler::new(&BasisSpec::adaptive(3, vec![p - h]), t1_mat(), &rule)
            .unwrap()
            .functional(&x, &load)
            .unwrap();
        let fd = (plus - minus) / (2.0 * h);
        assert!(((grad - fd) / fd).abs() < 1e-5, "{grad} vs {fd}");

        let zero = vec![0.0; 6];
        assert_eq!(asm.p_gradient(&zero, &load).unwrap()[0], 0.0);
        let poly = Assembler::new(&BasisSpec::polynomial(3), t1_mat(), &rule).unwrap();
        assert!(matches!(
            poly.p_gradient(&zero, &load),
            Err(Error::NotAdaptive)
        ));
    }

    #[test]
    fn block_structure() {
        // z-block depends on the u functions only: with x_r = 0 and D = 0
        // the cross block only sees Q r u_i' v_j terms
        let rule = gauss_rule(64).unwrap();
        let asm = Assembler::new(&BasisSpec::polynomial(2), t1_mat(), &rule).unwrap();
        let load = LoadParams::uniform(0.0);
        let x = vec![-0.3, 0.1, 0.0, 0.0];
        let h = asm.jacobian(&x, &load).unwrap();
        assert!(symmetry_defect(&h) == 0.0);
        assert!(h[(0, 0)] > 0.0 && h[(2, 2)] > 0.0);
    }

    #[test]
    fn collapsed_radius_is_reported() {
        let rule = gauss_rule(16).unwrap();
        let asm = Assembler::new(&BasisSpec::polynomial(1), t1_mat(), &rule).unwrap();
        // r = s + 3 (s³ - s) is negative on most of (0, 1)
        let err = asm
            .residual(&[0.0, 3.0], &LoadParams::uniform(1.0))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }
}
