//! Bidermann-type strain energy for an incompressible membrane.
//!
//! All quantities are dimensionless: the energy is divided by the first
//! elastic constant and stresses by twice that constant times the
//! undeformed thickness.

use serde::{Deserialize, Serialize};

/// Ratios of the higher Bidermann constants to the first one.
///
/// `gamma1` multiplies `(I2 - 3)`, `gamma2` multiplies `(I1 - 3)^2` and
/// `gamma3` multiplies `(I1 - 3)^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl MaterialParams {
    pub fn new(gamma1: f64, gamma2: f64, gamma3: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            gamma3,
        }
    }

    /// Neo-Hookean-like material with only the `(I2 - 3)` correction.
    pub fn mooney(gamma1: f64) -> Self {
        Self::new(gamma1, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.gamma1.is_finite() && self.gamma2.is_finite() && self.gamma3.is_finite()
    }
}

/// Principal stretches of an incompressible sheet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl StretchState {
    /// Builds the state from the two in-plane stretches; the thickness
    /// stretch follows from incompressibility.
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3: 1.0 / (lambda1 * lambda2),
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 1.0)
    }

    /// First deformation invariant `λ1² + λ2² + λ3²`.
    pub fn i1(&self) -> f64 {
        self.lambda1 * self.lambda1 + self.lambda2 * self.lambda2 + self.lambda3 * self.lambda3
    }

    /// Second deformation invariant `λ1⁻² + λ2⁻² + λ3⁻²`.
    pub fn i2(&self) -> f64 {
        (self.lambda1 * self.lambda1).recip()
            + (self.lambda2 * self.lambda2).recip()
            + (self.lambda3 * self.lambda3).recip()
    }

    pub fn swapped(&self) -> Self {
        Self {
            lambda1: self.lambda2,
            lambda2: self.lambda1,
            lambda3: self.lambda3,
        }
    }
}

/// First and second partial derivatives of the energy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDerivs {
    pub w1: f64,
    pub w2: f64,
    pub w11: f64,
    pub w12: f64,
    pub w22: f64,
}

/// Dimensionless energy density
/// `(I1-3) + Γ1 (I2-3) + Γ2 (I1-3)² + Γ3 (I1-3)³`.
pub fn energy(i1: f64, i2: f64, mat: &MaterialParams) -> f64 {
    let e = i1 - 3.0;
    e + mat.gamma1 * (i2 - 3.0) + e * e * (mat.gamma2 + mat.gamma3 * e)
}

pub fn energy_derivs(i1: f64, _i2: f64, mat: &MaterialParams) -> EnergyDerivs {
    let e = i1 - 3.0;
    EnergyDerivs {
        w1: 1.0 + e * (2.0 * mat.gamma2 + 3.0 * mat.gamma3 * e),
        w2: mat.gamma1,
        w11: 2.0 * mat.gamma2 + 6.0 * mat.gamma3 * e,
        w12: 0.0,
        w22: 0.0,
    }
}

/// Meridional and circumferential membrane stresses `(T1, T2)`.
pub fn principal_stresses(st: &StretchState, mat: &MaterialParams) -> (f64, f64) {
    let d = energy_derivs(st.i1(), st.i2(), mat);
    let l3sq = st.lambda3 * st.lambda3;
    let t1 =
        st.lambda3 * (st.lambda1 * st.lambda1 - l3sq) * (d.w1 + st.lambda2 * st.lambda2 * d.w2);
    let t2 =
        st.lambda3 * (st.lambda2 * st.lambda2 - l3sq) * (d.w1 + st.lambda1 * st.lambda1 * d.w2);
    (t1, t2)
}

/// Stiffness scalar `U(a, b) = (1 - a⁻⁴ b⁻²)(W_I1 + b² W_I2)`.
///
/// The argument order matters: assembly uses both `U(λ1, λ2)` and
/// `U(λ2, λ1)`. With `λ3 = 1/(ab)` one has `T1 = (a/b) U(a, b)`.
pub fn stiffness_scalar(a: f64, b: f64, mat: &MaterialParams) -> f64 {
    let st = StretchState::new(a, b);
    let d = energy_derivs(st.i1(), st.i2(), mat);
    let pre = 1.0 - 1.0 / (a.powi(4) * b * b);
    pre * (d.w1 + b * b * d.w2)
}

/// Analytic partials `(∂U/∂a, ∂U/∂b)` of [`stiffness_scalar`].
pub fn stiffness_derivs(a: f64, b: f64, mat: &MaterialParams) -> (f64, f64) {
    let st = StretchState::new(a, b);
    let d = energy_derivs(st.i1(), st.i2(), mat);
    let a2 = a * a;
    let b2 = b * b;
    let inv = 1.0 / (a2 * a2 * b2);
    let pre = 1.0 - inv;
    let bracket = d.w1 + b2 * d.w2;

    // invariant derivatives through λ3 = 1/(ab)
    let i1_a = 2.0 * a - 2.0 / (a2 * a * b2);
    let i1_b = 2.0 * b - 2.0 / (a2 * b2 * b);
    let i2_a = -2.0 / (a2 * a) + 2.0 * a * b2;
    let i2_b = -2.0 / (b2 * b) + 2.0 * a2 * b;

    let dbr_di1 = d.w11 + b2 * d.w12;
    let dbr_di2 = d.w12 + b2 * d.w22;

    let du_da = 4.0 * inv / a * bracket + pre * (dbr_di1 * i1_a + dbr_di2 * i2_a);
    let du_db = 2.0 * inv / b * bracket + pre * (dbr_di1 * i1_b + dbr_di2 * i2_b + 2.0 * b * d.w2);
    (du_da, du_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table1() -> MaterialParams {
        MaterialParams::new(0.02, -0.015, 0.00025)
    }

    #[test]
    fn energy_values() {
        assert_eq!(energy(3.0, 3.0, &table1()), 0.0);
        assert_relative_eq!(
            energy(4.0, 4.0, &MaterialParams::mooney(0.1)),
            1.1,
            max_relative = 1e-15
        );
        assert_relative_eq!(energy(4.0, 4.0, &table1()), 1.00525, max_relative = 1e-14);
    }

    #[test]
    fn energy_derivs_values() {
        let d = energy_derivs(3.0, 3.0, &MaterialParams::mooney(0.1));
        assert_eq!((d.w1, d.w2, d.w11, d.w12, d.w22), (1.0, 0.1, 0.0, 0.0, 0.0));
        let d = energy_derivs(4.0, 4.0, &table1());
        assert_relative_eq!(d.w1, 0.97075, max_relative = 1e-14);
    }

    #[test]
    fn energy_derivs_match_central_differences() {
        let mat = table1();
        let (i1, i2, h) = (3.7, 3.4, 1e-5);
        let d = energy_derivs(i1, i2, &mat);
        let w = |a: f64, b: f64| energy(a, b, &mat);
        let fd1 = (w(i1 + h, i2) - w(i1 - h, i2)) / (2.0 * h);
        let fd2 = (w(i1, i2 + h) - w(i1, i2 - h)) / (2.0 * h);
        let fd11 = (w(i1 + h, i2) - 2.0 * w(i1, i2) + w(i1 - h, i2)) / (h * h);
        let fd12 = (w(i1 + h, i2 + h) - w(i1 + h, i2 - h) - w(i1 - h, i2 + h) + w(i1 - h, i2 - h))
            / (4.0 * h * h);
        let fd22 = (w(i1, i2 + h) - 2.0 * w(i1, i2) + w(i1, i2 - h)) / (h * h);
        assert_relative_eq!(d.w1, fd1, max_relative = 1e-6);
        assert_relative_eq!(d.w2, fd2, max_relative = 1e-6);
        assert_relative_eq!(d.w11, fd11, max_relative = 1e-4, epsilon = 1e-6);
        assert!(fd12.abs() < 1e-6 && d.w12 == 0.0);
        assert!(fd22.abs() < 1e-6 && d.w22 == 0.0);
    }

    #[test]
    fn identity_is_stress_free() {
        assert_eq!(
            principal_stresses(&StretchState::identity(), &table1()),
            (0.0, 0.0)
        );
        assert_eq!(stiffness_scalar(1.0, 1.0, &table1()), 0.0);
    }

    #[test]
    fn equibiaxial_stress_value() {
        let mat = MaterialParams::mooney(0.1);
        let st = StretchState::new(1.2, 1.2);
        let l3 = 1.0 / 1.44;
        let expected = l3 * (1.44 - l3 * l3) * (1.0 + 0.1 * 1.44);
        let (t1, t2) = principal_stresses(&st, &mat);
        assert_relative_eq!(t1, expected, max_relative = 1e-14);
        assert_relative_eq!(t2, expected, max_relative = 1e-14);
        assert_relative_eq!(
            stiffness_scalar(1.2, 1.2, &mat),
            (1.0 - 1.2f64.powi(-6)) * (1.0 + 0.1 * 1.44),
            max_relative = 1e-14
        );
    }

    #[test]
    fn stiffness_matches_stress_identity() {
        let mat = table1();
        for &(a, b) in &[(1.3, 1.1), (0.8, 1.7), (2.2, 0.6), (1.05, 1.0), (2.9, 2.4)] {
            let (t1, t2) = principal_stresses(&StretchState::new(a, b), &mat);
            assert_relative_eq!(
                t1,
                a / b * stiffness_scalar(a, b, &mat),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                t2,
                b / a * stiffness_scalar(b, a, &mat),
                max_relative = 1e-12
            );
        }
    }

    fn fd_stiffness(a: f64, b: f64, mat: &MaterialParams, h: f64) -> (f64, f64) {
        (
            (stiffness_scalar(a + h, b, mat) - stiffness_scalar(a - h, b, mat)) / (2.0 * h),
            (stiffness_scalar(a, b + h, mat) - stiffness_scalar(a, b - h, mat)) / (2.0 * h),
        )
    }

    #[test]
    fn stiffness_derivs_fixed_points() {
        let mat = table1();
        for &(a, b) in &[(1.3, 1.1), (1.0, 1.0), (1.1, 1.3), (0.7, 2.0), (2.0, 0.7)] {
            let (da, db) = stiffness_derivs(a, b, &mat);
            let (fa, fb) = fd_stiffness(a, b, &mat, 1e-6);
            assert_relative_eq!(da, fa, max_relative = 1e-5);
            assert_relative_eq!(db, fb, max_relative = 1e-5);
        }
        let (da, db) = stiffness_derivs(1.0, 1.0, &mat);
        assert!(da != 0.0 && db != 0.0);
    }

    proptest! {
        #[test]
        fn identity_energy_zero(g1 in -1.0..1.0f64, g2 in -1.0..1.0f64, g3 in -1.0..1.0f64) {
            prop_assert_eq!(energy(3.0, 3.0, &MaterialParams::new(g1, g2, g3)), 0.0);
        }

        #[test]
        fn invariants_bounded_below(a in 0.05..20.0f64, b in 0.05..20.0f64) {
            let st = StretchState::new(a, b);
            prop_assert!(st.i1() >= 3.0 - 1e-12);
            prop_assert!(st.i2() >= 3.0 - 1e-12);
            prop_assert!((st.lambda1 * st.lambda2 * st.lambda3 - 1.0).abs() < 1e-14);
        }

        #[test]
        fn stresses_swap_symmetric(a in 0.5..3.0f64, b in 0.5..3.0f64) {
            let mat = table1();
            let (t1, t2) = principal_stresses(&StretchState::new(a, b), &mat);
            let (s1, s2) = principal_stresses(&StretchState::new(b, a), &mat);
            prop_assert_eq!(t1, s2);
            prop_assert_eq!(t2, s1);
        }

        #[test]
        fn stiffness_derivs_random(a in 0.5..3.0f64, b in 0.5..3.0f64) {
            let mat = table1();
            let (da, db) = stiffness_derivs(a, b, &mat);
            let (fa, fb) = fd_stiffness(a, b, &mat, 1e-6);
            let scale = 1.0 + da.abs().max(db.abs());
            prop_assert!((da - fa).abs() <= 1e-5 * scale);
            prop_assert!((db - fb).abs() <= 1e-5 * scale);
        }
    }
}
