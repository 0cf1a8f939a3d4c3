//! Gauss–Legendre rules on the open interval (0, 1).
//!
//! Nodes never touch the endpoints: `r/s` is singular at the axis and
//! several Jacobian integrands carry `1/s` weights.

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 2;
pub const MAX_NODES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule with `n` nodes mapped to (0, 1); weights sum to 1.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if !(MIN_NODES..=MAX_NODES).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "quadrature node count {n} outside {MIN_NODES}..={MAX_NODES}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; map symmetric pairs
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Ok(QuadratureRule { nodes, weights })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite rule: `n_each` Gauss nodes on each of `(0, split)` and
    /// `(split, 1)`.
    pub fn two_panel(n_each: usize, split: f64) -> Result<Self> {
        if !(split > 0.0 && split < 1.0) {
            return Err(Error::InvalidInput(format!(
                "panel split {split} outside (0, 1)"
            )));
        }
        let base = gauss_rule(n_each)?;
        let mut nodes = Vec::with_capacity(2 * n_each);
        let mut weights = Vec::with_capacity(2 * n_each);
        for (a, len) in [(0.0, split), (split, 1.0 - split)] {
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(a + len * x);
                weights.push(len * w);
            }
        }
        Ok(Self { nodes, weights })
    }

    /// Default rule for a basis: 64 nodes for smooth (polynomial or mildly
    /// adaptive) integrands, 192 once the boundary layer sharpens past
    /// `p1 = 20`, and a two-panel rule split at `1 - 6/p1` beyond `p1 = 60`.
    pub fn auto(p1: Option<f64>) -> Self {
        let rule = match p1 {
            Some(p) if p > 60.0 => Self::two_panel(96, 1.0 - 6.0 / p),
            Some(p) if p > 20.0 => gauss_rule(192),
            _ => gauss_rule(64),
        };
        rule.expect("built-in rule parameters are valid")
    }
}

/// `Σ w_i f(s_i)`; the first non-finite sample is reported with its node.
pub fn integrate<F>(mut f: F, rule: &QuadratureRule) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut sum = 0.0;
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(s);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "integrand".into(),
                node: s,
            });
        }
        sum += w * v;
    }
    Ok(sum)
}
