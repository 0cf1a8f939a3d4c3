//! Run configuration: a flat `key = value` text format and an equivalent
//! JSON form.
//!
//! ```text
//! # uniform pressure, polynomial basis, m = 1..6
//! gamma1 = 0.02
//! gamma2 = -0.015
//! gamma3 = 0.00025
//! c = 1.7
//! d = 0
//! family = polynomial
//! m = 6
//! m_range = 1..6
//! probes = 0.2
//! ```
//!
//! Recognised keys: `gamma1 gamma2 gamma3 c d c_end step family m
//! m_range n p quad probes out format`. Blank lines and lines starting
//! with `#` are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec, P_MIN};
use crate::error::{Error, Result};
use crate::kinematics::LoadParams;
use crate::material::MaterialParams;
use crate::quadrature::{MAX_NODES, MIN_NODES};

pub const MAX_M: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub c_end: f64,
    /// First step in `C`.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub family: BasisFamily,
    pub m: usize,
    /// Inclusive range of `m` for convergence tables.
    #[serde(default)]
    pub m_range: Option<(usize, usize)>,
    /// Number of adaptive shape parameters.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Starting shape parameters; estimated from the load when absent.
    #[serde(default)]
    pub p: Option<Vec<f64>>,
}

fn default_n() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub load: LoadParams,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    pub basis: BasisConfig,
    /// Gauss node count; automatic when absent.
    #[serde(default)]
    pub quadrature: Option<usize>,
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_probes() -> Vec<f64> {
    vec![0.5]
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| cfg_err(format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| cfg_err(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_f64(key, t))
        .collect()
}

fn parse_range(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once("..")
        .ok_or_else(|| cfg_err(format!("{key}: expected `lo..hi`, got {v:?}")))?;
    Ok((parse_usize(key, a)?, parse_usize(key, b)?))
}

impl RunConfig {
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut mat = MaterialParams::new(0.0, 0.0, 0.0);
        let (mut c, mut d) = (None, 0.0);
        let (mut c_end, mut step) = (None, default_step());
        let mut family = None;
        let mut m = None;
        let mut m_range = None;
        let mut n = default_n();
        let mut p = None;
        let mut quadrature = None;
        let mut probes = default_probes();
        let mut output = OutputConfig::default();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "gamma1" => mat.gamma1 = parse_f64(key, value)?,
                "gamma2" => mat.gamma2 = parse_f64(key, value)?,
                "gamma3" => mat.gamma3 = parse_f64(key, value)?,
                "c" => c = Some(parse_f64(key, value)?),
                "d" => d = parse_f64(key, value)?,
                "c_end" => c_end = Some(parse_f64(key, value)?),
                "step" => step = parse_f64(key, value)?,
                "family" => {
                    family = Some(match value {
                        "polynomial" => BasisFamily::Polynomial,
                        "adaptive" => BasisFamily::Adaptive,
                        other => {
                            return Err(cfg_err(format!("family: unknown basis family {other:?}")))
                        }
                    })
                }
                "m" => m = Some(parse_usize(key, value)?),
                "m_range" => m_range = Some(parse_range(key, value)?),
                "n" => n = parse_usize(key, value)?,
                "p" => p = Some(parse_list(key, value)?),
                "quad" => {
                    quadrature = if value == "auto" {
                        None
                    } else {
                        Some(parse_usize(key, value)?)
                    }
                }
                "probes" => probes = parse_list(key, value)?,
                "out" => output.dir = PathBuf::from(value),
                "format" => {
                    output.format = match value {
                        "csv" => OutputFormat::Csv,
                        "json" => OutputFormat::Json,
                        other => {
                            return Err(cfg_err(format!(
                                "format: expected csv or json, got {other:?}"
                            )))
                        }
                    }
                }
                other => {
                    return Err(cfg_err(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }

        let c = c.ok_or_else(|| cfg_err("missing key `c`"))?;
        let family = family.ok_or_else(|| cfg_err("missing key `family`"))?;
        let m = match (m, m_range) {
            (Some(m), _) => m,
            (None, Some((_, hi))) => hi,
            (None, None) => return Err(cfg_err("missing key `m`")),
        };
        let cfg = Self {
            material: mat,
            load: LoadParams { c, d },
            sweep: c_end.map(|c_end| SweepConfig { c_end, step }),
            basis: BasisConfig {
                family,
                m,
                m_range,
                n,
                p,
            },
            quadrature,
            probes,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| cfg_err(format!("JSON config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads either format; JSON is recognised by a leading `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_key_value(text)
        }
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.material.is_finite() {
            return Err(cfg_err("material constants must be finite"));
        }
        if !self.load.c.is_finite() || !self.load.d.is_finite() {
            return Err(cfg_err("load parameters must be finite"));
        }
        if self.load.d < 0.0 {
            return Err(cfg_err(format!(
                "liquid weight d = {} must be >= 0",
                self.load.d
            )));
        }
        let b = &self.basis;
        if b.m < 1 || b.m > MAX_M {
            return Err(cfg_err(format!("m = {} outside 1..={MAX_M}", b.m)));
        }
        if let Some((lo, hi)) = b.m_range {
            if lo < 1 || hi > MAX_M || lo > hi {
                return Err(cfg_err(format!(
                    "m_range {lo}..{hi} must lie within 1..={MAX_M}"
                )));
            }
        }
        if b.family == BasisFamily::Adaptive {
            if self.load.d <= 0.0 {
                return Err(cfg_err(
                    "the adaptive family needs d > 0; use family = polynomial",
                ));
            }
            if b.n < 1 {
                return Err(cfg_err("adaptive basis needs n >= 1"));
            }
            if let Some(p) = &b.p {
                if p.len() != b.n {
                    return Err(cfg_err(format!("p has {} values but n = {}", p.len(), b.n)));
                }
                if !(p[0] >= P_MIN) || p.iter().any(|v| !v.is_finite()) {
                    return Err(cfg_err(format!("p1 must be finite and >= {P_MIN}")));
                }
            }
        }
        if let Some(q) = self.quadrature {
            if !(MIN_NODES..=MAX_NODES).contains(&q) {
                return Err(cfg_err(format!(
                    "quad = {q} outside {MIN_NODES}..={MAX_NODES}"
                )));
            }
        }
        if self.probes.is_empty() {
            return Err(cfg_err("at least one probe point is required"));
        }
        if let Some(bad) = self.probes.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(cfg_err(format!("probe {bad} outside [0, 1]")));
        }
        if let Some(sw) = &self.sweep {
            if !sw.c_end.is_finite() || !(sw.step > 0.0) {
                return Err(cfg_err("sweep needs a finite c_end and a positive step"));
            }
        }
        Ok(())
    }

    /// Basis for `m` terms with the configured or estimated parameters.
    pub fn basis_spec(&self, m: usize) -> BasisSpec {
        match self.basis.family {
            BasisFamily::Polynomial => BasisSpec::polynomial(m),
            BasisFamily::Adaptive => {
                let p = self.basis.p.clone().unwrap_or_else(|| {
                    let mut p = vec![0.0; self.basis.n];
                    p[0] = self.load.d.sqrt();
                    p
                });
                BasisSpec::adaptive(m, p)
            }
        }
    }

    pub fn m_values(&self) -> Vec<usize> {
        match self.basis.m_range {
            Some((lo, hi)) => (lo..=hi).collect(),
            None => vec![self.basis.m],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = "
# clamped membrane, uniform pressure
gamma1 = 0.02
gamma2 = -0.015
gamma3 = 0.00025
c = 1.7
d = 0
family = polynomial
m_range = 1..6
probes = 0.2
";

    #[test]
    fn key_value_round_trips_through_json() {
        let cfg = RunConfig::parse(TABLE1).unwrap();
        assert_eq!(cfg.basis.m, 6);
        assert_eq!(cfg.m_values(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(cfg.probes, vec![0.2]);
        assert_eq!(cfg.quadrature, None);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&json).unwrap(), cfg);
    }

    #[test]
    fn adaptive_defaults() {
        let cfg = RunConfig::parse(
            "gamma1 = 0.1\nc = 0.5\nd = 10\nfamily = adaptive\nm = 6\nprobes = 0.9, 0.5\nquad = 128\n",
        )
        .unwrap();
        let spec = cfg.basis_spec(6);
        assert_eq!(spec.p, vec![10f64.sqrt()]);
        assert_eq!(cfg.probes, vec![0.9, 0.5]);
        assert_eq!(cfg.quadrature, Some(128));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "c = 1\nfamily = polynomial\nm = 0\n",
            "c = 1\nfamily = polynomial\nm = 13\n",
            "c = 1\nd = -1\nfamily = polynomial\nm = 2\n",
            "c = 1\nfamily = polynomial\nm = 2\nprobes = 1.5\n",
            "c = 1\nfamily = adaptive\nm = 2\n",
            "c = 1\nfamily = spline\nm = 2\n",
            "c = 1\nfamily = polynomial\nm = 2\ncolour = red\n",
            "c = one\nfamily = polynomial\nm = 2\n",
            "family = polynomial\nm = 2\n",
            "c = 1\nfamily = polynomial\nm = 2\nquad = 1\n",
            "c = 1\nfamily = polynomial\nm_range = 4..2\n",
            "c = 1 family polynomial\n",
            "{\"material\": 3}",
        ] {
            assert!(
                matches!(RunConfig::parse(bad), Err(Error::Config(_))),
                "{bad:?}"
            );
        }
    }
}
