//! Experiment drivers and the files they write.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{OutputFormat, RunConfig};
use crate::basis::{eval_shape, SolutionState};
use crate::error::{Error, Result};
use crate::kinematics::{pole_stretches, stretches};
use crate::material::{principal_stresses, MaterialParams};
use crate::solver::{
    self, continue_in_load, delta_at, Context, ContinuationPoint, SolveReport, StepPolicy,
};

/// Points in an emitted profile, `s = i/200`.
pub const PROFILE_POINTS: usize = 201;

pub const PROFILE_HEADER: &str = "s,z,r,dz,dr,lambda1,lambda2,t1,t2,delta";
pub const TABLE_HEADER: &str =
    "m,p1,s,z,r,neg_dz,dr,neg_d2z,neg_d2r,delta,delta_max,iterations,status";
pub const SWEEP_HEADER: &str = "c,f,stability_hint,parametrization,iterations";

/// One row of a solution profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub s: f64,
    pub z: f64,
    pub r: f64,
    pub dz: f64,
    pub dr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub t1: f64,
    pub t2: f64,
    /// Undefined (NaN) at zero load.
    pub delta: f64,
}

pub fn profile(state: &SolutionState, mat: &MaterialParams) -> Result<Vec<ProfileRecord>> {
    (0..PROFILE_POINTS)
        .map(|i| {
            let s = i as f64 / (PROFILE_POINTS - 1) as f64;
            let sh = eval_shape(state, s);
            let st = if s == 0.0 {
                pole_stretches(&sh)
            } else {
                stretches(&sh, s)?
            };
            let (t1, t2) = principal_stresses(&st, mat);
            let delta = if state.load.c == 0.0 {
                f64::NAN
            } else {
                delta_at(state, mat, s)?
            };
            Ok(ProfileRecord {
                s,
                z: sh.z,
                r: sh.r,
                dz: sh.dz,
                dr: sh.dr,
                lambda1: st.lambda1,
                lambda2: st.lambda2,
                t1,
                t2,
                delta,
            })
        })
        .collect()
}

pub fn profile_csv(rows: &[ProfileRecord]) -> String {
    let mut out = format!("{PROFILE_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.6e}",
            r.s, r.z, r.r, r.dz, r.dr, r.lambda1, r.lambda2, r.t1, r.t2, r.delta
        )
        .expect("writing to a String");
    }
    out
}

/// What a driver wrote and whether its solves succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// First failure, if any; the files are written regardless.
    pub failure: Option<String>,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    status: &'a str,
    error: Option<String>,
    material: MaterialParams,
    load: crate::kinematics::LoadParams,
    report: Option<&'a SolveReport>,
}

#[derive(Debug, Serialize)]
struct SolutionFile<'a> {
    material: MaterialParams,
    #[serde(flatten)]
    state: &'a SolutionState,
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn context(cfg: &RunConfig, m: usize) -> Context {
    let mut ctx = Context::new(cfg.material, cfg.load, cfg.basis_spec(m));
    ctx.quad = cfg.quadrature;
    ctx.probes = cfg.probes.clone();
    ctx
}

/// Single solve: `solution.json`, `profile.csv` and `report.json`.
pub fn run_solve(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let ctx = context(cfg, cfg.basis.m);
    let mut files = Vec::new();
    let (report, failure) = match solver::solve(&ctx) {
        Ok((state, report)) => {
            let sol = SolutionFile {
                material: cfg.material,
                state: &state,
            };
            write(
                out,
                "solution.json",
                &serde_json::to_string_pretty(&sol)?,
                &mut files,
            )?;
            write(
                out,
                "profile.csv",
                &profile_csv(&profile(&state, &cfg.material)?),
                &mut files,
            )?;
            (Some(report), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let rep = RunReport {
        status: if failure.is_none() { "ok" } else { "failed" },
        error: failure.clone(),
        material: cfg.material,
        load: cfg.load,
        report: report.as_ref(),
    };
    write(
        out,
        "report.json",
        &serde_json::to_string_pretty(&rep)?,
        &mut files,
    )?;
    Ok(RunOutcome { files, failure })
}

/// One row of a convergence table: the solution and its derivatives at
/// the first probe, as in the published tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub m: usize,
    pub p1: Option<f64>,
    pub s: f64,
    pub z: f64,
    pub r: f64,
    pub neg_dz: f64,
    pub dr: f64,
    pub neg_d2z: f64,
    pub neg_d2r: f64,
    pub delta: Option<f64>,
    pub delta_max: Option<f64>,
    pub iterations: usize,
    /// `ok` or the failure message.
    pub status: String,
}

fn table_row(cfg: &RunConfig, m: usize) -> TableRow {
    let s = cfg.probes[0];
    match solver::solve(&context(cfg, m)) {
        Ok((state, report)) => {
            let sh = eval_shape(&state, s);
            TableRow {
                m,
                p1: state.spec.is_adaptive().then(|| state.spec.p[0]),
                s,
                z: sh.z,
                r: sh.r,
                neg_dz: -sh.dz,
                dr: sh.dr,
                neg_d2z: -sh.d2z,
                neg_d2r: -sh.d2r,
                delta: report.delta_at.first().map(|d| d.1),
                delta_max: report.delta_max,
                iterations: report.iterations,
                status: "ok".into(),
            }
        }
        Err(e) => TableRow {
            m,
            p1: None,
            s,
            z: f64::NAN,
            r: f64::NAN,
            neg_dz: f64::NAN,
            dr: f64::NAN,
            neg_d2z: f64::NAN,
            neg_d2r: f64::NAN,
            delta: None,
            delta_max: None,
            iterations: 0,
            status: e.to_string().replace(',', ";"),
        },
    }
}

/// Solves every `m` of the configured range, at most `jobs` at a time.
pub fn convergence_rows(cfg: &RunConfig, jobs: usize) -> Vec<TableRow> {
    let ms = cfg.m_values();
    let jobs = jobs.max(1);
    if jobs == 1 {
        return ms.iter().map(|&m| table_row(cfg, m)).collect();
    }
    let mut rows = Vec::with_capacity(ms.len());
    for chunk in ms.chunks(jobs) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&m| scope.spawn(move || table_row(cfg, m)))
                .collect();
            rows.extend(
                handles
                    .into_iter()
                    .map(|h| h.join().expect("row solver panicked")),
            );
        });
    }
    rows
}

fn opt(v: Option<f64>, sci: bool) -> String {
    match v {
        Some(x) if sci => format!("{x:.6e}"),
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.m,
            opt(r.p1, false),
            r.s,
            r.z,
            r.r,
            r.neg_dz,
            r.dr,
            r.neg_d2z,
            r.neg_d2r,
            opt(r.delta, true),
            opt(r.delta_max, true),
            r.iterations,
            r.status
        )
        .expect("writing to a String");
    }
    out
}

/// Convergence study over the configured `m` range: `table.csv` (or
/// `table.json`). A failed row is recorded and the rest still run.
pub fn run_convergence(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<RunOutcome> {
    let rows = convergence_rows(cfg, jobs);
    let failure = rows
        .iter()
        .find(|r| r.status != "ok")
        .map(|r| format!("m = {}: {}", r.m, r.status));
    let mut files = Vec::new();
    match cfg.output.format {
        OutputFormat::Csv => write(out, "table.csv", &table_csv(&rows), &mut files)?,
        OutputFormat::Json => write(
            out,
            "table.json",
            &serde_json::to_string_pretty(&rows)?,
            &mut files,
        )?,
    }
    Ok(RunOutcome { files, failure })
}

pub fn sweep_csv(points: &[ContinuationPoint]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in points {
        let mode = match p.parametrization {
            solver::Parametrization::Load => "load",
            solver::Parametrization::Sag => "sag",
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            p.c_value, p.sag, p.stability_hint, mode, p.iterations
        )
        .expect("writing to a String");
    }
    out
}

/// Load–sag curve from `load.c` to `sweep.c_end`: `loadsag.csv` (or
/// `loadsag.json`). An empty range writes the header only.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs `c_end`".into()))?;
    let c_start = cfg.load.c;
    let (points, failure) = if sweep.c_end == c_start {
        (Vec::new(), None)
    } else {
        let ctx = context(cfg, cfg.basis.m);
        match solver::solve(&ctx) {
            Ok((state, _)) => {
                let policy = StepPolicy {
                    initial: sweep.step,
                    min: sweep.step.min(StepPolicy::default().min),
                    max: sweep.step.max(StepPolicy::default().max),
                    ..StepPolicy::default()
                };
                match continue_in_load(
                    c_start,
                    sweep.c_end,
                    &policy,
                    &ctx.with_spec(state.spec),
                    &state.x,
                ) {
                    Ok(res) => (res.points, res.failure),
                    Err(e) => (Vec::new(), Some(e.to_string())),
                }
            }
            Err(e) => (
                Vec::new(),
                Some(format!("start point at C = {c_start}: {e}")),
            ),
        }
    };
    let mut files = Vec::new();
    match cfg.output.format {
        OutputFormat::Csv => write(out, "loadsag.csv", &sweep_csv(&points), &mut files)?,
        OutputFormat::Json => write(
            out,
            "loadsag.json",
            &serde_json::to_string_pretty(&points)?,
            &mut files,
        )?,
    }
    if let Some(msg) = &failure {
        let rep = serde_json::json!({ "status": "failed", "error": msg, "points": points.len() });
        write(
            out,
            "report.json",
            &serde_json::to_string_pretty(&rep)?,
            &mut files,
        )?;
    }
    Ok(RunOutcome { files, failure })
}

/// Dimensional inputs of a physical set-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalInputs {
    /// Membrane radius.
    pub r0: f64,
    /// Membrane thickness.
    pub h0: f64,
    /// First elastic constant of the strain energy.
    pub c1: f64,
    /// Liquid density.
    pub rho: f64,
    /// Gravitational acceleration.
    pub g: f64,
    /// Pressure on the loaded side at the membrane centre.
    pub p_star: f64,
    /// Pressure on the other side.
    pub p0: f64,
}

/// Dimensionless `(C, D)`: `C = (P* - P⁰) R0 / (2 C1 h0)` and
/// `D = ρ g R0² / (2 C1 h0)`. The extra `R0` in `D` comes from measuring
/// the depth `z` in units of `R0`.
pub fn scale_inputs(dim: &DimensionalInputs) -> Result<(f64, f64)> {
    if !(dim.r0 > 0.0 && dim.h0 > 0.0 && dim.c1 > 0.0) {
        return Err(Error::Config("R0, h0 and C1 must be positive".into()));
    }
    let unit = 2.0 * dim.c1 * dim.h0;
    Ok((
        (dim.p_star - dim.p0) * dim.r0 / unit,
        dim.rho * dim.g * dim.r0 * dim.r0 / unit,
    ))
}

/// Inverse of [`scale_inputs`] for the pressure difference and density,
/// given the geometry, `C1`, `g` and `P⁰`.
pub fn unscale_inputs(
    c: f64,
    d: f64,
    r0: f64,
    h0: f64,
    c1: f64,
    g: f64,
    p0: f64,
) -> Result<DimensionalInputs> {
    if !(r0 > 0.0 && h0 > 0.0 && c1 > 0.0 && g > 0.0) {
        return Err(Error::Config("R0, h0, C1 and g must be positive".into()));
    }
    let unit = 2.0 * c1 * h0;
    Ok(DimensionalInputs {
        r0,
        h0,
        c1,
        rho: d * unit / (g * r0 * r0),
        g,
        p_star: p0 + c * unit / r0,
        p0,
    })
}
