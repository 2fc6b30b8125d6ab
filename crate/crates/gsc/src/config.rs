//! Declarative run configuration: a single JSON document naming the
//! problem (fillers, roles, W, b), the (q, T) schedule, the SDE settings,
//! and command parameters. Validation collects every violation with a
//! JSON-pointer path rather than stopping at the first.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::analysis::DEFAULT_ETA;
use crate::dynamics::{
    default_dt, FiniteTimeParams, InitialState, Schedule, SchedulePoint, SdeConfig, DEFAULT_T0,
};
use crate::error::{GscError, Result};
use crate::harmony::HarmonyParams;
use crate::representation::{CoefficientState, FillerRoleSpec, DEFAULT_GRID_CAP};

/// Grid cap, overridable via the GSC_MAX_GRID environment variable.
pub fn grid_cap() -> u64 {
    std::env::var("GSC_MAX_GRID")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_GRID_CAP)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    fillers: Option<Vec<String>>,
    roles: Option<Vec<String>>,
    #[serde(rename = "W")]
    w: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    filler_basis: Option<Vec<Vec<f64>>>,
    role_basis: Option<Vec<Vec<f64>>>,
    schedule: Option<RawSchedule>,
    sde: Option<RawSde>,
    #[serde(default)]
    command: RawCommand,
    #[allow(dead_code)]
    notes: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: Option<String>,
    q: Option<f64>,
    #[serde(rename = "T")]
    temp: Option<f64>,
    c: Option<f64>,
    t0: Option<f64>,
    gap: Option<f64>,
    eta: Option<f64>,
    eps: Option<f64>,
    k_q: Option<f64>,
    #[serde(rename = "k_T")]
    k_temp: Option<f64>,
    #[serde(rename = "k_t")]
    k_time: Option<f64>,
    /// Rows of (t, q, T).
    points: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSde {
    dt: Option<f64>,
    t_end: Option<f64>,
    seed: Option<u64>,
    init: Option<RawInit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    kind: Option<String>,
    values: Option<Vec<f64>>,
    sigma: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    n_runs: Option<usize>,
    record_stride: Option<u64>,
    eta: Option<f64>,
    /// Temperature for the Boltzmann comparison in `sample`; defaults to
    /// the schedule temperature at t_end.
    #[serde(rename = "T_sample")]
    t_sample: Option<f64>,
    dump_trajectories: Option<bool>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Option<String>,
    values: Option<Vec<f64>>,
    mode: Option<String>,
}

/// Which scalar a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Q,
    Temp,
    CoolingC,
    Dt,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Q => "q",
            SweepAxis::Temp => "T",
            SweepAxis::CoolingC => "c",
            SweepAxis::Dt => "dt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Optimize,
    Sample,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub mode: SweepMode,
}

/// Command-level parameters shared by optimize/sample/sweep.
#[derive(Debug, Clone)]
pub struct CommandParams {
    pub n_runs: usize,
    pub record_stride: u64,
    pub eta: f64,
    pub t_sample: Option<f64>,
    pub dump_trajectories: bool,
    pub sweep: Option<SweepSpec>,
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: FillerRoleSpec,
    pub params: HarmonyParams,
    pub schedule: Schedule,
    pub sde: SdeConfig,
    pub command: CommandParams,
    pub warnings: Vec<String>,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| GscError::ParseError(e.to_string()))?;
    validate(raw)
}

struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, pointer: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{pointer}: {msg}"));
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let mut errs = Errors(Vec::new());
    let mut warnings = Vec::new();

    let fillers = raw.fillers.unwrap_or_else(|| {
        errs.push("/fillers", "missing");
        Vec::new()
    });
    let roles = raw.roles.unwrap_or_else(|| {
        errs.push("/roles", "missing");
        Vec::new()
    });
    let (f, r) = (fillers.len(), roles.len());
    let n = f * r;

    let spec = if f >= 1 && r >= 1 {
        let fb = raw
            .filler_basis
            .as_ref()
            .map(|rows| matrix_from_rows(rows, f, "/filler_basis", &mut errs));
        let rb = raw
            .role_basis
            .as_ref()
            .map(|rows| matrix_from_rows(rows, r, "/role_basis", &mut errs));
        match FillerRoleSpec::with_bases(fillers.clone(), roles.clone(), fb.flatten(), rb.flatten())
        {
            Ok(s) => Some(s),
            Err(e) => {
                errs.push("/fillers", e);
                None
            }
        }
    } else {
        if f == 0 {
            errs.push("/fillers", "must be non-empty");
        }
        if r == 0 {
            errs.push("/roles", "must be non-empty");
        }
        None
    };

    // Harmony parameters.
    let b = match &raw.b {
        Some(b) if b.len() == n && n > 0 => Some(DVector::from_column_slice(b)),
        Some(b) => {
            errs.push("/b", format!("length {} != F*R = {n}", b.len()));
            None
        }
        None => {
            errs.push("/b", "missing");
            None
        }
    };
    let w = match &raw.w {
        Some(rows) => matrix_from_rows(rows, n, "/W", &mut errs),
        None => {
            errs.push("/W", "missing");
            None
        }
    };
    let params = match (w, b) {
        (Some(w), Some(b)) => match HarmonyParams::new(w, b) {
            Ok(p) => {
                if p.input_asymmetry() > 1e-12 {
                    warnings.push(format!(
                        "/W: asymmetry {:.3e} symmetrized to (W + W')/2",
                        p.input_asymmetry()
                    ));
                }
                Some(p)
            }
            Err(e) => {
                errs.push("/W", e);
                None
            }
        },
        _ => None,
    };

    let schedule = match &raw.schedule {
        Some(s) => build_schedule(s, &mut errs),
        None => {
            errs.push("/schedule", "missing");
            None
        }
    };

    // SDE settings. Seed is mandatory: no wall-clock seeding.
    let sde_raw = raw.sde.as_ref();
    let seed = match sde_raw.and_then(|s| s.seed) {
        Some(seed) => seed,
        None => {
            errs.push("/sde/seed", "missing (seeds are mandatory)");
            0
        }
    };
    let dt = sde_raw.and_then(|s| s.dt).unwrap_or_else(|| {
        default_dt(schedule.as_ref().map_or(0.0, |s| s.max_q()))
    });
    let t_end = match sde_raw.and_then(|s| s.t_end) {
        Some(t) => t,
        None => match schedule.as_ref().and_then(|s| s.natural_t_end()) {
            Some(t) => t,
            None => {
                errs.push(
                    "/sde/t_end",
                    "missing and the schedule has no intrinsic duration",
                );
                dt
            }
        },
    };
    let init = match sde_raw.and_then(|s| s.init.as_ref()) {
        None => InitialState::Barycenter,
        Some(init) => build_init(init, f, r, &mut errs),
    };
    let sde = SdeConfig {
        dt,
        t_end,
        seed,
        init,
    };
    if let Err(e) = sde.validate() {
        errs.push("/sde", e);
    }

    let command = build_command(&raw.command, &mut errs);

    if !errs.0.is_empty() {
        return Err(GscError::ValidationError(errs.0));
    }
    Ok(RunConfig {
        spec: spec.expect("validated"),
        params: params.expect("validated"),
        schedule: schedule.expect("validated"),
        sde,
        command,
        warnings,
    })
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    n: usize,
    pointer: &str,
    errs: &mut Errors,
) -> Option<DMatrix<f64>> {
    if rows.len() != n {
        errs.push(pointer, format!("expected {n} rows, got {}", rows.len()));
        return None;
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            errs.push(
                &format!("{pointer}/{i}"),
                format!("expected {n} entries, got {}", row.len()),
            );
            return None;
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Some(DMatrix::from_row_slice(n, n, &flat))
}

fn build_schedule(s: &RawSchedule, errs: &mut Errors) -> Option<Schedule> {
    let kind = match &s.kind {
        Some(k) => k.as_str(),
        None => {
            errs.push("/schedule/kind", "missing");
            return None;
        }
    };
    let result = match kind {
        "constant" => {
            let q = require(s.q, "/schedule/q", errs)?;
            let temp = require(s.temp, "/schedule/T", errs)?;
            Schedule::constant(q, temp)
        }
        "log_cooling" => {
            let q = require(s.q, "/schedule/q", errs)?;
            let c = require(s.c, "/schedule/c", errs)?;
            Schedule::log_cooling(q, c, s.t0.unwrap_or(DEFAULT_T0))
        }
        "finite_time" => {
            let gap = require(s.gap, "/schedule/gap", errs)?;
            let eta = require(s.eta, "/schedule/eta", errs)?;
            let eps = require(s.eps, "/schedule/eps", errs)?;
            Schedule::finite_time(&FiniteTimeParams {
                gap,
                eta,
                eps,
                k_q: s.k_q.unwrap_or(1.0),
                k_temp: s.k_temp.unwrap_or(1.0),
                k_time: s.k_time.unwrap_or(1.0),
                t0: s.t0.unwrap_or(DEFAULT_T0),
                ..Default::default()
            })
        }
        "table" => {
            let points = match &s.points {
                Some(p) => p
                    .iter()
                    .map(|&[t, q, temp]| SchedulePoint { t, q, temp })
                    .collect(),
                None => {
                    errs.push("/schedule/points", "missing");
                    return None;
                }
            };
            Schedule::table(points)
        }
        other => {
            errs.push(
                "/schedule/kind",
                format!("unknown kind {other:?} (expected constant, log_cooling, finite_time, or table)"),
            );
            return None;
        }
    };
    match result {
        Ok(sched) => Some(sched),
        Err(e) => {
            errs.push("/schedule", e);
            None
        }
    }
}

fn require(v: Option<f64>, pointer: &str, errs: &mut Errors) -> Option<f64> {
    if v.is_none() {
        errs.push(pointer, "missing");
    }
    v
}

fn build_init(init: &RawInit, f: usize, r: usize, errs: &mut Errors) -> InitialState {
    let n = f * r;
    match init.kind.as_deref() {
        None | Some("barycenter") => InitialState::Barycenter,
        Some("gaussian") => InitialState::GaussianAroundBarycenter {
            sigma: init.sigma.unwrap_or(0.1),
        },
        Some("given") => match &init.values {
            Some(values) if values.len() == n && n > 0 => {
                InitialState::Given(CoefficientState::new(DMatrix::from_column_slice(
                    f, r, values,
                )))
            }
            Some(values) => {
                errs.push(
                    "/sde/init/values",
                    format!("length {} != F*R = {n}", values.len()),
                );
                InitialState::Barycenter
            }
            None => {
                errs.push("/sde/init/values", "missing for kind \"given\"");
                InitialState::Barycenter
            }
        },
        Some(other) => {
            errs.push("/sde/init/kind", format!("unknown kind {other:?}"));
            InitialState::Barycenter
        }
    }
}

fn build_command(cmd: &RawCommand, errs: &mut Errors) -> CommandParams {
    let eta = cmd.eta.unwrap_or(DEFAULT_ETA);
    if !(eta > 0.0) || eta >= crate::analysis::MAX_ETA {
        errs.push(
            "/command/eta",
            format!("must be in (0, {:.4})", crate::analysis::MAX_ETA),
        );
    }
    let sweep = cmd.sweep.as_ref().and_then(|s| {
        let axis = match s.axis.as_deref() {
            Some("q") => Some(SweepAxis::Q),
            Some("T") => Some(SweepAxis::Temp),
            Some("c") => Some(SweepAxis::CoolingC),
            Some("dt") => Some(SweepAxis::Dt),
            Some(other) => {
                errs.push("/command/sweep/axis", format!("unknown axis {other:?}"));
                None
            }
            None => {
                errs.push("/command/sweep/axis", "missing");
                None
            }
        }?;
        let values = match &s.values {
            Some(v) if !v.is_empty() => v.clone(),
            _ => {
                errs.push("/command/sweep/values", "missing or empty");
                return None;
            }
        };
        let mode = match s.mode.as_deref() {
            None | Some("optimize") => SweepMode::Optimize,
            Some("sample") => SweepMode::Sample,
            Some(other) => {
                errs.push("/command/sweep/mode", format!("unknown mode {other:?}"));
                return None;
            }
        };
        Some(SweepSpec { axis, values, mode })
    });
    CommandParams {
        n_runs: cmd.n_runs.unwrap_or(100),
        record_stride: cmd.record_stride.unwrap_or(0),
        eta,
        t_sample: cmd.t_sample,
        dump_trajectories: cmd.dump_trajectories.unwrap_or(false),
        sweep,
    }
}
