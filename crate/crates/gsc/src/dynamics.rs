//! The noisy Harmony-ascent diffusion and its (q, T) schedules.
//!
//! The integrator is plain Euler-Maruyama on
//! `dy = grad(H + qQ) dt + sqrt(2T) dB`, with q(t) and T(t) evaluated at
//! the start of each step. Randomness is fully determined by a 64-bit seed;
//! batch trajectory i uses stream `seed ^ i`.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{GscError, Result};
use crate::harmony::HarmonyParams;
use crate::representation::{CoefficientState, FillerRoleSpec};

/// Base of the natural logarithm; default time offset for log-cooling.
pub const DEFAULT_T0: f64 = std::f64::consts::E;

/// Time-indexed (q, T) pair.
#[derive(Debug, Clone)]
pub enum Schedule {
    /// Fixed q and T.
    Constant { q: f64, temp: f64 },
    /// Fixed q, T(t) = c / ln(t + t0).
    LogCooling { q: f64, c: f64, t0: f64 },
    /// Fixed q, T(t) = q / ln(t + t0) truncated below at `temp_end`;
    /// carries its own derived duration `t_end`.
    FiniteTime {
        q: f64,
        temp_end: f64,
        t0: f64,
        t_end: f64,
    },
    /// Sorted breakpoints with linear interpolation between them.
    Table { points: Vec<SchedulePoint> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub t: f64,
    pub q: f64,
    pub temp: f64,
}

/// Parameters for the finite-time optimization schedule. The k_* constants
/// are user-set proportionality factors on the q, T_end, and t_end scalings
/// q = k_q * max(1/gap, 1/eta), T_end = k_temp * gap / ln(1/eps),
/// t_end = k_time * exp(q / T_end).
#[derive(Debug, Clone, Copy)]
pub struct FiniteTimeParams {
    pub gap: f64,
    pub eta: f64,
    pub eps: f64,
    pub k_q: f64,
    pub k_temp: f64,
    pub k_time: f64,
    /// Log-cooling time offset; T(0) = q / ln(t0).
    pub t0: f64,
    /// Step size used only for the step-budget guard.
    pub dt_hint: f64,
    /// Maximum allowed t_end / dt_hint.
    pub max_steps: f64,
}

impl Default for FiniteTimeParams {
    fn default() -> Self {
        Self {
            gap: 1.0,
            eta: 0.25,
            eps: 0.1,
            k_q: 1.0,
            k_temp: 1.0,
            k_time: 1.0,
            t0: DEFAULT_T0,
            dt_hint: 1e-3,
            max_steps: 1e9,
        }
    }
}

impl Schedule {
    pub fn constant(q: f64, temp: f64) -> Result<Self> {
        if q < 0.0 || !q.is_finite() {
            return Err(GscError::BadScheduleParam(format!("q = {q}")));
        }
        if temp < 0.0 || !temp.is_finite() {
            return Err(GscError::BadScheduleParam(format!("T = {temp}")));
        }
        Ok(Schedule::Constant { q, temp })
    }

    /// T(t) = c / ln(t + t0) at fixed q; t0 >= e keeps T(0) <= c and finite.
    pub fn log_cooling(q: f64, c: f64, t0: f64) -> Result<Self> {
        if q < 0.0 || !q.is_finite() {
            return Err(GscError::BadScheduleParam(format!("q = {q}")));
        }
        if c <= 0.0 || !c.is_finite() {
            return Err(GscError::BadScheduleParam(format!("c = {c}")));
        }
        if t0 < DEFAULT_T0 || !t0.is_finite() {
            return Err(GscError::BadScheduleParam(format!("t0 = {t0} < e")));
        }
        Ok(Schedule::LogCooling { q, c, t0 })
    }

    /// Builds the finite-time schedule from its scaling parameters.
    pub fn finite_time(p: &FiniteTimeParams) -> Result<Self> {
        for (name, v) in [
            ("gap", p.gap),
            ("eta", p.eta),
            ("k_q", p.k_q),
            ("k_temp", p.k_temp),
            ("k_time", p.k_time),
            ("dt_hint", p.dt_hint),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(GscError::BadScheduleParam(format!("{name} = {v}")));
            }
        }
        if p.eps <= 0.0 || p.eps >= 1.0 {
            return Err(GscError::BadScheduleParam(format!("eps = {}", p.eps)));
        }
        if p.t0 < DEFAULT_T0 || !p.t0.is_finite() {
            return Err(GscError::BadScheduleParam(format!("t0 = {} < e", p.t0)));
        }
        let q = p.k_q * (1.0 / p.gap).max(1.0 / p.eta);
        let temp_end = p.k_temp * p.gap / (1.0 / p.eps).ln();
        let t_end = p.k_time * (q / temp_end).exp();
        let steps = t_end / p.dt_hint;
        if !t_end.is_finite() || steps > p.max_steps {
            return Err(GscError::ScheduleOverflow {
                t_end,
                dt: p.dt_hint,
                steps,
                wall: p.max_steps,
            });
        }
        Ok(Schedule::FiniteTime {
            q,
            temp_end,
            t0: p.t0,
            t_end,
        })
    }

    pub fn table(points: Vec<SchedulePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(GscError::BadScheduleParam("empty table".into()));
        }
        for w in points.windows(2) {
            if w[1].t <= w[0].t {
                return Err(GscError::BadScheduleParam(format!(
                    "table breakpoints not strictly increasing at t = {}",
                    w[1].t
                )));
            }
        }
        for pt in &points {
            if pt.q < 0.0 || !pt.q.is_finite() || pt.temp < 0.0 || !pt.temp.is_finite() {
                return Err(GscError::BadScheduleParam(format!(
                    "bad table entry at t = {}: q = {}, T = {}",
                    pt.t, pt.q, pt.temp
                )));
            }
        }
        Ok(Schedule::Table { points })
    }

    pub fn q_at(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant { q, .. }
            | Schedule::LogCooling { q, .. }
            | Schedule::FiniteTime { q, .. } => *q,
            Schedule::Table { points } => interpolate(points, t, |p| p.q),
        }
    }

    pub fn temp_at(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant { temp, .. } => *temp,
            Schedule::LogCooling { c, t0, .. } => c / (t + t0).ln(),
            Schedule::FiniteTime {
                q, temp_end, t0, ..
            } => (q / (t + t0).ln()).max(*temp_end),
            Schedule::Table { points } => interpolate(points, t, |p| p.temp),
        }
    }

    /// Largest q the schedule can reach; used for the default step size.
    pub fn max_q(&self) -> f64 {
        match self {
            Schedule::Constant { q, .. }
            | Schedule::LogCooling { q, .. }
            | Schedule::FiniteTime { q, .. } => *q,
            Schedule::Table { points } => points.iter().map(|p| p.q).fold(0.0, f64::max),
        }
    }

    /// Intrinsic duration, if the schedule has one (finite-time: t_end;
    /// table: last breakpoint).
    pub fn natural_t_end(&self) -> Option<f64> {
        match self {
            Schedule::FiniteTime { t_end, .. } => Some(*t_end),
            Schedule::Table { points } => points.last().map(|p| p.t),
            _ => None,
        }
    }
}

fn interpolate(points: &[SchedulePoint], t: f64, field: impl Fn(&SchedulePoint) -> f64) -> f64 {
    if t <= points[0].t {
        return field(&points[0]);
    }
    let last = points.last().unwrap();
    if t >= last.t {
        return field(last);
    }
    let idx = points.partition_point(|p| p.t <= t);
    let (lo, hi) = (&points[idx - 1], &points[idx]);
    let frac = (t - lo.t) / (hi.t - lo.t);
    field(lo) + frac * (field(hi) - field(lo))
}

/// Default step size: drift stiffness grows linearly in q.
pub fn default_dt(max_q: f64) -> f64 {
    (1e-3f64).min(0.1 / (1.0 + max_q))
}

/// Initial state for a trajectory.
#[derive(Debug, Clone)]
pub enum InitialState {
    /// All coefficients 1/F: maximally uncommitted.
    Barycenter,
    Given(CoefficientState),
    /// Gaussian perturbation of the barycenter with the given stddev.
    GaussianAroundBarycenter { sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub init: InitialState,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GscError::BadScheduleParam(format!("dt = {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(GscError::BadScheduleParam(format!(
                "t_end = {} < dt = {}",
                self.t_end, self.dt
            )));
        }
        let steps = self.t_end / self.dt;
        if steps >= u64::MAX as f64 {
            return Err(GscError::ScheduleOverflow {
                t_end: self.t_end,
                dt: self.dt,
                steps,
                wall: u64::MAX as f64,
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round().max(1.0) as u64
    }
}

/// Recorded time points of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CoefficientState>,
    pub record_stride: u64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunDiagnostics {
    pub steps: u64,
    pub final_q: f64,
    pub final_temp: f64,
}

#[derive(Debug)]
pub struct TrajectoryRun {
    pub final_state: CoefficientState,
    pub trajectory: Trajectory,
    pub diagnostics: RunDiagnostics,
}

/// One explicit Euler-Maruyama step:
/// y' = y + grad(H + qQ)(y) dt + sqrt(2 T dt) * noise.
pub fn euler_maruyama_step(
    y: &CoefficientState,
    p: &HarmonyParams,
    q: f64,
    temp: f64,
    dt: f64,
    noise: &[f64],
) -> Result<CoefficientState> {
    if dt <= 0.0 {
        return Err(GscError::BadScheduleParam(format!("dt = {dt}")));
    }
    if temp < 0.0 {
        return Err(GscError::BadScheduleParam(format!("T = {temp}")));
    }
    let n = y.flat().len();
    assert_eq!(noise.len(), n, "noise vector length");
    let mut drift = DVector::zeros(n);
    drift_into(p, q, y.coeffs(), &mut drift)?;
    let sigma = (2.0 * temp * dt).sqrt();
    let mut next = y.clone();
    {
        let m = next.coeffs_mut();
        for i in 0..n {
            m[i] += drift[i] * dt + sigma * noise[i];
        }
    }
    if !next.is_finite() {
        return Err(GscError::NonFiniteState { t: dt, step: 1 });
    }
    Ok(next)
}

/// drift = W y + b + q * gradQ(y), written into `out`.
fn drift_into(p: &HarmonyParams, q: f64, coeffs: &DMatrix<f64>, out: &mut DVector<f64>) -> Result<()> {
    let n = coeffs.len();
    if p.dim() != n {
        return Err(GscError::DimensionMismatch {
            expected: p.dim(),
            got: n,
            context: "state dimension vs Harmony parameters".into(),
        });
    }
    out.copy_from(p.b());
    let flat = DVectorView::from_slice(coeffs.as_slice(), n);
    out.gemv(1.0, p.w(), &flat, 1.0);
    let f = coeffs.nrows();
    for (rho, col) in coeffs.column_iter().enumerate() {
        let norm_term: f64 = col.iter().map(|v| v * v).sum::<f64>() - 1.0;
        for (phi, &v) in col.iter().enumerate() {
            out[rho * f + phi] +=
                q * (-2.0 * v * norm_term - v * (1.0 - v) * (1.0 - 2.0 * v));
        }
    }
    Ok(())
}

fn initial_state(
    init: &InitialState,
    spec: &FillerRoleSpec,
    rng: &mut ChaCha12Rng,
) -> Result<CoefficientState> {
    match init {
        InitialState::Barycenter => Ok(CoefficientState::barycenter(spec)),
        InitialState::Given(y0) => {
            if y0.flat().len() != spec.dim() {
                return Err(GscError::DimensionMismatch {
                    expected: spec.dim(),
                    got: y0.flat().len(),
                    context: "initial state dimension".into(),
                });
            }
            Ok(y0.clone())
        }
        InitialState::GaussianAroundBarycenter { sigma } => {
            let mut y = CoefficientState::barycenter(spec);
            let m = y.coeffs_mut();
            for i in 0..m.len() {
                let z: f64 = rng.sample(StandardNormal);
                m[i] += sigma * z;
            }
            Ok(y)
        }
    }
}

/// Integrates one trajectory. Identical (seed, cfg, sched, p) give a
/// bit-identical result. A non-finite state aborts with the failure time.
pub fn run_trajectory(
    cfg: &SdeConfig,
    sched: &Schedule,
    p: &HarmonyParams,
    spec: &FillerRoleSpec,
    record_stride: u64,
) -> Result<TrajectoryRun> {
    run_trajectory_seeded(cfg, sched, p, spec, record_stride, cfg.seed)
}

/// Trajectory `index` of a reproducible batch: stream seed ^ index.
pub fn run_trajectory_seeded(
    cfg: &SdeConfig,
    sched: &Schedule,
    p: &HarmonyParams,
    spec: &FillerRoleSpec,
    record_stride: u64,
    stream_seed: u64,
) -> Result<TrajectoryRun> {
    cfg.validate()?;
    if p.dim() != spec.dim() {
        return Err(GscError::DimensionMismatch {
            expected: spec.dim(),
            got: p.dim(),
            context: "Harmony parameters vs representation spec".into(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(stream_seed);
    let mut y = initial_state(&cfg.init, spec, &mut rng)?;
    let n = spec.dim();
    let steps = cfg.steps();
    let mut drift = DVector::zeros(n);

    let mut times = Vec::new();
    let mut states = Vec::new();
    if record_stride > 0 {
        times.push(0.0);
        states.push(y.clone());
    }

    let (mut q, mut temp) = (sched.q_at(0.0), sched.temp_at(0.0));
    for step in 0..steps {
        let t = step as f64 * cfg.dt;
        q = sched.q_at(t);
        temp = sched.temp_at(t);
        drift_into(p, q, y.coeffs(), &mut drift)?;
        let sigma = (2.0 * temp * cfg.dt).sqrt();
        let m = y.coeffs_mut();
        let mut finite = true;
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            m[i] += drift[i] * cfg.dt + sigma * z;
            finite &= m[i].is_finite();
        }
        if !finite {
            return Err(GscError::NonFiniteState {
                t: (step + 1) as f64 * cfg.dt,
                step: step + 1,
            });
        }
        if record_stride > 0 && ((step + 1) % record_stride == 0 || step + 1 == steps) {
            times.push((step + 1) as f64 * cfg.dt);
            states.push(y.clone());
        }
    }

    Ok(TrajectoryRun {
        final_state: y,
        trajectory: Trajectory {
            times,
            states,
            record_stride,
        },
        diagnostics: RunDiagnostics {
            steps,
            final_q: q,
            final_temp: temp,
        },
    })
}

/// Runs `n_runs` independent trajectories in parallel; results come back
/// ordered by trajectory index regardless of scheduling.
pub fn run_batch(
    cfg: &SdeConfig,
    sched: &Schedule,
    p: &HarmonyParams,
    spec: &FillerRoleSpec,
    record_stride: u64,
    n_runs: usize,
) -> Vec<Result<TrajectoryRun>> {
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| run_trajectory_seeded(cfg, sched, p, spec, record_stride, cfg.seed ^ i))
        .collect()
}

/// Arrhenius-style order-of-magnitude lower bound exp(k q / T) / q on the
/// time to reach equilibrium. Diagnostic only.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ArrheniusEstimate {
    pub value: f64,
    pub overflowed: bool,
}

pub fn arrhenius_time_estimate(q: f64, temp: f64, k: f64) -> Result<ArrheniusEstimate> {
    if q <= 0.0 || temp < 0.0 || k <= 0.0 {
        return Err(GscError::BadScheduleParam(format!(
            "arrhenius estimate needs q > 0, T >= 0, k > 0 (got q = {q}, T = {temp}, k = {k})"
        )));
    }
    if temp == 0.0 {
        return Ok(ArrheniusEstimate {
            value: f64::INFINITY,
            overflowed: true,
        });
    }
    let value = (k * q / temp).exp() / q;
    Ok(ArrheniusEstimate {
        value,
        overflowed: !value.is_finite(),
    })
}
