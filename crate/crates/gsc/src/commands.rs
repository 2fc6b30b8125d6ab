//! Command implementations behind the `gsc` binary: optimize, sample,
//! sweep, and verify. Each command takes a validated [`RunConfig`], writes
//! its artifacts under an output directory, and returns a process exit
//! code together with a structured report.
//!
//! Exit codes: 0 success, 1 verification failure, 2 numerical failure
//! (non-finite trajectories), 3 configuration error (raised before the
//! command runs).

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::analysis::{classify_samples, sampling_verdict, success_probability, SamplingVerdict, SuccessEstimate};
use crate::config::{grid_cap, RunConfig, SweepAxis, SweepMode, SweepSpec};
use crate::dynamics::{run_batch, Schedule, TrajectoryRun};
use crate::error::{GscError, Result};
use crate::harmony::{self, grammar_harmony, total_harmony};
use crate::oracle::{brute_force_optimum, refine_local_maximum, predicted_value};
use crate::representation::{embed, enumerate_grid, quantize, CoefficientState, GridPoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Per-outcome tally in an optimization report.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeCount {
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimumSummary {
    pub label: String,
    pub value: f64,
    pub gap: f64,
    pub tie_at_optimum: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub n_runs: usize,
    pub n_failed: usize,
    pub steps_per_run: u64,
    pub outcomes: Vec<OutcomeCount>,
    pub modal_outcome: Option<String>,
    /// Exact grid optimum, when the grid is enumerable.
    pub optimum: Option<OptimumSummary>,
    /// Fraction of runs that quantized to the exact optimum, with a 95%
    /// Wilson interval. Absent when the optimum is tied or unknown.
    pub success: Option<SuccessEstimate>,
    pub mean_final_harmony: f64,
    /// Wall-clock duration; excluded from byte-level report comparisons.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub n_runs: usize,
    pub n_failed: usize,
    pub comparison_temperature: f64,
    pub verdict: SamplingVerdict,
    pub grid_labels: Vec<String>,
    /// Wall-clock duration; excluded from byte-level report comparisons.
    pub wall_time_s: f64,
}

/// Run `n_runs` trajectories, quantize the finals, and compare against the
/// exact grid optimum. Writes optimize_report.json and outcomes.csv.
pub fn cmd_optimize(cfg: &RunConfig, out_dir: &Path) -> Result<(i32, OptimizeReport)> {
    let started = Instant::now();
    let (runs, n_failed) = run_all(cfg)?;
    let steps_per_run = cfg.sde.steps();

    let grid = enumerate_grid(&cfg.spec, grid_cap()).ok();
    let finals: Vec<GridPoint> = runs.iter().map(|r| quantize(&r.final_state)).collect();

    // Tally outcomes in grid order when enumerable, discovery order otherwise.
    let mut outcomes: Vec<OutcomeCount> = Vec::new();
    for g in &finals {
        let label = cfg.spec.label(g);
        match outcomes.iter_mut().find(|o| o.label == label) {
            Some(o) => o.count += 1,
            None => outcomes.push(OutcomeCount { label, count: 1 }),
        }
    }
    outcomes.sort_by(|a, b| b.count.cmp(&a.count).then(a.label.cmp(&b.label)));
    let modal_outcome = outcomes.first().map(|o| o.label.clone());

    let optimum = grid
        .as_ref()
        .and_then(|_| brute_force_optimum(&cfg.params, &cfg.spec, grid_cap()).ok());
    let success = match &optimum {
        Some(_) => {
            let opt = optimum.as_ref().unwrap();
            if opt.tie_at_optimum || finals.is_empty() {
                None
            } else {
                success_probability(&finals, &opt.grid_point).ok()
            }
        }
        None => None,
    };

    let mut mean_final_harmony = 0.0;
    for run in &runs {
        mean_final_harmony += grammar_harmony(&cfg.params, &run.final_state)?;
    }
    if !runs.is_empty() {
        mean_final_harmony /= runs.len() as f64;
    }

    let report = OptimizeReport {
        n_runs: cfg.command.n_runs,
        n_failed,
        steps_per_run,
        outcomes,
        modal_outcome,
        optimum: optimum.map(|o| OptimumSummary {
            label: cfg.spec.label(&o.grid_point),
            value: o.value,
            gap: o.gap,
            tie_at_optimum: o.tie_at_optimum,
        }),
        success,
        mean_final_harmony,
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    write_json(out_dir, "optimize_report.json", &report)?;
    write_outcomes_csv(out_dir, cfg, &runs, &finals)?;
    maybe_dump_trajectories(cfg, out_dir, &runs)?;

    let code = if n_failed > 0 { EXIT_NUMERICAL } else { EXIT_OK };
    Ok((code, report))
}

/// Run trajectories and compare the empirical distribution of quantized
/// finals against the grid Boltzmann distribution at the comparison
/// temperature. Writes sample_report.json.
pub fn cmd_sample(cfg: &RunConfig, out_dir: &Path) -> Result<(i32, SampleReport)> {
    let started = Instant::now();
    let temp = match cfg.command.t_sample {
        Some(t) => t,
        None => cfg.schedule.temp_at(cfg.sde.t_end),
    };
    if !(temp > 0.0) || !temp.is_finite() {
        return Err(GscError::InvalidSpec(format!(
            "sample needs a positive comparison temperature, got {temp} \
             (set command.T_sample or a schedule with positive final T)"
        )));
    }

    let (runs, n_failed) = run_all(cfg)?;
    let finals: Vec<CoefficientState> = runs.iter().map(|r| r.final_state.clone()).collect();
    let verdict = sampling_verdict(
        &finals,
        &cfg.params,
        temp,
        &cfg.spec,
        cfg.command.eta,
        grid_cap(),
    )?;
    let grid = enumerate_grid(&cfg.spec, grid_cap())?;
    let report = SampleReport {
        n_runs: cfg.command.n_runs,
        n_failed,
        comparison_temperature: temp,
        verdict,
        grid_labels: grid.iter().map(|g| cfg.spec.label(g)).collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    write_json(out_dir, "sample_report.json", &report)?;
    maybe_dump_trajectories(cfg, out_dir, &runs)?;

    let code = if n_failed > 0 { EXIT_NUMERICAL } else { EXIT_OK };
    Ok((code, report))
}

/// One row of sweep.csv. Columns not applicable to the sweep mode are
/// left empty rather than zero-filled.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub n_runs: usize,
    pub n_failed: usize,
    pub success_fraction: Option<f64>,
    pub wilson_low: Option<f64>,
    pub wilson_high: Option<f64>,
    pub tv: Option<f64>,
    pub outside_fraction: Option<f64>,
    /// ||x_q - x*|| * q for the refined continuous optimum; filled on q
    /// sweeps, where it should be roughly constant.
    pub refined_dist_times_q: Option<f64>,
    pub status: String,
}

/// Run the configured command once per sweep value, varying one scalar
/// (q, T, c, or dt). Writes sweep.csv; a failing point is recorded as a
/// row with status "failed" instead of aborting the sweep.
pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<(i32, Vec<SweepRow>)> {
    let sweep = cfg.command.sweep.as_ref().ok_or_else(|| {
        GscError::InvalidSpec("sweep requires a command.sweep block in the config".into())
    })?;
    let mut rows = Vec::with_capacity(sweep.values.len());
    let mut any_failed = false;
    for &value in &sweep.values {
        let row = match sweep_point(cfg, sweep, value) {
            Ok(row) => row,
            Err(e) => SweepRow {
                axis: sweep.axis.name().into(),
                value,
                n_runs: cfg.command.n_runs,
                n_failed: 0,
                success_fraction: None,
                wilson_low: None,
                wilson_high: None,
                tv: None,
                outside_fraction: None,
                refined_dist_times_q: None,
                status: format!("failed: {e}"),
            },
        };
        any_failed |= row.status != "ok";
        rows.push(row);
    }

    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let code = if any_failed { EXIT_NUMERICAL } else { EXIT_OK };
    Ok((code, rows))
}

fn sweep_point(cfg: &RunConfig, sweep: &SweepSpec, value: f64) -> Result<SweepRow> {
    let mut point = cfg.clone();
    point.command.dump_trajectories = false;
    match sweep.axis {
        SweepAxis::Q => {
            point.schedule = match &cfg.schedule {
                Schedule::Constant { temp, .. } => Schedule::constant(value, *temp)?,
                Schedule::LogCooling { c, t0, .. } => Schedule::log_cooling(value, *c, *t0)?,
                _ => {
                    return Err(GscError::InvalidSpec(
                        "q sweep requires a constant or log_cooling schedule".into(),
                    ))
                }
            };
        }
        SweepAxis::Temp => {
            point.schedule = match &cfg.schedule {
                Schedule::Constant { q, .. } => Schedule::constant(*q, value)?,
                _ => {
                    return Err(GscError::InvalidSpec(
                        "T sweep requires a constant schedule".into(),
                    ))
                }
            };
        }
        SweepAxis::CoolingC => {
            point.schedule = match &cfg.schedule {
                Schedule::LogCooling { q, t0, .. } => Schedule::log_cooling(*q, value, *t0)?,
                _ => {
                    return Err(GscError::InvalidSpec(
                        "c sweep requires a log_cooling schedule".into(),
                    ))
                }
            };
        }
        SweepAxis::Dt => {
            point.sde.dt = value;
            point.sde.validate()?;
        }
    }

    let refined_dist_times_q = if sweep.axis == SweepAxis::Q {
        refined_distance_times_q(&point, value)
    } else {
        None
    };

    match sweep.mode {
        SweepMode::Optimize => {
            let (runs, n_failed) = run_all(&point)?;
            let finals: Vec<GridPoint> = runs.iter().map(|r| quantize(&r.final_state)).collect();
            let opt = brute_force_optimum(&point.params, &point.spec, grid_cap())?;
            let success = if opt.tie_at_optimum {
                None
            } else {
                success_probability(&finals, &opt.grid_point).ok()
            };
            Ok(SweepRow {
                axis: sweep.axis.name().into(),
                value,
                n_runs: point.command.n_runs,
                n_failed,
                success_fraction: success.as_ref().map(|s| s.fraction),
                wilson_low: success.as_ref().map(|s| s.wilson_low),
                wilson_high: success.as_ref().map(|s| s.wilson_high),
                tv: None,
                outside_fraction: None,
                refined_dist_times_q,
                status: "ok".into(),
            })
        }
        SweepMode::Sample => {
            let temp = match point.command.t_sample {
                Some(t) => t,
                None => point.schedule.temp_at(point.sde.t_end),
            };
            let (runs, n_failed) = run_all(&point)?;
            let finals: Vec<CoefficientState> =
                runs.iter().map(|r| r.final_state.clone()).collect();
            let verdict = sampling_verdict(
                &finals,
                &point.params,
                temp,
                &point.spec,
                point.command.eta,
                grid_cap(),
            )?;
            Ok(SweepRow {
                axis: sweep.axis.name().into(),
                value,
                n_runs: point.command.n_runs,
                n_failed,
                success_fraction: None,
                wilson_low: None,
                wilson_high: None,
                tv: Some(verdict.tv),
                outside_fraction: Some(verdict.outside_fraction),
                refined_dist_times_q,
                status: "ok".into(),
            })
        }
    }
}

fn refined_distance_times_q(cfg: &RunConfig, q: f64) -> Option<f64> {
    let opt = brute_force_optimum(&cfg.params, &cfg.spec, grid_cap()).ok()?;
    let refined = refine_local_maximum(&cfg.params, q, &opt.grid_point, &cfg.spec).ok()?;
    let x_star = embed(&opt.grid_point, &cfg.spec);
    Some(refined.location.distance(&x_star) * q)
}

/// One verification check: a name, a verdict, and a human-readable detail
/// line (measured error, tolerance, or skip reason).
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Replaceable internals for verification. Tests substitute a corrupted
/// gradient here to confirm the checks actually detect wrong derivatives.
pub struct VerifyHooks {
    pub grad_q: fn(&CoefficientState) -> DMatrix<f64>,
}

impl Default for VerifyHooks {
    fn default() -> Self {
        VerifyHooks {
            grad_q: harmony::grad_q,
        }
    }
}

/// Cross-check analytic derivatives against finite differences and the
/// continuous optimum against the grid optimum on the configured instance.
pub fn cmd_verify(cfg: &RunConfig, out_dir: &Path) -> Result<(i32, VerifyReport)> {
    let report = verify_with_hooks(cfg, &VerifyHooks::default())?;
    write_json(out_dir, "verify_report.json", &report)?;
    let code = if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED };
    Ok((code, report))
}

pub fn verify_with_hooks(cfg: &RunConfig, hooks: &VerifyHooks) -> Result<VerifyReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(cfg.sde.seed);
    let (f, r) = (cfg.spec.num_fillers(), cfg.spec.num_roles());
    let random_state = |rng: &mut rand_chacha::ChaCha12Rng| {
        CoefficientState::new(DMatrix::from_fn(f, r, |_, _| rng.gen_range(-1.5..1.5)))
    };

    let mut checks = Vec::new();

    // Gradient of H vs central finite differences of H.
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let y = random_state(&mut rng);
        let g = harmony::grad_h(&cfg.params, &y)?;
        for i in 0..cfg.spec.dim() {
            let fd = central_diff(&y, i, |s| grammar_harmony(&cfg.params, s).unwrap());
            worst = worst.max((g[i] - fd).abs());
        }
    }
    push_tol(&mut checks, "grad_h_matches_finite_difference", worst, 1e-5);

    // Gradient of Q (via hooks) vs finite differences of Q.
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let y = random_state(&mut rng);
        let g = (hooks.grad_q)(&y);
        for i in 0..cfg.spec.dim() {
            let fd = central_diff(&y, i, harmony::quantization_harmony);
            worst = worst.max((g.as_slice()[i] - fd).abs());
        }
    }
    push_tol(&mut checks, "grad_q_matches_finite_difference", worst, 1e-5);

    // Hessian of Q vs finite differences of the (hooked) gradient.
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let y = random_state(&mut rng);
        let h = harmony::hess_q(&y);
        for j in 0..cfg.spec.dim() {
            let col = central_diff_vec(&y, j, |s| (hooks.grad_q)(s));
            for i in 0..cfg.spec.dim() {
                worst = worst.max((h[(i, j)] - col.as_slice()[i]).abs());
            }
        }
    }
    push_tol(&mut checks, "hess_q_matches_finite_difference", worst, 1e-4);

    // On every grid point Q and its gradient vanish exactly; off the grid
    // Q is strictly negative.
    match enumerate_grid(&cfg.spec, grid_cap()) {
        Ok(grid) => {
            let mut worst_q = 0.0f64;
            let mut worst_g = 0.0f64;
            for g in &grid {
                let x = embed(g, &cfg.spec);
                worst_q = worst_q.max(harmony::quantization_harmony(&x).abs());
                worst_g = worst_g.max((hooks.grad_q)(&x).abs().max());
            }
            push_tol(&mut checks, "q_vanishes_on_grid", worst_q, 0.0);
            push_tol(&mut checks, "grad_q_vanishes_on_grid", worst_g, 0.0);
        }
        Err(e) => {
            checks.push(CheckResult {
                name: "q_vanishes_on_grid".into(),
                passed: true,
                detail: format!("skipped: {e}"),
            });
        }
    }
    let mut ok = true;
    for _ in 0..100 {
        let y = random_state(&mut rng);
        let (a, bres) = crate::representation::grid_residual(&y);
        if a.abs().max() > 1e-6 || bres.abs().max() > 1e-6 {
            ok &= harmony::quantization_harmony(&y) < 0.0;
        }
    }
    checks.push(CheckResult {
        name: "q_negative_off_grid".into(),
        passed: ok,
        detail: if ok { "100 random off-grid states".into() } else { "found Q >= 0 off grid".into() },
    });

    // The continuous optimum approaches the grid optimum at rate 1/q and
    // the two-term value prediction improves at rate 1/q^2.
    verify_refinement(cfg, &mut checks);

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}

fn verify_refinement(cfg: &RunConfig, checks: &mut Vec<CheckResult>) {
    let opt = match brute_force_optimum(&cfg.params, &cfg.spec, grid_cap()) {
        Ok(o) if !o.tie_at_optimum => o,
        Ok(_) => {
            checks.push(CheckResult {
                name: "refinement_rate".into(),
                passed: true,
                detail: "skipped: grid optimum is tied".into(),
            });
            return;
        }
        Err(e) => {
            checks.push(CheckResult {
                name: "refinement_rate".into(),
                passed: true,
                detail: format!("skipped: {e}"),
            });
            return;
        }
    };
    let x_star = embed(&opt.grid_point, &cfg.spec);
    let grad_norm = match harmony::grad_h(&cfg.params, &x_star) {
        Ok(g) => g.norm(),
        Err(_) => return,
    };
    if grad_norm < 1e-12 {
        checks.push(CheckResult {
            name: "refinement_rate".into(),
            passed: true,
            detail: "skipped: gradient vanishes at the optimum (x_q = x* exactly)".into(),
        });
        return;
    }

    let qs = [40.0, 80.0, 160.0, 320.0];
    let mut dists = Vec::new();
    let mut value_errs = Vec::new();
    for &q in &qs {
        match refine_local_maximum(&cfg.params, q, &opt.grid_point, &cfg.spec) {
            Ok(refined) => {
                dists.push(refined.location.distance(&x_star) * q);
                let pred = predicted_value(&cfg.params, q, &opt.grid_point, &cfg.spec)
                    .unwrap_or(f64::NAN);
                value_errs.push((refined.value - pred).abs());
            }
            Err(e) => {
                checks.push(CheckResult {
                    name: "refinement_rate".into(),
                    passed: false,
                    detail: format!("refinement failed at q = {q}: {e}"),
                });
                return;
            }
        }
    }
    let dist_ok = dists
        .windows(2)
        .all(|w| w[1] > 0.6 * w[0] && w[1] < 1.4 * w[0]);
    checks.push(CheckResult {
        name: "refined_distance_scales_as_inverse_q".into(),
        passed: dist_ok,
        detail: format!("||x_q - x*|| * q over q = {qs:?}: {dists:?}"),
    });
    let value_ok = value_errs.windows(2).all(|w| {
        let ratio = w[0] / w[1].max(1e-300);
        ratio > 2.0 && ratio < 8.0
    });
    checks.push(CheckResult {
        name: "value_prediction_error_scales_as_inverse_q_squared".into(),
        passed: value_ok,
        detail: format!("|value - prediction| over q = {qs:?}: {value_errs:?}"),
    });
}

fn push_tol(checks: &mut Vec<CheckResult>, name: &str, worst: f64, tol: f64) {
    checks.push(CheckResult {
        name: name.into(),
        passed: worst <= tol,
        detail: format!("worst error {worst:.3e}, tolerance {tol:.1e}"),
    });
}

fn central_diff(y: &CoefficientState, i: usize, f: impl Fn(&CoefficientState) -> f64) -> f64 {
    let h = 1e-5;
    let mut plus = y.clone();
    let mut minus = y.clone();
    plus.coeffs_mut().as_mut_slice()[i] += h;
    minus.coeffs_mut().as_mut_slice()[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

fn central_diff_vec(
    y: &CoefficientState,
    j: usize,
    f: impl Fn(&CoefficientState) -> DMatrix<f64>,
) -> DMatrix<f64> {
    let h = 1e-5;
    let mut plus = y.clone();
    let mut minus = y.clone();
    plus.coeffs_mut().as_mut_slice()[j] += h;
    minus.coeffs_mut().as_mut_slice()[j] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Run the configured batch, separating successful runs from numerical
/// failures. A failure of any kind other than [`GscError::NonFiniteState`]
/// aborts the whole command.
fn run_all(cfg: &RunConfig) -> Result<(Vec<TrajectoryRun>, usize)> {
    let results = run_batch(
        &cfg.sde,
        &cfg.schedule,
        &cfg.params,
        &cfg.spec,
        cfg.command.record_stride,
        cfg.command.n_runs,
    );
    let mut runs = Vec::with_capacity(results.len());
    let mut n_failed = 0;
    for res in results {
        match res {
            Ok(run) => runs.push(run),
            Err(GscError::NonFiniteState { .. }) => n_failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((runs, n_failed))
}

fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| GscError::ParseError(e.to_string()))?;
    text.push('\n');
    std::fs::write(out_dir.join(name), text)?;
    Ok(())
}

fn write_outcomes_csv(
    out_dir: &Path,
    cfg: &RunConfig,
    runs: &[TrajectoryRun],
    finals: &[GridPoint],
) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        run: usize,
        outcome: &'a str,
        grammar_harmony: f64,
        total_harmony: f64,
        steps: u64,
    }
    let mut w = csv::Writer::from_path(out_dir.join("outcomes.csv"))?;
    for (i, (run, g)) in runs.iter().zip(finals).enumerate() {
        let label = cfg.spec.label(g);
        w.serialize(Row {
            run: i,
            outcome: &label,
            grammar_harmony: grammar_harmony(&cfg.params, &run.final_state)?,
            total_harmony: total_harmony(
                &cfg.params,
                run.diagnostics.final_q,
                &run.final_state,
            )?,
            steps: run.diagnostics.steps,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Dump recorded trajectories as CSV: a `t` column followed by one column
/// per coefficient, named `y_<filler>_<role>` in flat (role-major) order.
fn maybe_dump_trajectories(cfg: &RunConfig, out_dir: &Path, runs: &[TrajectoryRun]) -> Result<()> {
    if !cfg.command.dump_trajectories || cfg.command.record_stride == 0 {
        return Ok(());
    }
    std::fs::create_dir_all(out_dir)?;
    for (i, run) in runs.iter().enumerate() {
        let path = out_dir.join(format!("trajectory_{i:04}.csv"));
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(file, "t")?;
        for role in cfg.spec.roles() {
            for filler in cfg.spec.fillers() {
                write!(file, ",y_{filler}_{role}")?;
            }
        }
        writeln!(file)?;
        for (t, state) in run.trajectory.times.iter().zip(&run.trajectory.states) {
            write!(file, "{t}")?;
            for v in state.flat() {
                write!(file, ",{v}")?;
            }
            writeln!(file)?;
        }
    }
    Ok(())
}

/// Helper for callers that need the same eta/cap plumbing as the commands.
pub fn classify_final_states(
    cfg: &RunConfig,
    states: &[CoefficientState],
) -> Result<crate::analysis::EmpiricalGridDistribution> {
    let grid = enumerate_grid(&cfg.spec, grid_cap())?;
    classify_samples(states, &cfg.spec, &grid, cfg.command.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use tempfile::tempdir;

    fn two_filler_config(extra: &str) -> RunConfig {
        let text = format!(
            r#"{{
                "fillers": ["f1", "f2"],
                "roles": ["r"],
                "W": [[0, 0], [0, 0]],
                "b": [1.0, 0.0],
                "schedule": {{"kind": "constant", "q": 8.0, "T": 0.05}},
                "sde": {{"dt": 0.001, "t_end": 3.0, "seed": 7}}
                {extra}
            }}"#
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn optimize_finds_the_biased_filler() {
        let cfg = two_filler_config(r#", "command": {"n_runs": 20}"#);
        let dir = tempdir().unwrap();
        let (code, report) = cmd_optimize(&cfg, dir.path()).unwrap();
        assert_eq!(code, EXIT_OK);
        assert_eq!(report.n_failed, 0);
        assert_eq!(report.modal_outcome.as_deref(), Some("f1·r"));
        let success = report.success.unwrap();
        assert!(success.fraction >= 0.9, "fraction = {}", success.fraction);
        assert!(dir.path().join("optimize_report.json").exists());
        assert!(dir.path().join("outcomes.csv").exists());
    }

    #[test]
    fn optimize_report_is_deterministic() {
        let cfg = two_filler_config(r#", "command": {"n_runs": 10}"#);
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        cmd_optimize(&cfg, d1.path()).unwrap();
        cmd_optimize(&cfg, d2.path()).unwrap();
        let strip = |p: &Path| {
            let text = std::fs::read_to_string(p.join("optimize_report.json")).unwrap();
            text.lines()
                .filter(|l| !l.contains("wall_time_s"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(d1.path()), strip(d2.path()));
        assert_eq!(
            std::fs::read(d1.path().join("outcomes.csv")).unwrap(),
            std::fs::read(d2.path().join("outcomes.csv")).unwrap()
        );
    }

    #[test]
    fn verify_passes_on_clean_instance() {
        let cfg = two_filler_config("");
        let dir = tempdir().unwrap();
        let (code, report) = cmd_verify(&cfg, dir.path()).unwrap();
        assert_eq!(code, EXIT_OK, "failing checks: {:?}",
            report.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        assert!(report.passed);
    }

    #[test]
    fn verify_catches_corrupted_gradient() {
        let cfg = two_filler_config("");
        fn corrupted(y: &CoefficientState) -> DMatrix<f64> {
            harmony::grad_q(y) * 1.01
        }
        let report = verify_with_hooks(&cfg, &VerifyHooks { grad_q: corrupted }).unwrap();
        assert!(!report.passed);
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "grad_q_matches_finite_difference" && !c.passed));
    }

    #[test]
    fn sweep_over_q_keeps_scaled_distance_flat() {
        let cfg = two_filler_config(
            r#", "command": {"n_runs": 5, "sweep": {"axis": "q", "values": [40, 80, 160]}}"#,
        );
        let dir = tempdir().unwrap();
        let (code, rows) = cmd_sweep(&cfg, dir.path()).unwrap();
        assert_eq!(code, EXIT_OK);
        assert_eq!(rows.len(), 3);
        let d: Vec<f64> = rows.iter().map(|r| r.refined_dist_times_q.unwrap()).collect();
        for w in d.windows(2) {
            assert!(w[1] > 0.7 * w[0] && w[1] < 1.3 * w[0], "{d:?}");
        }
        assert!(dir.path().join("sweep.csv").exists());
    }

    #[test]
    fn sweep_records_bad_point_as_failed_row() {
        let cfg = two_filler_config(
            r#", "command": {"n_runs": 5, "sweep": {"axis": "dt", "values": [0.001, -1.0]}}"#,
        );
        let dir = tempdir().unwrap();
        let (code, rows) = cmd_sweep(&cfg, dir.path()).unwrap();
        assert_eq!(code, EXIT_NUMERICAL);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[1].status.starts_with("failed:"));
    }

    #[test]
    fn trajectory_dump_has_labeled_columns() {
        let cfg = two_filler_config(
            r#", "command": {"n_runs": 1, "record_stride": 100, "dump_trajectories": true}"#,
        );
        let dir = tempdir().unwrap();
        cmd_optimize(&cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("trajectory_0000.csv")).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "t,y_f1_r,y_f2_r");
        assert!(text.lines().count() > 10);
    }
}
