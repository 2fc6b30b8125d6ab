//! Exact reference computations: exhaustive grid optimization, Boltzmann
//! weights over the grid, and Newton refinement of the near-grid local
//! maxima of the total Harmony, with their closed-form large-q predictions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GscError, Result};
use crate::harmony::{
    grad_total, grammar_harmony, hess_q, hess_total, HarmonyParams,
};
use crate::representation::{embed, enumerate_grid, CoefficientState, FillerRoleSpec, GridPoint};

const NEWTON_GRAD_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 100;

/// Exhaustive evaluation of H over the grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub labels: Vec<String>,
    pub h_values: Vec<f64>,
    pub argmax: usize,
    /// Best minus second-best H value; infinite for a one-point grid.
    pub gap: f64,
    pub tie_at_optimum: bool,
    pub temperature: f64,
    pub boltzmann: Vec<f64>,
}

/// Result of exhaustive grid maximization.
#[derive(Debug, Clone)]
pub struct BruteForceOptimum {
    pub grid_point: GridPoint,
    pub value: f64,
    /// Best minus second-best H; 0 on a tie, infinite for a one-point grid.
    pub gap: f64,
    pub tie_at_optimum: bool,
}

/// Exact argmax of H over the grid by enumeration.
pub fn brute_force_optimum(
    p: &HarmonyParams,
    spec: &FillerRoleSpec,
    cap: u64,
) -> Result<BruteForceOptimum> {
    let grid = enumerate_grid(spec, cap)?;
    let values = grid_h_values(p, spec, &grid)?;
    let mut argmax = 0;
    for i in 1..values.len() {
        if values[i] > values[argmax] {
            argmax = i;
        }
    }
    let best = values[argmax];
    let second = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = if second.is_finite() {
        best - second
    } else {
        f64::INFINITY
    };
    Ok(BruteForceOptimum {
        grid_point: grid[argmax].clone(),
        value: best,
        gap,
        tie_at_optimum: gap == 0.0,
    })
}

fn grid_h_values(
    p: &HarmonyParams,
    spec: &FillerRoleSpec,
    grid: &[GridPoint],
) -> Result<Vec<f64>> {
    grid.iter()
        .map(|g| grammar_harmony(p, &embed(g, spec)))
        .collect()
}

/// Boltzmann distribution exp(H(x_i)/T) / Z over the grid, computed with
/// max subtraction so small T stays stable.
pub fn boltzmann_distribution(
    p: &HarmonyParams,
    temp: f64,
    spec: &FillerRoleSpec,
    cap: u64,
) -> Result<DVector<f64>> {
    if temp <= 0.0 || !temp.is_finite() {
        return Err(GscError::BadScheduleParam(format!(
            "Boltzmann temperature must be positive, got {temp}"
        )));
    }
    let grid = enumerate_grid(spec, cap)?;
    let values = grid_h_values(p, spec, &grid)?;
    Ok(boltzmann_from_values(&values, temp))
}

/// Normalized exp(v_i / T) with max subtraction.
pub fn boltzmann_from_values(values: &[f64], temp: f64) -> DVector<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = values.iter().map(|v| ((v - max) / temp).exp()).collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    DVector::from_vec(weights)
}

/// Full grid report (H values, gap, Boltzmann weights at `temp`).
pub fn grid_report(
    p: &HarmonyParams,
    spec: &FillerRoleSpec,
    temp: f64,
    cap: u64,
) -> Result<GridReport> {
    let grid = enumerate_grid(spec, cap)?;
    let values = grid_h_values(p, spec, &grid)?;
    let opt = brute_force_optimum(p, spec, cap)?;
    let argmax = grid
        .iter()
        .position(|g| *g == opt.grid_point)
        .expect("optimum is on the grid");
    let boltzmann = boltzmann_distribution(p, temp, spec, cap)?;
    Ok(GridReport {
        labels: grid.iter().map(|g| spec.label(g)).collect(),
        h_values: values,
        argmax,
        gap: opt.gap,
        tie_at_optimum: opt.tie_at_optimum,
        temperature: temp,
        boltzmann: boltzmann.as_slice().to_vec(),
    })
}

/// A Newton-refined local maximum of the total Harmony near a grid point.
#[derive(Debug, Clone)]
pub struct RefinedMaximum {
    pub grid_point: GridPoint,
    /// Converged location x_q with |grad| <= 1e-10 and negative definite Hessian.
    pub location: CoefficientState,
    /// Total Harmony at the refined location.
    pub value: f64,
    /// Closed-form first-order location prediction
    /// x* - q^-1 [hess Q(x*)]^-1 grad H(x*).
    pub first_order_prediction: CoefficientState,
    pub newton_iters: usize,
}

/// First-order location prediction for the refined maximum near `x_star`.
pub fn predicted_location(
    p: &HarmonyParams,
    q: f64,
    x_star: &GridPoint,
    spec: &FillerRoleSpec,
) -> Result<CoefficientState> {
    check_positive_q(q)?;
    let x = embed(x_star, spec);
    let gh = crate::harmony::grad_h(p, &x)?;
    let mut out = x.clone();
    let m = out.coeffs_mut();
    for i in 0..m.len() {
        // hess Q at a grid point is diagonal: -5 where x = 1, -1 where x = 0.
        let d = if x.flat()[i] == 1.0 { -5.0 } else { -1.0 };
        m[i] -= gh[i] / (q * d);
    }
    Ok(out)
}

/// Two-term expansion of the refined maximum's value:
/// H(x*) - (2q)^-1 grad H(x*)' [hess Q(x*)]^-1 grad H(x*).
/// The quantization term contributes half of the naive first-order
/// correction back, hence the factor 1/2.
pub fn predicted_value(
    p: &HarmonyParams,
    q: f64,
    x_star: &GridPoint,
    spec: &FillerRoleSpec,
) -> Result<f64> {
    check_positive_q(q)?;
    let x = embed(x_star, spec);
    let gh = crate::harmony::grad_h(p, &x)?;
    let mut quad = 0.0;
    for i in 0..gh.len() {
        let d = if x.flat()[i] == 1.0 { -5.0 } else { -1.0 };
        quad += gh[i] * gh[i] / d;
    }
    Ok(grammar_harmony(p, &x)? - quad / (2.0 * q))
}

fn check_positive_q(q: f64) -> Result<()> {
    if q <= 0.0 || !q.is_finite() {
        return Err(GscError::InvalidSpec(format!(
            "refinement requires q > 0, got {q}"
        )));
    }
    Ok(())
}

/// Newton's method on grad(H + qQ) = 0 started from the embedded grid point,
/// with halving line search on the gradient norm.
pub fn refine_local_maximum(
    p: &HarmonyParams,
    q: f64,
    x_star: &GridPoint,
    spec: &FillerRoleSpec,
) -> Result<RefinedMaximum> {
    check_positive_q(q)?;
    let mut y = embed(x_star, spec);
    let mut grad = grad_total(p, q, &y)?;
    let mut grad_norm = grad.norm();
    let mut iters = 0;

    while grad_norm > NEWTON_GRAD_TOL {
        if iters >= NEWTON_MAX_ITERS {
            return Err(GscError::NewtonDiverged {
                q,
                iters,
                grad_norm,
            });
        }
        let hess = hess_total(p, q, &y)?;
        let step = hess
            .lu()
            .solve(&grad)
            .ok_or(GscError::NewtonDiverged {
                q,
                iters,
                grad_norm,
            })?;
        // Damped update: halve until the gradient norm decreases.
        let mut alpha = 1.0;
        loop {
            let mut trial = y.clone();
            {
                let m = trial.coeffs_mut();
                for i in 0..m.len() {
                    m[i] -= alpha * step[i];
                }
            }
            let trial_grad = grad_total(p, q, &trial)?;
            let trial_norm = trial_grad.norm();
            if trial_norm < grad_norm {
                y = trial;
                grad = trial_grad;
                grad_norm = trial_norm;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-8 {
                return Err(GscError::NewtonDiverged {
                    q,
                    iters,
                    grad_norm,
                });
            }
        }
        iters += 1;
    }

    let hess = hess_total(p, q, &y)?;
    if (-hess).cholesky().is_none() {
        return Err(GscError::NotAMaximum { q });
    }

    let value = crate::harmony::total_harmony(p, q, &y)?;
    Ok(RefinedMaximum {
        grid_point: x_star.clone(),
        location: y,
        value,
        first_order_prediction: predicted_location(p, q, x_star, spec)?,
        newton_iters: iters,
    })
}

/// Global maximum of the total Harmony found by refining every grid point.
#[derive(Debug, Clone)]
pub struct GlobalTotalMax {
    pub best: RefinedMaximum,
    pub all: Vec<RefinedMaximum>,
    /// Set when ordering grid points by refined total Harmony disagrees with
    /// ordering them by H on the grid (q below the asymptotic regime).
    pub ranking_flip: bool,
}

pub fn global_max_of_total(
    p: &HarmonyParams,
    q: f64,
    spec: &FillerRoleSpec,
    cap: u64,
) -> Result<GlobalTotalMax> {
    check_positive_q(q)?;
    let grid = enumerate_grid(spec, cap)?;
    let h_values = grid_h_values(p, spec, &grid)?;
    let refined: Vec<RefinedMaximum> = grid
        .iter()
        .map(|g| refine_local_maximum(p, q, g, spec))
        .collect::<Result<_>>()?;

    let mut best_idx = 0;
    for i in 1..refined.len() {
        if refined[i].value > refined[best_idx].value {
            best_idx = i;
        }
    }
    let ranking_flip = {
        let order = |vals: &[f64]| {
            let mut idx: Vec<usize> = (0..vals.len()).collect();
            idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap().then(a.cmp(&b)));
            idx
        };
        let total_vals: Vec<f64> = refined.iter().map(|r| r.value).collect();
        order(&h_values) != order(&total_vals)
    };
    Ok(GlobalTotalMax {
        best: refined[best_idx].clone(),
        all: refined,
        ranking_flip,
    })
}

/// Builds a dense Hessian of Q at an arbitrary state (re-exported convenience
/// for verification commands).
pub fn hess_q_at(y: &CoefficientState) -> DMatrix<f64> {
    hess_q(y)
}
