//! Statistical verdicts over trajectory batches: eta-ball basin
//! classification, total variation against the Boltzmann oracle, and
//! success probabilities with Wilson score intervals.

use serde::Serialize;

use crate::error::{GscError, Result};
use crate::harmony::HarmonyParams;
use crate::oracle::boltzmann_distribution;
use crate::representation::{
    embed, enumerate_grid, quantize, CoefficientState, FillerRoleSpec, GridPoint,
};

/// Half the minimum distance between one-hot grid points (sqrt(2)/2);
/// eta must stay below this for the balls to be disjoint.
pub const MAX_ETA: f64 = std::f64::consts::SQRT_2 / 2.0;

/// Default classification radius, well under the disjointness bound.
pub const DEFAULT_ETA: f64 = 0.25;

/// Outcome of classifying one continuous sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasinClass {
    /// Index of the grid point whose eta-ball contains the sample.
    Inside(usize),
    Outside,
}

/// Returns the grid-point index whose eta-ball contains `y`, or `Outside`.
/// Requires eta < sqrt(2)/2 so the balls cannot overlap.
pub fn classify_sample(
    y: &CoefficientState,
    spec: &FillerRoleSpec,
    grid: &[GridPoint],
    eta: f64,
) -> Result<BasinClass> {
    if !(eta > 0.0) || eta >= MAX_ETA {
        return Err(GscError::EtaTooLarge {
            eta,
            max_eta: MAX_ETA,
        });
    }
    // The nearest grid point is the per-role argmax; only its ball can
    // contain y since the balls are disjoint.
    let nearest = quantize(y);
    if y.distance(&embed(&nearest, spec)) <= eta {
        let idx = grid
            .iter()
            .position(|g| *g == nearest)
            .expect("quantized point is on the grid");
        Ok(BasinClass::Inside(idx))
    } else {
        Ok(BasinClass::Outside)
    }
}

/// Empirical distribution of samples over grid basins.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalGridDistribution {
    pub counts: Vec<u64>,
    pub outside: u64,
    pub total: u64,
    pub eta: f64,
}

impl EmpiricalGridDistribution {
    /// Conditional-on-inside probabilities; None when nothing landed inside.
    pub fn conditional_inside(&self) -> Option<Vec<f64>> {
        let inside: u64 = self.counts.iter().sum();
        if inside == 0 {
            return None;
        }
        Some(
            self.counts
                .iter()
                .map(|&c| c as f64 / inside as f64)
                .collect(),
        )
    }

    pub fn outside_fraction(&self) -> f64 {
        self.outside as f64 / self.total as f64
    }
}

/// Classifies a batch of samples into grid basins.
pub fn classify_samples(
    samples: &[CoefficientState],
    spec: &FillerRoleSpec,
    grid: &[GridPoint],
    eta: f64,
) -> Result<EmpiricalGridDistribution> {
    let mut counts = vec![0u64; grid.len()];
    let mut outside = 0u64;
    for y in samples {
        match classify_sample(y, spec, grid, eta)? {
            BasinClass::Inside(i) => counts[i] += 1,
            BasinClass::Outside => outside += 1,
        }
    }
    Ok(EmpiricalGridDistribution {
        counts,
        outside,
        total: samples.len() as u64,
        eta,
    })
}

/// Total variation distance 1/2 sum |p_i - q_i| between discrete
/// probability vectors (the finite-outcome form of the sup definition).
pub fn total_variation(pv: &[f64], qv: &[f64]) -> Result<f64> {
    if pv.len() != qv.len() {
        return Err(GscError::LengthMismatch(pv.len(), qv.len()));
    }
    for v in [pv, qv] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GscError::NotNormalized(sum));
        }
    }
    Ok(0.5 * pv.iter().zip(qv).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Comparison of an empirical basin distribution against the Boltzmann
/// oracle at temperature T.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingVerdict {
    pub empirical: EmpiricalGridDistribution,
    pub conditional_inside: Vec<f64>,
    pub boltzmann: Vec<f64>,
    pub tv: f64,
    pub outside_fraction: f64,
    pub n: u64,
}

/// Classifies final states and compares the conditional-on-inside empirical
/// distribution to the Boltzmann distribution at `temp`. Needs >= 100 samples.
pub fn sampling_verdict(
    samples: &[CoefficientState],
    p: &HarmonyParams,
    temp: f64,
    spec: &FillerRoleSpec,
    eta: f64,
    cap: u64,
) -> Result<SamplingVerdict> {
    if samples.len() < 100 {
        return Err(GscError::InvalidSpec(format!(
            "sampling verdict needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    let grid = enumerate_grid(spec, cap)?;
    let empirical = classify_samples(samples, spec, &grid, eta)?;
    let conditional = empirical.conditional_inside().ok_or_else(|| {
        GscError::InvalidSpec("no samples landed inside any eta-ball".into())
    })?;
    let boltzmann = boltzmann_distribution(p, temp, spec, cap)?;
    let tv = total_variation(&conditional, boltzmann.as_slice())?;
    Ok(SamplingVerdict {
        outside_fraction: empirical.outside_fraction(),
        n: empirical.total,
        empirical,
        conditional_inside: conditional,
        boltzmann: boltzmann.as_slice().to_vec(),
        tv,
    })
}

/// Success fraction with its Wilson 95% score interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SuccessEstimate {
    pub successes: u64,
    pub n: u64,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Fraction of quantized outcomes equal to `target`, with Wilson interval.
pub fn success_probability(outcomes: &[GridPoint], target: &GridPoint) -> Result<SuccessEstimate> {
    if outcomes.is_empty() {
        return Err(GscError::InvalidSpec(
            "success probability needs at least one run".into(),
        ));
    }
    let successes = outcomes.iter().filter(|g| *g == target).count() as u64;
    Ok(wilson_interval(successes, outcomes.len() as u64))
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: u64, n: u64) -> SuccessEstimate {
    let z = 1.959963984540054_f64;
    let nf = n as f64;
    let p_hat = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p_hat + z2 / (2.0 * nf)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    SuccessEstimate {
        successes,
        n,
        fraction: p_hat,
        wilson_low: (center - half).max(0.0),
        wilson_high: (center + half).min(1.0),
    }
}
