use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{replay, EstimatorConfig, TrajectoryPoint};
use crate::eval::{capped_runs, prompt_seed, Backends, QueryRecord};

/// Bisection bounds for the variance threshold.
pub const GAMMA_RANGE: (f64, f64) = (1e-6, 10.0);
const TOLERANCE: f64 = 0.25;
const MAX_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub gamma: f64,
    pub achieved_mean: f64,
    pub steps: usize,
    pub within_tolerance: bool,
}

fn mean_samples(trajectories: &[Vec<TrajectoryPoint>], gamma: f64) -> f64 {
    let total: usize = trajectories.iter().map(|t| replay(t, gamma).0.samples_used).sum();
    total as f64 / trajectories.len() as f64
}

/// Bisection on `ln gamma` for a target mean sample count, reading each
/// candidate off runs taken to the cap.
pub fn calibrate_from_trajectories(
    trajectories: &[Vec<TrajectoryPoint>],
    target: f64,
    n0: usize,
    n_max: usize,
) -> Result<Calibration> {
    if trajectories.is_empty() {
        return Err(Error::invalid("calibration needs at least one prompt"));
    }
    if !(target > n0 as f64 && target <= n_max as f64) {
        return Err(Error::invalid(format!(
            "target mean {target} must lie in ({n0}, {n_max}]"
        )));
    }
    let (g_lo, g_hi) = GAMMA_RANGE;
    let most = mean_samples(trajectories, g_lo);
    let fewest = mean_samples(trajectories, g_hi);
    if target > most + TOLERANCE || target < fewest - TOLERANCE {
        return Err(Error::invalid(format!(
            "target mean {target} is outside the achievable range [{fewest}, {most}] for gamma in [{g_lo}, {g_hi}]"
        )));
    }
    let done = |gamma: f64, mean: f64, steps: usize| Calibration {
        gamma,
        achieved_mean: mean,
        steps,
        within_tolerance: (mean - target).abs() <= TOLERANCE,
    };
    // Prefer the endpoint closer to the target when both qualify.
    let mut best = if (most - target).abs() <= (fewest - target).abs() {
        done(g_lo, most, 0)
    } else {
        done(g_hi, fewest, 0)
    };
    if best.within_tolerance {
        return Ok(best);
    }
    let (mut lo, mut hi) = (g_lo.ln(), g_hi.ln());
    for step in 1..=MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let gamma = mid.exp();
        let mean = mean_samples(trajectories, gamma);
        let candidate = done(gamma, mean, step);
        if (mean - target).abs() < (best.achieved_mean - target).abs() {
            best = candidate;
        }
        if candidate.within_tolerance {
            return Ok(candidate);
        }
        if mean > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.steps = MAX_STEPS;
    Ok(best)
}

/// Deterministic subsample of at most `size` records, kept in input order.
pub(crate) fn subsample(records: &[QueryRecord], seed: u64, size: usize) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (prompt_seed(seed ^ 0x5eed, &r.id), i))
        .collect();
    keyed.sort_unstable();
    let mut chosen: Vec<usize> = keyed.into_iter().take(size).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    chosen
}

/// Threshold whose mean sample count over (a subsample of) `records`
/// matches `target`.
pub fn calibrate_gamma(
    records: &[QueryRecord],
    backends: Backends<'_>,
    config: &EstimatorConfig,
    target: f64,
    subsample_size: usize,
    workers: usize,
) -> Result<Calibration> {
    let picked: Vec<QueryRecord> = subsample(records, config.seed, subsample_size)
        .into_iter()
        .map(|i| records[i].clone())
        .collect();
    let runs = capped_runs(&picked, backends, config, workers)?;
    let trajectories: Vec<_> = runs.into_iter().map(|r| r.trajectory).collect();
    calibrate_from_trajectories(&trajectories, target, config.n0, config.n_max)
}
