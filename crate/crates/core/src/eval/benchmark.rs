use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{baseline_semantic_entropy, replay, EstimatorConfig};
use crate::eval::calibrate::subsample;
use crate::eval::{auroc, calibrate_from_trajectories, capped_runs, prompt_seed, thread_pool, Backends, QueryRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub budgets: Vec<usize>,
    pub workers: usize,
    pub calibration_subsample: usize,
    /// Record wall-clock runtimes; off by default so reports are reproducible.
    pub timings: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            budgets: vec![2, 5],
            workers: 1,
            calibration_subsample: 200,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fixed,
    Adaptive,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Fixed => "fixed",
            Method::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: Method,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub mean_budget: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
}

/// Prompts per sample count; `counts[i]` is the number that used `i` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub method: Method,
    pub budget: usize,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_prompts: usize,
    pub n_max: usize,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
    pub histograms: Vec<Histogram>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl BenchmarkReport {
    pub fn row(&self, method: Method, budget: usize) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method && r.budget == budget)
    }

    /// One flat table: a line per row and a line per histogram bin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,method,budget,gamma,mean_budget,auroc,rmse,runtime_secs,samples,count\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "row,{},{},{},{},{},{},{},,",
                r.method.name(),
                r.budget,
                fmt_opt(r.gamma),
                r.mean_budget,
                fmt_opt(r.auroc),
                fmt_opt(r.rmse),
                fmt_opt(r.runtime_secs)
            );
        }
        for h in &self.histograms {
            for (samples, count) in h.counts.iter().enumerate().skip(1) {
                let _ = writeln!(s, "hist,{},{},,,,,,{samples},{count}", h.method.name(), h.budget);
            }
        }
        s
    }

    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut s = format!(
            "{:<9} {:>6} {:>10} {:>11} {:>7} {:>7}\n",
            "method", "budget", "gamma", "mean_budget", "auroc", "rmse"
        );
        for r in &self.rows {
            let gamma = r.gamma.map_or_else(|| "-".to_string(), |g| format!("{g:.3e}"));
            let _ = writeln!(
                s,
                "{:<9} {:>6} {:>10} {:>11.3} {:>7} {:>7}",
                r.method.name(),
                r.budget,
                gamma,
                r.mean_budget,
                cell(r.auroc),
                cell(r.rmse)
            );
        }
        for h in &self.histograms {
            let bins: Vec<String> = h
                .counts
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| format!("{i}:{c}"))
                .collect();
            let _ = writeln!(s, "{} N={} samples {}", h.method.name(), h.budget, bins.join(" "));
        }
        s
    }
}

fn rmse(estimates: &[f64], truth: &[f64]) -> f64 {
    let sq: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    (sq / estimates.len() as f64).sqrt()
}

/// Fixed-budget baseline against the adaptive estimator calibrated to the
/// same mean budget, for each budget. Scored by AUROC when every record is
/// labeled and by RMSE when exact entropies are supplied.
pub fn run_benchmark(
    records: &[QueryRecord],
    backends: Backends<'_>,
    exact: Option<&BTreeMap<String, f64>>,
    config: &EstimatorConfig,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("benchmark dataset is empty"));
    }
    if options.budgets.is_empty() {
        return Err(Error::invalid("no budgets given"));
    }
    if let Some(b) = options.budgets.iter().find(|b| **b <= config.n0 || **b > config.n_max) {
        return Err(Error::invalid(format!(
            "budget {b} must lie in ({}, {}]",
            config.n0, config.n_max
        )));
    }
    let labels: Option<Vec<bool>> = records.iter().map(|r| r.label.map(|l| l == 1)).collect();
    let truth: Option<Vec<f64>> = exact.and_then(|m| records.iter().map(|r| m.get(&r.id).copied()).collect());
    if labels.is_none() && truth.is_none() {
        return Err(Error::invalid(
            "benchmark needs hallucination labels on every record or exact entropies from a simulated backend",
        ));
    }
    let score = |estimates: &[f64]| -> Result<(Option<f64>, Option<f64>)> {
        let a = match &labels {
            Some(l) => Some(auroc(estimates, l)?),
            None => None,
        };
        Ok((a, truth.as_ref().map(|t| rmse(estimates, t))))
    };
    let pool = thread_pool(options.workers)?;

    let start = Instant::now();
    let runs = capped_runs(records, backends, config, options.workers)?;
    let adaptive_secs = start.elapsed().as_secs_f64();
    let calibration_set: Vec<_> = subsample(records, config.seed, options.calibration_subsample)
        .into_iter()
        .map(|i| runs[i].trajectory.clone())
        .collect();

    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    for &budget in &options.budgets {
        let start = Instant::now();
        let fixed: Vec<f64> = pool.install(|| {
            records
                .par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(prompt_seed(config.seed, &r.id));
                    rng.set_stream(budget as u64 + 1);
                    baseline_semantic_entropy(&r.prompt, backends.generator, backends.oracle, budget, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let fixed_secs = start.elapsed().as_secs_f64();
        let (a, e) = score(&fixed)?;
        rows.push(BenchmarkRow {
            method: Method::Fixed,
            budget,
            gamma: None,
            mean_budget: budget as f64,
            auroc: a,
            rmse: e,
            runtime_secs: options.timings.then_some(fixed_secs),
        });

        let cal = calibrate_from_trajectories(&calibration_set, budget as f64, config.n0, config.n_max)?;
        let mut counts = vec![0; config.n_max + 1];
        let mut estimates = Vec::with_capacity(runs.len());
        for run in &runs {
            let (p, _) = replay(&run.trajectory, cal.gamma);
            counts[p.samples_used] += 1;
            estimates.push(p.mean);
        }
        let total: usize = counts.iter().enumerate().map(|(i, c)| i * c).sum();
        let (a, e) = score(&estimates)?;
        rows.push(BenchmarkRow {
            method: Method::Adaptive,
            budget,
            gamma: Some(cal.gamma),
            mean_budget: total as f64 / runs.len() as f64,
            auroc: a,
            rmse: e,
            runtime_secs: options.timings.then_some(adaptive_secs),
        });
        histograms.push(Histogram {
            method: Method::Adaptive,
            budget,
            counts,
        });
    }
    Ok(BenchmarkReport {
        n_prompts: records.len(),
        n_max: config.n_max,
        seed: config.seed,
        rows,
        histograms,
    })
}
