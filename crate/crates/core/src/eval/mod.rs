//! Dataset ingestion, AUROC, threshold calibration and benchmarking.

mod auroc;
mod benchmark;
mod calibrate;
mod dataset;
mod workload;

pub use auroc::{auroc, auroc_brute_force};
pub use benchmark::{run_benchmark, BenchmarkOptions, BenchmarkReport, BenchmarkRow, Histogram, Method};
pub use calibrate::{calibrate_from_trajectories, calibrate_gamma, Calibration, GAMMA_RANGE};
pub use dataset::{load_dataset, load_results, parse_dataset, parse_results, write_results, QueryRecord, ResultRecord};
pub use workload::{generate_workload, Workload};

use rayon::prelude::*;

use crate::backends::{EquivalenceOracle, Generator, Similarity};
use crate::error::{Error, Result};
use crate::estimator::{estimate_semantic_entropy, EstimatorConfig, TrajectoryPoint};

/// The three backends an estimation run needs.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub generator: &'a dyn Generator,
    pub oracle: &'a dyn EquivalenceOracle,
    pub sim: &'a dyn Similarity,
}

/// FNV-1a over the global seed and the record id.
pub fn prompt_seed(seed: u64, id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(id.as_bytes())
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// One adaptive run per record with its own derived seed, in record order.
pub fn estimate_records(
    records: &[QueryRecord],
    backends: Backends<'_>,
    config: &EstimatorConfig,
    workers: usize,
) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let mut out: Vec<ResultRecord> = thread_pool(workers)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let cfg = EstimatorConfig {
                    seed: prompt_seed(config.seed, &r.id),
                    ..config.clone()
                };
                let e = estimate_semantic_entropy(&r.prompt, backends.generator, backends.oracle, backends.sim, &cfg)?;
                Ok(ResultRecord::from_estimate(&r.id, &e))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// A run taken to the sample cap, from which any threshold can be replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedRun {
    pub id: String,
    pub lambda_hat: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

pub fn capped_runs(
    records: &[QueryRecord],
    backends: Backends<'_>,
    config: &EstimatorConfig,
    workers: usize,
) -> Result<Vec<CappedRun>> {
    config.validate()?;
    thread_pool(workers)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let cfg = EstimatorConfig {
                    seed: prompt_seed(config.seed, &r.id),
                    gamma: f64::MIN_POSITIVE,
                    ..config.clone()
                };
                let e = estimate_semantic_entropy(&r.prompt, backends.generator, backends.oracle, backends.sim, &cfg)?;
                Ok(CappedRun {
                    id: r.id.clone(),
                    lambda_hat: e.lambda_hat,
                    trajectory: e.trajectory,
                })
            })
            .collect()
    })
}
