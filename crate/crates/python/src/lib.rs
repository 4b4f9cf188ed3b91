//! Python bindings for `sebayes`.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sebayes_core::backends::{EquivalenceOracle, ExactMatch, GroundTruth, SimulatedLm as CoreLm, TfCosine};
use sebayes_core::eval::{generate_workload, QueryRecord};
use sebayes_core::posterior::{snis_entropy_moments_with, ConstraintSet, Proposal};
use sebayes_core::error::BackendError;
use sebayes_core::{Error, EstimatorConfig as CoreConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Backend(BackendError::UnknownPrompt(_)) => PyKeyError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Backend(_) | Error::Interrupted { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn proposal(name: &str) -> PyResult<Proposal> {
    match name {
        "adapted" => Ok(Proposal::Adapted),
        "prior" => Ok(Proposal::Prior),
        other => Err(PyValueError::new_err(format!("unknown proposal `{other}`"))),
    }
}

#[pyclass(name = "EstimatorConfig", module = "sebayes", from_py_object)]
#[derive(Clone)]
struct EstimatorConfig {
    inner: CoreConfig,
}

#[pymethods]
impl EstimatorConfig {
    #[new]
    #[pyo3(signature = (
        gamma = 0.01, n0 = 1, top_k = 3, alpha0 = 1.0, n_max = 10, snis_draws = 4096,
        seed = 0, marginal_prior_only = false, guided = true, proposal = "adapted"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        gamma: f64,
        n0: usize,
        top_k: usize,
        alpha0: f64,
        n_max: usize,
        snis_draws: usize,
        seed: u64,
        marginal_prior_only: bool,
        guided: bool,
        proposal: &str,
    ) -> PyResult<Self> {
        let inner = CoreConfig {
            gamma,
            n0,
            top_k,
            alpha0,
            n_max,
            snis_draws,
            seed,
            marginal_prior_only,
            guided,
            proposal: self::proposal(proposal)?,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn guided(&self) -> bool {
        self.inner.guided
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A simulated language model with exactly known meaning distributions.
#[pyclass(name = "SimulatedLM", module = "sebayes", frozen)]
struct SimulatedLm {
    inner: Arc<CoreLm>,
}

#[pymethods]
impl SimulatedLm {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(CoreLm::from_json(text).map_err(to_py)?),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(CoreLm::load(path).map_err(to_py)?),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn prompts(&self) -> Vec<String> {
        self.inner.prompt_names().map(String::from).collect()
    }

    fn exact_entropy(&self, prompt: &str) -> PyResult<f64> {
        self.inner.simulated_exact_entropy(prompt).map_err(|e| to_py(e.into()))
    }

    fn meaning_distribution(&self, prompt: &str) -> PyResult<BTreeMap<usize, f64>> {
        self.inner.meaning_distribution(prompt).map_err(|e| to_py(e.into()))
    }

    /// One response as `(tokens, token_logprobs)`.
    fn sample(&self, prompt: &str, seed: u64) -> PyResult<(Vec<String>, Vec<f64>)> {
        let r = self
            .inner
            .simulated_sample(prompt, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(|e| to_py(e.into()))?;
        Ok((r.tokens().to_vec(), r.token_logprobs().to_vec()))
    }
}

#[pyclass(name = "EntropyEstimate", module = "sebayes", frozen, get_all)]
struct EntropyEstimate {
    mean: f64,
    variance: f64,
    within: f64,
    between: f64,
    samples_used: usize,
    k_map: usize,
    lambda_hat: f64,
    terminated_by: String,
    /// `{K: posterior probability}`.
    k_posterior: BTreeMap<usize, f64>,
    /// `(samples_used, mean, variance)` after each sample.
    trajectory: Vec<(usize, f64, f64)>,
}

#[pymethods]
impl EntropyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "EntropyEstimate(mean={:.6}, variance={:.3e}, samples_used={}, k_map={}, terminated_by='{}')",
            self.mean, self.variance, self.samples_used, self.k_map, self.terminated_by
        )
    }
}

impl From<sebayes_core::EntropyEstimate> for EntropyEstimate {
    fn from(e: sebayes_core::EntropyEstimate) -> Self {
        let terminated_by = serde_json::to_value(e.terminated_by)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        Self {
            k_map: e.k_map(),
            mean: e.mean,
            variance: e.variance,
            within: e.within,
            between: e.between,
            samples_used: e.samples_used,
            lambda_hat: e.lambda_hat,
            terminated_by,
            k_posterior: e.k_posterior.support.iter().copied().zip(e.k_posterior.probs.iter().copied()).collect(),
            trajectory: e.trajectory.iter().map(|p| (p.samples_used, p.mean, p.variance)).collect(),
        }
    }
}

fn oracle_for(lm: &Arc<CoreLm>, name: &str) -> PyResult<Box<dyn EquivalenceOracle>> {
    match name {
        "ground-truth" => Ok(Box::new(GroundTruth::new(lm.clone()))),
        "exact" => Ok(Box::new(ExactMatch)),
        other => Err(PyValueError::new_err(format!("unknown oracle `{other}`"))),
    }
}

/// Adaptive estimate of semantic entropy for `prompt` under the simulated model.
#[pyfunction]
#[pyo3(signature = (lm, prompt, config = None, oracle = "ground-truth"))]
fn estimate(
    py: Python<'_>,
    lm: &SimulatedLm,
    prompt: &str,
    config: Option<EstimatorConfig>,
    oracle: &str,
) -> PyResult<EntropyEstimate> {
    let config = config.map(|c| c.inner).unwrap_or_default();
    let oracle = oracle_for(&lm.inner, oracle)?;
    let model = lm.inner.clone();
    py.detach(|| sebayes_core::estimate_semantic_entropy(prompt, model.as_ref(), oracle.as_ref(), &TfCosine, &config))
        .map(EntropyEstimate::from)
        .map_err(to_py)
}

/// Fixed-budget plug-in estimate from `n` direct samples.
#[pyfunction]
#[pyo3(signature = (lm, prompt, n, seed = 0, oracle = "ground-truth"))]
fn baseline(lm: &SimulatedLm, prompt: &str, n: usize, seed: u64, oracle: &str) -> PyResult<f64> {
    let oracle = oracle_for(&lm.inner, oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sebayes_core::baseline_semantic_entropy(prompt, lm.inner.as_ref(), oracle.as_ref(), n, &mut rng).map_err(to_py)
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    sebayes_core::eval::auroc(&scores, &labels).map_err(to_py)
}

#[pyfunction]
fn dirichlet_entropy_mean(alpha: Vec<f64>) -> PyResult<f64> {
    sebayes_core::dirichlet_entropy_mean_closed_form(&alpha).map_err(to_py)
}

/// Entropy `(mean, variance, effective_sample_size)` under `Dir(alpha)`
/// restricted to `p >= lower_bounds`.
#[pyfunction]
#[pyo3(signature = (alpha, lower_bounds, draws = 4096, seed = 0, proposal = "adapted"))]
fn truncated_entropy_moments(
    alpha: Vec<f64>,
    lower_bounds: Vec<f64>,
    draws: usize,
    seed: u64,
    proposal: &str,
) -> PyResult<(f64, f64, f64)> {
    let c = ConstraintSet::new(lower_bounds).map_err(to_py)?;
    let r = snis_entropy_moments_with(&alpha, &c, draws, self::proposal(proposal)?, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(to_py)?;
    Ok((r.mean, r.variance, r.effective_sample_size))
}

type WorkloadTuple = (SimulatedLm, Vec<(String, String, u8)>, BTreeMap<String, f64>);

/// Synthetic labeled workload: `(model, records, exact_entropy_by_id)`.
/// Records are `(id, prompt, label)` tuples.
#[pyfunction]
fn workload(n_prompts: usize, seed: u64) -> PyResult<WorkloadTuple> {
    let w = generate_workload(n_prompts, seed).map_err(to_py)?;
    let records = w
        .records
        .into_iter()
        .map(|QueryRecord { id, prompt, label, .. }| (id, prompt, label.unwrap_or(0)))
        .collect();
    Ok((SimulatedLm { inner: Arc::new(w.lm) }, records, w.exact_entropy))
}

#[pymodule]
#[pyo3(name = "sebayes")]
fn sebayes_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EstimatorConfig>()?;
    m.add_class::<SimulatedLm>()?;
    m.add_class::<EntropyEstimate>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_entropy_mean, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_entropy_moments, m)?)?;
    m.add_function(wrap_pyfunction!(workload, m)?)?;
    Ok(())
}
