//! Generator, equivalence-oracle and similarity backends.

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::types::Response;

pub mod http;
pub mod nli;
mod oracle;
pub mod simulated;

pub use http::{HttpConfig, HttpGenerator, API_KEY_ENV};
pub use nli::{NliClient, NliConfig, NliLabel, NliOracle, NliResponse, NLI_PATH, NLI_TOKEN_ENV};
pub use oracle::{canonicalize, ExactMatch, GroundTruth};
pub use simulated::{MeaningSpec, PromptSpec, Scenario, ScenarioFile, SimulatedLm, TransitionSpec, SCENARIO_FORMAT};

/// A token with its conditional probability at some position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub token: String,
    pub prob: f64,
}

impl ScoredToken {
    pub fn new(token: impl Into<String>, prob: f64) -> Self {
        Self {
            token: token.into(),
            prob,
        }
    }
}

/// The already-generated part of a response, with its token log-probabilities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenPrefix {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

impl TokenPrefix {
    /// The first `len` tokens of `resp`.
    pub fn of(resp: &Response, len: usize) -> Self {
        Self {
            tokens: resp.tokens()[..len].to_vec(),
            logprobs: resp.token_logprobs()[..len].to_vec(),
        }
    }
}

/// A language model exposing sampling, next-token distributions, and
/// continuation from a forced prefix, all at temperature 1.
pub trait Generator: Send + Sync {
    fn sample_response(&self, prompt: &str, rng: &mut dyn RngCore) -> Result<Response, BackendError>;

    /// Reported support of the next-token distribution after `prefix`,
    /// sorted by descending probability. Empty when generation has ended.
    fn next_token_distribution(&self, prompt: &str, prefix: &[String]) -> Result<Vec<ScoredToken>, BackendError>;

    /// Samples a continuation after `prefix` followed by `forced`. The result
    /// starts with exactly those tokens.
    fn continue_with(
        &self,
        prompt: &str,
        prefix: &TokenPrefix,
        forced: &ScoredToken,
        rng: &mut dyn RngCore,
    ) -> Result<Response, BackendError>;
}

/// Decides whether two responses to the same prompt mean the same thing.
pub trait EquivalenceOracle: Send + Sync {
    fn equivalent(&self, prompt: &str, a: &Response, b: &Response) -> Result<bool, BackendError>;
}

/// Sentence similarity on a `[0, 1]` scale.
pub trait Similarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Assigns `candidate` to the first cluster whose representative it is
/// equivalent to, or opens cluster `representatives.len()`.
pub fn classify_incremental(
    oracle: &dyn EquivalenceOracle,
    prompt: &str,
    representatives: &[&Response],
    candidate: &Response,
) -> Result<usize, BackendError> {
    for (id, rep) in representatives.iter().enumerate() {
        if oracle.equivalent(prompt, rep, candidate)? {
            return Ok(id);
        }
    }
    Ok(representatives.len())
}

/// Cosine similarity of lowercased term-frequency vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosine;

impl Similarity for TfCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        tf_cosine_similarity(a, b)
    }
}

fn term_frequencies(s: &str) -> HashMap<String, f64> {
    let mut tf = HashMap::new();
    for w in s.split_whitespace() {
        *tf.entry(w.to_lowercase()).or_insert(0.0) += 1.0;
    }
    tf
}

pub fn tf_cosine_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (term_frequencies(a), term_frequencies(b));
    match (ta.is_empty(), tb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let dot: f64 = ta.iter().map(|(w, x)| x * tb.get(w).copied().unwrap_or(0.0)).sum();
    let norm = |t: &HashMap<String, f64>| t.values().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (norm(&ta) * norm(&tb))).clamp(0.0, 1.0)
}
