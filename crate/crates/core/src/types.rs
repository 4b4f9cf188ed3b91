//! Domain types shared across the estimator: responses, semantic samples,
//! the estimation dataset and probability vectors.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

const LOG_PROB_TOLERANCE: f64 = 1e-9;
const SIMPLEX_TOLERANCE: f64 = 1e-9;
const REGISTRY_MASS_TOLERANCE: f64 = 1e-6;

/// One generated response: its tokens and the conditional log-probability
/// (natural log) of every token given the prompt and the preceding tokens.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Response {
    tokens: Vec<String>,
    token_logprobs: Vec<f64>,
    text: String,
    log_prob: f64,
}

impl Response {
    /// Builds a response, deriving the total log-probability from the tokens.
    pub fn new(tokens: Vec<String>, token_logprobs: Vec<f64>, text: impl Into<String>) -> Result<Self> {
        let log_prob = token_logprobs.iter().sum();
        Self::with_log_prob(tokens, token_logprobs, text, log_prob)
    }

    /// Builds a response from a backend that reports its own total.
    pub fn with_log_prob(
        tokens: Vec<String>,
        token_logprobs: Vec<f64>,
        text: impl Into<String>,
        log_prob: f64,
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("response has no tokens"));
        }
        if tokens.len() != token_logprobs.len() {
            return Err(Error::invalid(format!(
                "{} tokens but {} log-probabilities",
                tokens.len(),
                token_logprobs.len()
            )));
        }
        if let Some(lp) = token_logprobs.iter().find(|lp| !(lp.is_finite() && **lp <= 0.0)) {
            return Err(Error::invalid(format!("token log-probability {lp} is not in (-inf, 0]")));
        }
        let sum: f64 = token_logprobs.iter().sum();
        if (sum - log_prob).abs() > LOG_PROB_TOLERANCE {
            return Err(Error::invalid(format!(
                "sequence log-probability {log_prob} differs from token sum {sum}"
            )));
        }
        Ok(Self {
            tokens,
            token_logprobs,
            text: text.into(),
            log_prob,
        })
    }

    /// Space-joined text, the convention of backends without a detokenizer.
    pub fn from_words(tokens: Vec<String>, token_logprobs: Vec<f64>) -> Result<Self> {
        let text = tokens.join(" ");
        Self::new(tokens, token_logprobs, text)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_logprobs(&self) -> &[f64] {
        &self.token_logprobs
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    /// Sequence probability `exp(log_prob)`.
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The response text with token `index` deleted.
    ///
    /// Tokens that concatenate to the text (BPE-style pieces carrying their
    /// own whitespace) are re-concatenated; otherwise they are space-joined.
    pub fn text_without_token(&self, index: usize) -> String {
        let rest = self
            .tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, t)| t.as_str());
        if self.tokens.concat() == self.text {
            rest.collect()
        } else {
            rest.collect::<Vec<_>>().join(" ")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Direct,
    Guided,
}

/// A response together with its meaning cluster and importance weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticSample {
    pub response: Response,
    pub meaning_id: usize,
    pub importance_weight: f64,
    pub source: SampleSource,
}

impl SemanticSample {
    pub fn direct(response: Response, meaning_id: usize) -> Self {
        Self {
            response,
            meaning_id,
            importance_weight: 1.0,
            source: SampleSource::Direct,
        }
    }

    pub fn guided(response: Response, meaning_id: usize, importance_weight: f64) -> Result<Self> {
        if !(importance_weight > 0.0 && importance_weight <= 1.0) {
            return Err(Error::invalid(format!(
                "importance weight {importance_weight} outside (0, 1]"
            )));
        }
        Ok(Self {
            response,
            meaning_id,
            importance_weight,
            source: SampleSource::Guided,
        })
    }
}

/// The samples gathered for one prompt, with importance-weighted counts per
/// meaning and the registry of distinct sequences seen in each meaning.
///
/// Meaning ids are dense: a new sample may only open cluster `k_obs()`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimationDataset {
    samples: Vec<SemanticSample>,
    effective_counts: Vec<f64>,
    distinct_sequences: BTreeMap<(usize, String), f64>,
}

impl EstimationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: impl IntoIterator<Item = SemanticSample>) -> Result<Self> {
        let mut dataset = Self::new();
        for sample in samples {
            dataset.push(sample)?;
        }
        Ok(dataset)
    }

    /// Adds a sample, updating its meaning's effective count by the sample's
    /// importance weight and registering its sequence probability.
    pub fn push(&mut self, sample: SemanticSample) -> Result<()> {
        let w = sample.importance_weight;
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::invalid(format!("importance weight {w} outside (0, 1]")));
        }
        if sample.source == SampleSource::Direct && w != 1.0 {
            return Err(Error::invalid("direct samples must carry weight 1"));
        }
        let id = sample.meaning_id;
        if id > self.effective_counts.len() {
            return Err(Error::invalid(format!(
                "meaning id {id} skips ahead of the {} known meanings",
                self.effective_counts.len()
            )));
        }
        let key = (id, sample.response.text().to_string());
        let added_mass = if self.distinct_sequences.contains_key(&key) {
            0.0
        } else {
            sample.response.prob()
        };
        if self.registered_mass() + added_mass > 1.0 + REGISTRY_MASS_TOLERANCE {
            return Err(Error::invalid(
                "distinct sequence probabilities would exceed one",
            ));
        }
        if id == self.effective_counts.len() {
            self.effective_counts.push(0.0);
        }
        self.effective_counts[id] += w;
        self.distinct_sequences.entry(key).or_insert(added_mass);
        self.samples.push(sample);
        Ok(())
    }

    pub fn samples(&self) -> &[SemanticSample] {
        &self.samples
    }

    /// Importance-weighted count per meaning.
    pub fn effective_counts(&self) -> &[f64] {
        &self.effective_counts
    }

    /// Number of samples N, regardless of their weights.
    pub fn raw_count(&self) -> usize {
        self.samples.len()
    }

    /// Number of distinct meanings observed.
    pub fn k_obs(&self) -> usize {
        self.effective_counts.len()
    }

    pub fn distinct_sequences(&self) -> &BTreeMap<(usize, String), f64> {
        &self.distinct_sequences
    }

    /// Total probability of the distinct sequences seen so far.
    pub fn registered_mass(&self) -> f64 {
        self.distinct_sequences.values().sum()
    }

    /// Sum of distinct-sequence probabilities per meaning.
    pub fn observed_mass_per_meaning(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.k_obs()];
        for ((id, _), p) in &self.distinct_sequences {
            mass[*id] += p;
        }
        mass
    }

    /// Cluster representatives: the first sample of every meaning.
    pub fn representatives(&self) -> Vec<&Response> {
        let mut reps: Vec<Option<&Response>> = vec![None; self.k_obs()];
        for s in &self.samples {
            if reps[s.meaning_id].is_none() {
                reps[s.meaning_id] = Some(&s.response);
            }
        }
        reps.into_iter().flatten().collect()
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("probability vector has a negative or non-finite entry"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::invalid("weights do not have a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}
