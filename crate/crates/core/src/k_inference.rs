//! Prior and posterior over the number of meanings `K`.
//!
//! The prior is Poisson with a rate elicited from the importance-weighted
//! perplexity of the initial responses, restricted to `1..=k_max` with
//! `k_max = max(K_obs, ceil(3 λ))`.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::backends::Similarity;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::types::Response;

/// Per-token importance `1 − sim(r, r without token j)` for one response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenImportanceProfile {
    weights: Vec<f64>,
}

impl TokenImportanceProfile {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("importance profile is empty"));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("importance weights must lie in [0, 1]"));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn token_importance_weights(resp: &Response, sim: &dyn Similarity) -> TokenImportanceProfile {
    let full = resp.text();
    let weights = (0..resp.len())
        .map(|j| {
            let reduced = resp.text_without_token(j);
            let s = if reduced.trim().is_empty() {
                0.0
            } else {
                sim.similarity(full, &reduced)
            };
            (1.0 - s.clamp(0.0, 1.0)).clamp(0.0, 1.0)
        })
        .collect();
    TokenImportanceProfile { weights }
}

/// `exp(−Σ w_j ln p_j / Σ w_j)`; an all-zero profile falls back to uniform
/// weights, i.e. the ordinary perplexity.
pub fn weighted_perplexity(resp: &Response, profile: &TokenImportanceProfile) -> Result<f64> {
    if profile.len() != resp.len() {
        return Err(Error::invalid(format!(
            "profile has {} weights for {} tokens",
            profile.len(),
            resp.len()
        )));
    }
    let total: f64 = profile.weights.iter().sum();
    let nll = if total > 0.0 {
        -profile
            .weights
            .iter()
            .zip(resp.token_logprobs())
            .map(|(w, lp)| w * lp)
            .sum::<f64>()
            / total
    } else {
        -resp.token_logprobs().iter().sum::<f64>() / resp.len() as f64
    };
    Ok(nll.max(0.0).exp())
}

/// Poisson rate: the mean weighted perplexity of the initial responses.
pub fn estimate_lambda(initial: &[Response], sim: &dyn Similarity) -> Result<f64> {
    if initial.is_empty() {
        return Err(Error::invalid("at least one initial response is needed"));
    }
    let mut total = 0.0;
    for r in initial {
        total += weighted_perplexity(r, &token_importance_weights(r, sim))?;
    }
    Ok(total / initial.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPrior {
    pub lambda: f64,
    pub k_max: usize,
    /// `probs[i]` is the mass of `K = i + 1`.
    pub probs: Vec<f64>,
}

impl KPrior {
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 || k > self.k_max {
            0.0
        } else {
            self.probs[k - 1]
        }
    }
}

/// Truncated Poisson prior over `1..=max(k_obs, ceil(3 λ))`.
pub fn k_prior(lambda: f64, k_obs: usize) -> Result<KPrior> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("Poisson rate {lambda} must be positive")));
    }
    if k_obs == 0 {
        return Err(Error::invalid("at least one meaning must be observed"));
    }
    let k_max = k_obs.max((3.0 * lambda).ceil() as usize);
    let log_mass: Vec<f64> = (1..=k_max)
        .map(|k| k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0))
        .collect();
    let lse = log_sum_exp(&log_mass);
    Ok(KPrior {
        lambda,
        k_max,
        probs: log_mass.iter().map(|l| (l - lse).exp()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPosterior {
    /// Consecutive hypotheses `k_obs..=k_max`.
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
    pub log_evidence_per_k: Vec<f64>,
}

impl KPosterior {
    pub fn prob(&self, k: usize) -> f64 {
        self.support
            .iter()
            .position(|&s| s == k)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Most probable `K`, the smallest on ties.
    pub fn map_k(&self) -> usize {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        self.support[best]
    }
}

/// Bayes' rule over `k_obs..=k_max`, normalized in log space.
pub fn k_posterior(prior: &KPrior, log_evidence: &BTreeMap<usize, f64>, k_obs: usize) -> Result<KPosterior> {
    if k_obs == 0 || k_obs > prior.k_max {
        return Err(Error::invalid(format!(
            "observed {k_obs} meanings but the prior stops at {}",
            prior.k_max
        )));
    }
    let support: Vec<usize> = (k_obs..=prior.k_max).collect();
    let mut evidence = Vec::with_capacity(support.len());
    for k in &support {
        let e = *log_evidence
            .get(k)
            .ok_or_else(|| Error::invalid(format!("missing evidence for K = {k}")))?;
        if e.is_nan() || e == f64::INFINITY {
            return Err(Error::invalid(format!("evidence for K = {k} is {e}")));
        }
        evidence.push(e);
    }
    let log_joint: Vec<f64> = support
        .iter()
        .zip(&evidence)
        .map(|(k, e)| e + prior.prob(*k).ln())
        .collect();
    let lse = log_sum_exp(&log_joint);
    if lse == f64::NEG_INFINITY {
        return Err(Error::ZeroEvidence);
    }
    Ok(KPosterior {
        probs: log_joint.iter().map(|l| (l - lse).exp()).collect(),
        support,
        log_evidence_per_k: evidence,
    })
}
