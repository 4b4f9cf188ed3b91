//! Guided exploration: perturb a high-importance token of an existing
//! response and let the generator continue from there.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::Serialize;

use crate::backends::{Generator, ScoredToken, TokenPrefix};
use crate::error::BackendError;
use crate::k_inference::TokenImportanceProfile;
use crate::types::Response;

/// Token positions by descending importance, leftmost first on ties.
pub fn rank_positions(profile: &TokenImportanceProfile) -> Vec<usize> {
    let w = profile.weights();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    order
}

/// The `k` most probable next tokens after `prefix`, excluding `original`.
pub fn top_k_alternatives(
    generator: &dyn Generator,
    prompt: &str,
    prefix: &[String],
    original: &str,
    k: usize,
) -> Result<Vec<ScoredToken>, BackendError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut dist: Vec<ScoredToken> = generator
        .next_token_distribution(prompt, prefix)?
        .into_iter()
        .filter(|s| s.token != original && s.prob > 0.0)
        .collect();
    dist.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
    dist.truncate(k);
    Ok(dist)
}

/// Exploration state for one base response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationPlan {
    base_sample_index: usize,
    position_order: Vec<usize>,
    used: BTreeSet<(usize, String)>,
    #[serde(skip)]
    alternatives: BTreeMap<usize, Vec<ScoredToken>>,
    /// Positions before this index in `position_order` are exhausted.
    #[serde(skip)]
    cursor: usize,
}

impl PerturbationPlan {
    pub fn new(base_sample_index: usize, profile: &TokenImportanceProfile) -> Self {
        Self {
            base_sample_index,
            position_order: rank_positions(profile),
            used: BTreeSet::new(),
            alternatives: BTreeMap::new(),
            cursor: 0,
        }
    }

    pub fn base_sample_index(&self) -> usize {
        self.base_sample_index
    }

    pub fn position_order(&self) -> &[usize] {
        &self.position_order
    }

    pub fn used(&self) -> &BTreeSet<(usize, String)> {
        &self.used
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidedSample {
    pub response: Response,
    pub perturbed_position: usize,
    pub perturbed_token: String,
    /// Reported conditional probability of the substituted token.
    pub importance_weight: f64,
    pub base_sample_index: usize,
}

/// Emits the next unused perturbation of `base`, or `None` once every
/// position has run out of alternatives.
pub fn guided_generate(
    generator: &dyn Generator,
    prompt: &str,
    base: &Response,
    plan: &mut PerturbationPlan,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<Option<GuidedSample>, BackendError> {
    if plan.position_order.len() != base.len() {
        return Err(BackendError::InvalidRequest(format!(
            "plan covers {} positions, base has {}",
            plan.position_order.len(),
            base.len()
        )));
    }
    while plan.cursor < plan.position_order.len() {
        let pos = plan.position_order[plan.cursor];
        if let Entry::Vacant(slot) = plan.alternatives.entry(pos) {
            slot.insert(top_k_alternatives(generator, prompt, &base.tokens()[..pos], &base.tokens()[pos], k)?);
        }
        let next = plan.alternatives[&pos]
            .iter()
            .find(|a| !plan.used.contains(&(pos, a.token.clone())))
            .cloned();
        let Some(alt) = next else {
            plan.cursor += 1;
            continue;
        };
        if !(alt.prob > 0.0 && alt.prob <= 1.0) {
            return Err(BackendError::Malformed(format!(
                "alternative `{}` has probability {}",
                alt.token, alt.prob
            )));
        }
        plan.used.insert((pos, alt.token.clone()));
        let response = generator.continue_with(prompt, &TokenPrefix::of(base, pos), &alt, rng)?;
        return Ok(Some(GuidedSample {
            response,
            perturbed_position: pos,
            perturbed_token: alt.token,
            importance_weight: alt.prob,
            base_sample_index: plan.base_sample_index,
        }));
    }
    Ok(None)
}
