use std::sync::Arc;

use crate::backends::simulated::SimulatedLm;
use crate::backends::EquivalenceOracle;
use crate::error::BackendError;
use crate::types::Response;

/// Lowercase, trim, collapse internal whitespace and strip terminal punctuation.
pub fn canonicalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .trim()
        .to_string()
}

/// Equivalence by equality of canonicalized text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl EquivalenceOracle for ExactMatch {
    fn equivalent(&self, _prompt: &str, a: &Response, b: &Response) -> Result<bool, BackendError> {
        Ok(canonicalize(a.text()) == canonicalize(b.text()))
    }
}

/// Equivalence read off a simulated model's meaning map.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    lm: Arc<SimulatedLm>,
}

impl GroundTruth {
    pub fn new(lm: Arc<SimulatedLm>) -> Self {
        Self { lm }
    }
}

impl EquivalenceOracle for GroundTruth {
    fn equivalent(&self, prompt: &str, a: &Response, b: &Response) -> Result<bool, BackendError> {
        let scenario = self.lm.scenario(prompt)?;
        Ok(scenario.meaning_of(a.tokens())? == scenario.meaning_of(b.tokens())?)
    }
}
