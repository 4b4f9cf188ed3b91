//! Client for an NLI classification service.
//!
//! Wire format: `POST {base_url}/v1/nli` with `{"premise", "hypothesis"}`,
//! answered by `{"label": "entailment" | "neutral" | "contradiction",
//! "scores": [entailment, neutral, contradiction]}`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::http::JsonTransport;
use crate::backends::EquivalenceOracle;
use crate::error::BackendError;
use crate::types::Response;

pub const NLI_TOKEN_ENV: &str = "SEBAYES_NLI_TOKEN";
pub const NLI_PATH: &str = "/v1/nli";
const SCORE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliResponse {
    pub label: NliLabel,
    /// Entailment, neutral, contradiction.
    pub scores: [f64; 3],
}

impl NliResponse {
    fn validate(self) -> Result<Self, BackendError> {
        let sum: f64 = self.scores.iter().sum();
        if self.scores.iter().any(|s| !(0.0..=1.0).contains(s)) || (sum - 1.0).abs() > SCORE_TOLERANCE {
            return Err(BackendError::Malformed(format!("NLI scores {:?} are not normalized", self.scores)));
        }
        let argmax = (0..3).fold(0, |b, i| if self.scores[i] > self.scores[b] { i } else { b });
        let expected = [NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction][argmax];
        if self.label != expected {
            return Err(BackendError::Malformed(format!(
                "NLI label {:?} disagrees with scores {:?}",
                self.label, self.scores
            )));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NliConfig {
    pub base_url: String,
    #[serde(skip)]
    pub token: Option<String>,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for NliConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            token: None,
            timeout_secs: 30.0,
            max_attempts: 3,
            backoff_base_ms: 250,
            max_in_flight: 4,
        }
    }
}

impl NliConfig {
    pub fn with_env_credentials(mut self) -> Self {
        if let Ok(t) = std::env::var(NLI_TOKEN_ENV) {
            if !t.is_empty() {
                self.token = Some(t);
            }
        }
        self
    }
}

#[derive(Debug)]
pub struct NliClient {
    url: String,
    transport: JsonTransport,
}

impl NliClient {
    pub fn new(config: NliConfig) -> Self {
        Self {
            url: format!("{}{NLI_PATH}", config.base_url.trim_end_matches('/')),
            transport: JsonTransport::new(
                config.token,
                config.timeout_secs,
                config.max_attempts,
                config.backoff_base_ms,
                config.max_in_flight,
            ),
        }
    }

    pub fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliResponse, BackendError> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(BackendError::InvalidRequest("premise and hypothesis must be nonempty".into()));
        }
        let reply = self
            .transport
            .post(&self.url, &json!({"premise": premise, "hypothesis": hypothesis}))?;
        serde_json::from_value::<NliResponse>(reply)
            .map_err(|e| BackendError::Malformed(format!("NLI reply: {e}")))?
            .validate()
    }
}

/// Equivalence by bidirectional entailment between texts.
#[derive(Debug)]
pub struct NliOracle {
    client: NliClient,
}

impl NliOracle {
    pub fn new(client: NliClient) -> Self {
        Self { client }
    }

    pub fn texts_equivalent(&self, a: &str, b: &str) -> Result<bool, BackendError> {
        match (a.trim().is_empty(), b.trim().is_empty()) {
            (true, true) => return Ok(true),
            (true, false) | (false, true) => return Ok(false),
            _ => {}
        }
        if a == b {
            return Ok(true);
        }
        Ok(self.client.classify(a, b)?.label == NliLabel::Entailment
            && self.client.classify(b, a)?.label == NliLabel::Entailment)
    }
}

impl EquivalenceOracle for NliOracle {
    fn equivalent(&self, _prompt: &str, a: &Response, b: &Response) -> Result<bool, BackendError> {
        self.texts_equivalent(a.text(), b.text())
    }
}
