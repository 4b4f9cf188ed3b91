//! OpenAI-compatible completions client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::RngCore;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::backends::{Generator, ScoredToken, TokenPrefix};
use crate::error::BackendError;
use crate::types::Response;

pub const API_KEY_ENV: &str = "SEBAYES_API_KEY";

/// Probabilities a hair above 1 from service rounding are clamped instead
/// of rejected.
const LOGPROB_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; requests go to `{endpoint}/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub max_tokens: u32,
    /// Alternatives requested per position.
    pub top_logprobs: u32,
    pub max_in_flight: usize,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            max_tokens: 64,
            top_logprobs: 5,
            max_in_flight: 4,
            timeout_secs: 60.0,
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

impl HttpConfig {
    /// Fills `api_key` from the environment when it is set.
    pub fn with_env_credentials(mut self) -> Self {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub(crate) struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Retrying JSON POST shared by the completions and NLI clients.
#[derive(Debug)]
pub(crate) struct JsonTransport {
    agent: ureq::Agent,
    bearer: Option<String>,
    max_attempts: u32,
    backoff_base: Duration,
    limiter: Limiter,
}

impl JsonTransport {
    pub(crate) fn new(
        bearer: Option<String>,
        timeout_secs: f64,
        max_attempts: u32,
        backoff_base_ms: u64,
        max_in_flight: usize,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(timeout_secs.max(0.001))))
            .build()
            .new_agent();
        Self {
            agent,
            bearer,
            max_attempts: max_attempts.max(1),
            backoff_base: Duration::from_millis(backoff_base_ms),
            limiter: Limiter::new(max_in_flight),
        }
    }

    pub(crate) fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.limiter.acquire();
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.saturating_pow(attempt - 1));
            }
            let mut req = self.agent.post(url);
            if let Some(key) = &self.bearer {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    match status {
                        200..=299 => {
                            return serde_json::from_str(&text)
                                .map_err(|e| BackendError::Malformed(format!("body is not JSON: {e}")));
                        }
                        401 | 403 => {
                            return Err(BackendError::Auth {
                                endpoint: url.to_string(),
                                status,
                            })
                        }
                        429 | 500..=599 => last = format!("status {status}: {}", truncate(&text)),
                        _ => {
                            return Err(BackendError::Status {
                                status,
                                body: truncate(&text),
                            })
                        }
                    }
                }
                Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed)) => {
                    last = e.to_string();
                }
                Err(e) => return Err(BackendError::Malformed(e.to_string())),
            }
        }
        Err(BackendError::Retriable {
            attempts: self.max_attempts,
            message: last,
        })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Generator backed by a remote completions endpoint.
#[derive(Debug)]
pub struct HttpGenerator {
    config: HttpConfig,
    transport: JsonTransport,
}

#[derive(Debug)]
struct Completion {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
    /// Alternatives at the first generated position.
    first_alternatives: Option<Vec<ScoredToken>>,
}

impl HttpGenerator {
    pub fn new(config: HttpConfig) -> Self {
        let transport = JsonTransport::new(
            config.api_key.clone(),
            config.timeout_secs,
            config.max_attempts,
            config.backoff_base_ms,
            config.max_in_flight,
        );
        Self { config, transport }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<Completion, BackendError> {
        let body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": 1.0,
            "logprobs": self.config.top_logprobs,
            "n": 1,
        });
        let url = format!("{}/completions", self.config.endpoint.trim_end_matches('/'));
        parse_completion(&self.transport.post(&url, &body)?)
    }
}

fn missing(field: &str) -> BackendError {
    BackendError::MissingCapability {
        field: field.to_string(),
    }
}

fn checked_logprob(v: &Value) -> Result<f64, BackendError> {
    let lp = v
        .as_f64()
        .ok_or_else(|| BackendError::Malformed(format!("log-probability {v} is not a number")))?;
    if !lp.is_finite() || lp > LOGPROB_SLACK {
        return Err(BackendError::Malformed(format!("log-probability {lp} out of range")));
    }
    Ok(lp.min(0.0))
}

fn parse_completion(reply: &Value) -> Result<Completion, BackendError> {
    let choice = reply
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Malformed("reply has no choices".into()))?;
    let lp = match choice.get("logprobs") {
        Some(v) if !v.is_null() => v,
        _ => return Err(missing("logprobs")),
    };
    let tokens = lp
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("logprobs.tokens"))?;
    let token_logprobs = lp
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("logprobs.token_logprobs"))?;
    if tokens.len() != token_logprobs.len() {
        return Err(BackendError::Malformed("tokens and token_logprobs differ in length".into()));
    }
    let tokens = tokens
        .iter()
        .map(|t| t.as_str().map(String::from).ok_or_else(|| BackendError::Malformed("non-string token".into())))
        .collect::<Result<Vec<_>, _>>()?;
    let logprobs = token_logprobs.iter().map(checked_logprob).collect::<Result<Vec<_>, _>>()?;
    let first_alternatives = match lp.get("top_logprobs").and_then(Value::as_array) {
        Some(top) => match top.first() {
            Some(Value::Object(map)) => {
                let mut alts = map
                    .iter()
                    .map(|(t, v)| Ok(ScoredToken::new(t.clone(), checked_logprob(v)?.exp())))
                    .collect::<Result<Vec<_>, BackendError>>()?;
                alts.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
                Some(alts)
            }
            Some(Value::Null) | None => Some(Vec::new()),
            Some(other) => return Err(BackendError::Malformed(format!("top_logprobs entry {other}"))),
        },
        None => None,
    };
    Ok(Completion {
        tokens,
        logprobs,
        first_alternatives,
    })
}

fn build_response(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Response, BackendError> {
    let text = tokens.concat();
    Response::new(tokens, logprobs, text).map_err(|e| BackendError::Malformed(e.to_string()))
}

impl Generator for HttpGenerator {
    fn sample_response(&self, prompt: &str, _rng: &mut dyn RngCore) -> Result<Response, BackendError> {
        let c = self.complete(prompt, self.config.max_tokens)?;
        if c.tokens.is_empty() {
            return Err(BackendError::Malformed("empty completion".into()));
        }
        build_response(c.tokens, c.logprobs)
    }

    fn next_token_distribution(&self, prompt: &str, prefix: &[String]) -> Result<Vec<ScoredToken>, BackendError> {
        let c = self.complete(&format!("{prompt}{}", prefix.concat()), 1)?;
        if c.tokens.is_empty() {
            return Ok(Vec::new());
        }
        c.first_alternatives.ok_or_else(|| missing("logprobs.top_logprobs"))
    }

    fn continue_with(
        &self,
        prompt: &str,
        prefix: &TokenPrefix,
        forced: &ScoredToken,
        _rng: &mut dyn RngCore,
    ) -> Result<Response, BackendError> {
        if !(forced.prob > 0.0 && forced.prob <= 1.0) {
            return Err(BackendError::InvalidRequest(format!("forced probability {}", forced.prob)));
        }
        let used = prefix.tokens.len() as u32 + 1;
        let mut tokens = prefix.tokens.clone();
        let mut logprobs = prefix.logprobs.clone();
        tokens.push(forced.token.clone());
        logprobs.push(forced.prob.ln());
        if used < self.config.max_tokens {
            let c = self.complete(&format!("{prompt}{}", tokens.concat()), self.config.max_tokens - used)?;
            tokens.extend(c.tokens);
            logprobs.extend(c.logprobs);
        }
        build_response(tokens, logprobs)
    }
}
