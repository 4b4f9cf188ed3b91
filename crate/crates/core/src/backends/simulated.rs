//! A tiny, exactly enumerable language model driven by a scenario file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::backends::{Generator, ScoredToken, TokenPrefix};
use crate::error::{BackendError, Error, Result};
use crate::math::entropy_unchecked;
use crate::types::Response;

pub const SCENARIO_FORMAT: &str = "sebayes-scenario/1";
pub const MAX_VOCABULARY: usize = 32;
pub const MAX_DEPTH: usize = 6;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub prefix: Vec<String>,
    pub next: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeaningSpec {
    pub sequence: Vec<String>,
    pub meaning: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub transitions: Vec<TransitionSpec>,
    pub meanings: Vec<MeaningSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_meaning: Option<usize>,
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: String,
    pub vocabulary: Vec<String>,
    pub prompts: BTreeMap<String, PromptSpec>,
}

/// One compiled prompt: per-prefix categorical distributions and the
/// meaning of every terminal sequence.
#[derive(Debug, Clone)]
pub struct Scenario {
    transitions: HashMap<Vec<String>, Vec<ScoredToken>>,
    meanings: HashMap<Vec<String>, usize>,
    correct_meaning: Option<usize>,
}

impl Scenario {
    /// Builds a scenario from terminal sequences `(tokens, probability, meaning)`.
    /// Conditional distributions are derived from the prefix masses. The
    /// sequences must be prefix-free and their probabilities must sum to 1.
    pub fn from_sequences(sequences: &[(Vec<String>, f64, usize)], correct_meaning: Option<usize>) -> Result<PromptSpec> {
        let mut terminals = BTreeSet::new();
        let mut children: BTreeMap<Vec<String>, BTreeMap<String, f64>> = BTreeMap::new();
        for (tokens, p, _) in sequences {
            if tokens.is_empty() || !(*p > 0.0) {
                return Err(Error::invalid("sequences need at least one token and positive probability"));
            }
            for d in 0..tokens.len() {
                *children
                    .entry(tokens[..d].to_vec())
                    .or_default()
                    .entry(tokens[d].clone())
                    .or_insert(0.0) += p;
            }
            if !terminals.insert(tokens.clone()) {
                return Err(Error::invalid(format!("sequence {tokens:?} listed twice")));
            }
        }
        if let Some(t) = terminals.iter().find(|t| children.contains_key(*t)) {
            return Err(Error::invalid(format!("sequence {t:?} is a prefix of another")));
        }
        let total: f64 = sequences.iter().map(|s| s.1).sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("sequence probabilities sum to {total}")));
        }
        let transitions = children
            .into_iter()
            .map(|(prefix, next)| {
                let parent: f64 = next.values().sum();
                TransitionSpec {
                    prefix,
                    next: next.into_iter().map(|(t, m)| (t, m / parent)).collect(),
                }
            })
            .collect();
        let meanings = sequences
            .iter()
            .map(|(tokens, _, m)| MeaningSpec {
                sequence: tokens.clone(),
                meaning: *m,
            })
            .collect();
        let spec = PromptSpec {
            transitions,
            meanings,
            correct_meaning,
        };
        Scenario::compile(&spec, None)?;
        Ok(spec)
    }

    fn compile(spec: &PromptSpec, vocabulary: Option<&BTreeSet<&str>>) -> Result<Self> {
        let check_token = |t: &str| match vocabulary {
            Some(v) if !v.contains(t) => Err(Error::invalid(format!("token `{t}` is not in the vocabulary"))),
            _ => Ok(()),
        };
        let mut transitions = HashMap::new();
        for tr in &spec.transitions {
            if tr.prefix.len() >= MAX_DEPTH {
                return Err(Error::invalid(format!("prefix {:?} exceeds depth {MAX_DEPTH}", tr.prefix)));
            }
            let mut next = Vec::with_capacity(tr.next.len());
            let mut seen = BTreeSet::new();
            for (t, p) in &tr.next {
                check_token(t)?;
                if !(*p > 0.0 && *p <= 1.0) || !seen.insert(t.as_str()) {
                    return Err(Error::invalid(format!("bad entry `{t}`: {p} after {:?}", tr.prefix)));
                }
                next.push(ScoredToken::new(t.clone(), *p));
            }
            let sum: f64 = next.iter().map(|s| s.prob).sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::invalid(format!("distribution after {:?} sums to {sum}", tr.prefix)));
            }
            next.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
            if transitions.insert(tr.prefix.clone(), next).is_some() {
                return Err(Error::invalid(format!("duplicate prefix {:?}", tr.prefix)));
            }
        }
        if !transitions.contains_key(&Vec::new()) {
            return Err(Error::invalid("the empty prefix needs a distribution"));
        }
        let meanings: HashMap<Vec<String>, usize> =
            spec.meanings.iter().map(|m| (m.sequence.clone(), m.meaning)).collect();
        let scenario = Scenario {
            transitions,
            meanings,
            correct_meaning: spec.correct_meaning,
        };
        for (seq, _) in scenario.enumerate() {
            if !scenario.meanings.contains_key(&seq) {
                return Err(Error::invalid(format!("terminal sequence {seq:?} has no meaning")));
            }
        }
        Ok(scenario)
    }

    /// Every terminal sequence with its probability, in depth-first order.
    pub fn enumerate(&self) -> Vec<(Vec<String>, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![(Vec::<String>::new(), 1.0)];
        while let Some((prefix, p)) = stack.pop() {
            match self.transitions.get(&prefix) {
                Some(next) => {
                    for s in next.iter().rev() {
                        let mut seq = prefix.clone();
                        seq.push(s.token.clone());
                        stack.push((seq, p * s.prob));
                    }
                }
                None => out.push((prefix, p)),
            }
        }
        out
    }

    /// Exact probability of each meaning.
    pub fn meaning_distribution(&self) -> BTreeMap<usize, f64> {
        let mut dist = BTreeMap::new();
        for (seq, p) in self.enumerate() {
            *dist.entry(self.meanings[&seq]).or_insert(0.0) += p;
        }
        dist
    }

    pub fn exact_entropy(&self) -> f64 {
        entropy_unchecked(&self.meaning_distribution().into_values().collect::<Vec<_>>())
    }

    pub fn correct_meaning(&self) -> Option<usize> {
        self.correct_meaning
    }

    pub fn meaning_of(&self, tokens: &[String]) -> Result<usize, BackendError> {
        self.meanings
            .get(tokens)
            .copied()
            .ok_or_else(|| BackendError::InvalidRequest(format!("{tokens:?} is not a terminal sequence")))
    }

    fn distribution(&self, prefix: &[String]) -> &[ScoredToken] {
        self.transitions.get(prefix).map_or(&[], |v| v.as_slice())
    }

    fn extend(&self, tokens: &mut Vec<String>, logprobs: &mut Vec<f64>, rng: &mut dyn RngCore) {
        loop {
            let next = self.distribution(tokens);
            if next.is_empty() {
                return;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = &next[next.len() - 1];
            for s in next {
                acc += s.prob;
                if u < acc {
                    pick = s;
                    break;
                }
            }
            tokens.push(pick.token.clone());
            logprobs.push(pick.prob.ln());
        }
    }
}

/// Immutable set of simulated prompts.
#[derive(Debug, Clone)]
pub struct SimulatedLm {
    file: ScenarioFile,
    prompts: BTreeMap<String, Scenario>,
}

impl SimulatedLm {
    pub fn new(file: ScenarioFile) -> Result<Self> {
        if file.format != SCENARIO_FORMAT {
            return Err(Error::invalid(format!(
                "scenario format `{}`, expected `{SCENARIO_FORMAT}`",
                file.format
            )));
        }
        let vocabulary: BTreeSet<&str> = file.vocabulary.iter().map(String::as_str).collect();
        if vocabulary.len() != file.vocabulary.len() || vocabulary.len() > MAX_VOCABULARY {
            return Err(Error::invalid(format!(
                "vocabulary must hold at most {MAX_VOCABULARY} distinct tokens"
            )));
        }
        let mut prompts = BTreeMap::new();
        for (name, spec) in &file.prompts {
            let compiled = Scenario::compile(spec, Some(&vocabulary))
                .map_err(|e| Error::invalid(format!("prompt `{name}`: {e}")))?;
            prompts.insert(name.clone(), compiled);
        }
        Ok(Self { file, prompts })
    }

    /// Collects the vocabulary from the prompts themselves.
    pub fn from_prompts(prompts: BTreeMap<String, PromptSpec>) -> Result<Self> {
        let mut vocabulary = BTreeSet::new();
        for spec in prompts.values() {
            for tr in &spec.transitions {
                vocabulary.extend(tr.next.iter().map(|(t, _)| t.clone()));
            }
        }
        Self::new(ScenarioFile {
            format: SCENARIO_FORMAT.to_string(),
            vocabulary: vocabulary.into_iter().collect(),
            prompts,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("scenario file: {e}")))?;
        Self::new(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn prompt_names(&self) -> impl Iterator<Item = &str> {
        self.prompts.keys().map(String::as_str)
    }

    pub fn scenario(&self, prompt: &str) -> Result<&Scenario, BackendError> {
        self.prompts
            .get(prompt)
            .ok_or_else(|| BackendError::UnknownPrompt(prompt.to_string()))
    }

    /// Ancestral sample with exact token log-probabilities.
    pub fn simulated_sample(&self, prompt: &str, rng: &mut dyn RngCore) -> Result<Response, BackendError> {
        let scenario = self.scenario(prompt)?;
        let (mut tokens, mut logprobs) = (Vec::new(), Vec::new());
        scenario.extend(&mut tokens, &mut logprobs, rng);
        to_response(tokens, logprobs)
    }

    pub fn simulated_exact_entropy(&self, prompt: &str) -> Result<f64, BackendError> {
        Ok(self.scenario(prompt)?.exact_entropy())
    }

    pub fn meaning_distribution(&self, prompt: &str) -> Result<BTreeMap<usize, f64>, BackendError> {
        Ok(self.scenario(prompt)?.meaning_distribution())
    }
}

fn to_response(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Response, BackendError> {
    Response::from_words(tokens, logprobs).map_err(|e| BackendError::Malformed(e.to_string()))
}

impl Generator for SimulatedLm {
    fn sample_response(&self, prompt: &str, rng: &mut dyn RngCore) -> Result<Response, BackendError> {
        self.simulated_sample(prompt, rng)
    }

    fn next_token_distribution(&self, prompt: &str, prefix: &[String]) -> Result<Vec<ScoredToken>, BackendError> {
        Ok(self.scenario(prompt)?.distribution(prefix).to_vec())
    }

    fn continue_with(
        &self,
        prompt: &str,
        prefix: &TokenPrefix,
        forced: &ScoredToken,
        rng: &mut dyn RngCore,
    ) -> Result<Response, BackendError> {
        let scenario = self.scenario(prompt)?;
        let reported = scenario
            .distribution(&prefix.tokens)
            .iter()
            .find(|s| s.token == forced.token)
            .ok_or_else(|| {
                BackendError::InvalidRequest(format!("`{}` cannot follow {:?}", forced.token, prefix.tokens))
            })?;
        let mut tokens = prefix.tokens.clone();
        let mut logprobs = prefix.logprobs.clone();
        tokens.push(reported.token.clone());
        logprobs.push(reported.prob.ln());
        scenario.extend(&mut tokens, &mut logprobs, rng);
        to_response(tokens, logprobs)
    }
}
