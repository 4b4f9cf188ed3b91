use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EntropyEstimate, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub id: String,
    pub prompt: String,
    /// 1 marks a hallucination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub id: String,
    pub entropy: f64,
    pub variance: f64,
    pub samples_used: usize,
    pub k_map: usize,
    pub terminated_by: Termination,
    pub lambda_hat: f64,
}

impl ResultRecord {
    pub fn from_estimate(id: &str, e: &EntropyEstimate) -> Self {
        Self {
            id: id.to_string(),
            entropy: e.mean,
            variance: e.variance,
            samples_used: e.samples_used,
            k_map: e.k_map(),
            terminated_by: e.terminated_by,
            lambda_hat: e.lambda_hat,
        }
    }
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str, id_of: impl Fn(&T) -> &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(line).map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))?;
        if !ids.insert(id_of(&rec).to_string()) {
            return Err(Error::invalid(format!("line {}: duplicate id `{}`", i + 1, id_of(&rec))));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_dataset(text: &str) -> Result<Vec<QueryRecord>> {
    let records = parse_lines(text, |r: &QueryRecord| &r.id)?;
    if let Some(r) = records.iter().find(|r| matches!(r.label, Some(l) if l > 1)) {
        return Err(Error::invalid(format!("record `{}`: label must be 0 or 1", r.id)));
    }
    Ok(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    parse_dataset(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRecord>> {
    parse_lines(text, |r: &ResultRecord| &r.id)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    parse_results(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_results(mut w: impl Write, results: &[ResultRecord]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}
