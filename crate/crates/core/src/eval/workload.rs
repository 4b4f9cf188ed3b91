use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backends::{Scenario, SimulatedLm};
use crate::error::Result;
use crate::eval::QueryRecord;
use crate::math::dirichlet_sample;

const ANSWERS: [&str; 16] = [
    "paris", "london", "rome", "berlin", "madrid", "vienna", "oslo", "lisbon", "prague", "dublin", "athens",
    "warsaw", "cairo", "tokyo", "lima", "quito",
];
const QUALIFIERS: [&str; 6] = ["city", "town", "capital", "indeed", "surely", "probably"];
const MAX_MEANINGS: usize = 4;
const MAX_FORMS: usize = 3;
/// Chance that the designated correct meaning is the most probable one.
const CORRECT_IS_MODE: f64 = 0.85;
const MIN_PROB: f64 = 0.01;

/// A simulated model with one prompt per record, plus exact entropies.
#[derive(Debug, Clone)]
pub struct Workload {
    pub lm: SimulatedLm,
    pub records: Vec<QueryRecord>,
    pub exact_entropy: BTreeMap<String, f64>,
}

fn floored_dirichlet(k: usize, concentration: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let p = dirichlet_sample(&vec![concentration; k], rng)?.into_inner();
    let floored: Vec<f64> = p.iter().map(|v| v.max(MIN_PROB)).collect();
    let total: f64 = floored.iter().sum();
    Ok(floored.into_iter().map(|v| v / total).collect())
}

/// Synthetic mixture of prompts with 1 to 4 meanings, each spoken in 1 to 3
/// surface forms. A record is labeled a hallucination when its correct
/// meaning has probability below one half.
pub fn generate_workload(n_prompts: usize, seed: u64) -> Result<Workload> {
    let mut prompts = BTreeMap::new();
    let mut records = Vec::with_capacity(n_prompts);
    for i in 0..n_prompts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let k = rng.random_range(1..=MAX_MEANINGS);
        let meaning_probs = if k == 1 { vec![1.0] } else { floored_dirichlet(k, 0.7, &mut rng)? };
        let mut answers = ANSWERS.to_vec();
        answers.shuffle(&mut rng);
        let mut sequences = Vec::new();
        for (m, pm) in meaning_probs.iter().enumerate() {
            let forms = rng.random_range(1..=MAX_FORMS);
            if forms == 1 {
                sequences.push((vec![answers[m].to_string()], *pm, m));
                continue;
            }
            let split = floored_dirichlet(forms, 1.0, &mut rng)?;
            let mut quals = QUALIFIERS.to_vec();
            quals.shuffle(&mut rng);
            for (q, ps) in quals.iter().zip(split) {
                sequences.push((vec![answers[m].to_string(), q.to_string()], pm * ps, m));
            }
        }
        let mode = (0..k).fold(0, |b, j| if meaning_probs[j] > meaning_probs[b] { j } else { b });
        let correct = if k == 1 || rng.random::<f64>() < CORRECT_IS_MODE {
            mode
        } else {
            let others: Vec<usize> = (0..k).filter(|j| *j != mode).collect();
            others[rng.random_range(0..others.len())]
        };
        let prompt = format!("q{i:04}");
        prompts.insert(prompt.clone(), Scenario::from_sequences(&sequences, Some(correct))?);
        records.push(QueryRecord {
            id: format!("p{i:04}"),
            prompt,
            label: Some(u8::from(meaning_probs[correct] < 0.5)),
            reference: Some(answers[correct].to_string()),
        });
    }
    let lm = SimulatedLm::from_prompts(prompts)?;
    let exact_entropy = records
        .iter()
        .map(|r| Ok((r.id.clone(), lm.simulated_exact_entropy(&r.prompt)?)))
        .collect::<Result<_>>()?;
    Ok(Workload {
        lm,
        records,
        exact_entropy,
    })
}
