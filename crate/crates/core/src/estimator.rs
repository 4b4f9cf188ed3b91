//! Hierarchical entropy estimate and the adaptive sampling loop.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{classify_incremental, EquivalenceOracle, Generator, Similarity};
use crate::error::{BackendError, Error, Result};
use crate::exploration::{guided_generate, PerturbationPlan};
use crate::k_inference::{k_posterior, k_prior, token_importance_weights, weighted_perplexity, KPosterior, TokenImportanceProfile};
use crate::math::entropy_unchecked;
use crate::posterior::{evaluate_hypothesis, HypothesisStats, PosteriorSettings, Proposal, DEFAULT_DRAWS};
use crate::types::{EstimationDataset, Response, SemanticSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Stop once the posterior entropy variance is at or below this (nats²).
    pub gamma: f64,
    /// Direct samples drawn before the loop.
    pub n0: usize,
    /// Alternatives tried per token position.
    pub top_k: usize,
    pub alpha0: f64,
    pub n_max: usize,
    pub snis_draws: usize,
    pub seed: u64,
    pub marginal_prior_only: bool,
    /// Draw loop samples by guided exploration; `false` samples directly.
    pub guided: bool,
    pub proposal: Proposal,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            n0: 1,
            top_k: 3,
            alpha0: 1.0,
            n_max: 10,
            snis_draws: DEFAULT_DRAWS,
            seed: 0,
            marginal_prior_only: false,
            guided: true,
            proposal: Proposal::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if !(self.gamma > 0.0) {
            return fail(format!("gamma = {} must be positive", self.gamma));
        }
        if self.n0 < 1 {
            return fail("n0 must be at least 1".into());
        }
        if self.top_k < 1 {
            return fail("top_k must be at least 1".into());
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return fail(format!("alpha0 = {} must be positive", self.alpha0));
        }
        if self.n_max < self.n0 {
            return fail(format!("n_max = {} is below n0 = {}", self.n_max, self.n0));
        }
        if self.snis_draws < crate::posterior::MIN_DRAWS {
            return fail(format!(
                "snis_draws = {} is below the minimum {}",
                self.snis_draws,
                crate::posterior::MIN_DRAWS
            ));
        }
        Ok(())
    }

    fn posterior_settings(&self) -> PosteriorSettings {
        PosteriorSettings {
            alpha0: self.alpha0,
            draws: self.snis_draws,
            marginal_prior_only: self.marginal_prior_only,
            proposal: self.proposal,
        }
    }
}

/// Dirichlet parameters `alpha0 + n_j` for hypothesis `k`, rescaled so their
/// total equals `k alpha0 + N` with `N` the raw sample count. With unit
/// weights the scaling is the identity and is skipped.
pub fn scaled_alphas(dataset: &EstimationDataset, k: usize, alpha0: f64) -> Vec<f64> {
    let mut alpha = vec![alpha0; k];
    for (a, n) in alpha.iter_mut().zip(dataset.effective_counts()) {
        *a += n;
    }
    let effective: f64 = dataset.effective_counts().iter().sum();
    let n = dataset.raw_count() as f64;
    if effective == n {
        return alpha;
    }
    let factor = (k as f64 * alpha0 + n) / alpha.iter().sum::<f64>();
    alpha.iter_mut().for_each(|a| *a *= factor);
    alpha
}

/// Appends `sample` and returns the scaled parameters at `K = K_obs`.
pub fn update_with_weighted_sample(
    dataset: &mut EstimationDataset,
    sample: SemanticSample,
    alpha0: f64,
) -> Result<Vec<f64>> {
    if !(alpha0 > 0.0) {
        return Err(Error::invalid("alpha0 must be positive"));
    }
    dataset.push(sample)?;
    Ok(scaled_alphas(dataset, dataset.k_obs(), alpha0))
}

/// Mixture moments over `K`, with the two variance terms kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalMoments {
    pub mean: f64,
    pub variance: f64,
    /// Expected conditional variance.
    pub within: f64,
    /// Variance of the conditional means.
    pub between: f64,
}

pub fn total_moments(kpost: &KPosterior, per_k: &[(f64, f64)]) -> Result<TotalMoments> {
    if per_k.len() != kpost.probs.len() {
        return Err(Error::invalid(format!(
            "{} conditional moments for {} hypotheses",
            per_k.len(),
            kpost.probs.len()
        )));
    }
    if per_k.iter().any(|(m, v)| !m.is_finite() || !(*v >= 0.0)) {
        return Err(Error::invalid("conditional moments must be finite with nonnegative variance"));
    }
    let mean: f64 = kpost.probs.iter().zip(per_k).map(|(p, (m, _))| p * m).sum();
    let within: f64 = kpost.probs.iter().zip(per_k).map(|(p, (_, v))| p * v).sum();
    let between: f64 = kpost
        .probs
        .iter()
        .zip(per_k)
        .map(|(p, (m, _))| p * (m - mean) * (m - mean))
        .sum();
    Ok(TotalMoments {
        mean,
        variance: within + between,
        within,
        between,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    Budget,
}

/// State after each posterior evaluation of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub samples_used: usize,
    pub mean: f64,
    pub variance: f64,
    pub within: f64,
    pub between: f64,
    pub k_map: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub mean: f64,
    pub variance: f64,
    pub within: f64,
    pub between: f64,
    pub samples_used: usize,
    pub k_posterior: KPosterior,
    pub per_k_stats: Vec<HypothesisStats>,
    pub lambda_hat: f64,
    pub terminated_by: Termination,
    pub trajectory: Vec<TrajectoryPoint>,
    pub dataset: EstimationDataset,
}

impl EntropyEstimate {
    pub fn k_map(&self) -> usize {
        self.k_posterior.map_k()
    }

    /// `(K, conditional mean, conditional variance)` per hypothesis.
    pub fn conditional_moments(&self) -> Vec<(usize, f64, f64)> {
        self.per_k_stats.iter().map(|s| (s.k, s.mean, s.variance)).collect()
    }
}

/// Where a run with threshold `gamma` and the same seed and cap stops.
///
/// The random stream of a run never depends on `gamma`, so a run taken to
/// its cap contains every shorter run as a prefix.
pub fn replay(trajectory: &[TrajectoryPoint], gamma: f64) -> (TrajectoryPoint, Termination) {
    match trajectory.iter().find(|p| p.variance <= gamma) {
        Some(p) => (*p, Termination::Threshold),
        None => (*trajectory.last().expect("trajectory is never empty"), Termination::Budget),
    }
}

struct Evaluation {
    kpost: KPosterior,
    stats: Vec<HypothesisStats>,
    moments: TotalMoments,
}

fn evaluate(dataset: &EstimationDataset, lambda: f64, settings: &PosteriorSettings, seed: u64) -> Result<Evaluation> {
    let k_obs = dataset.k_obs();
    let prior = k_prior(lambda, k_obs)?;
    let mut stats = Vec::with_capacity(prior.k_max + 1 - k_obs);
    let mut evidence = BTreeMap::new();
    for k in k_obs..=prior.k_max {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let s = evaluate_hypothesis(k, dataset, settings, &mut rng)?;
        evidence.insert(k, s.log_evidence);
        stats.push(s);
    }
    let kpost = k_posterior(&prior, &evidence, k_obs)?;
    let per_k: Vec<(f64, f64)> = stats.iter().map(|s| (s.mean, s.variance)).collect();
    let moments = total_moments(&kpost, &per_k)?;
    Ok(Evaluation { kpost, stats, moments })
}

struct Run<'a> {
    prompt: &'a str,
    generator: &'a dyn Generator,
    oracle: &'a dyn EquivalenceOracle,
    dataset: EstimationDataset,
}

impl Run<'_> {
    fn interrupted(&self, source: BackendError) -> Error {
        Error::Interrupted {
            source,
            partial: Box::new(self.dataset.clone()),
        }
    }

    fn classify(&self, resp: &Response) -> Result<usize> {
        let reps = self.dataset.representatives();
        Ok(classify_incremental(self.oracle, self.prompt, &reps, resp)?)
    }

    fn direct(&self, rng: &mut ChaCha8Rng) -> Result<Response> {
        self.generator
            .sample_response(self.prompt, rng as &mut dyn RngCore)
            .map_err(|e| self.interrupted(e))
    }
}

/// Adaptive estimate of the semantic entropy of `prompt`.
pub fn estimate_semantic_entropy(
    prompt: &str,
    generator: &dyn Generator,
    oracle: &dyn EquivalenceOracle,
    sim: &dyn Similarity,
    config: &EstimatorConfig,
) -> Result<EntropyEstimate> {
    config.validate()?;
    let settings = config.posterior_settings();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut run = Run {
        prompt,
        generator,
        oracle,
        dataset: EstimationDataset::new(),
    };

    let mut profiles: Vec<Option<TokenImportanceProfile>> = Vec::new();
    let mut plans: Vec<Option<PerturbationPlan>> = Vec::new();
    let mut wpl_total = 0.0;
    for _ in 0..config.n0 {
        let resp = run.direct(&mut rng)?;
        let profile = token_importance_weights(&resp, sim);
        wpl_total += weighted_perplexity(&resp, &profile)?;
        let id = run.classify(&resp)?;
        update_with_weighted_sample(&mut run.dataset, SemanticSample::direct(resp, id), config.alpha0)?;
        profiles.push(Some(profile));
        plans.push(None);
    }
    let lambda_hat = wpl_total / config.n0 as f64;

    let mut eval = evaluate(&run.dataset, lambda_hat, &settings, rng.next_u64())?;
    let mut trajectory = vec![point(&run.dataset, &eval)];

    while eval.moments.variance > config.gamma && run.dataset.raw_count() < config.n_max {
        let base_index = rng.random_range(0..run.dataset.raw_count());
        let mut guided = None;
        if config.guided {
            let base = run.dataset.samples()[base_index].response.clone();
            if profiles[base_index].is_none() {
                profiles[base_index] = Some(token_importance_weights(&base, sim));
            }
            let plan = plans[base_index]
                .get_or_insert_with(|| PerturbationPlan::new(base_index, profiles[base_index].as_ref().unwrap()));
            guided = guided_generate(generator, prompt, &base, plan, config.top_k, &mut rng)
                .map_err(|e| run.interrupted(e))?;
        }
        let sample = match guided {
            Some(g) => {
                let id = run.classify(&g.response)?;
                SemanticSample::guided(g.response, id, g.importance_weight)?
            }
            None => {
                let resp = run.direct(&mut rng)?;
                let id = run.classify(&resp)?;
                SemanticSample::direct(resp, id)
            }
        };
        update_with_weighted_sample(&mut run.dataset, sample, config.alpha0)?;
        profiles.push(None);
        plans.push(None);
        eval = evaluate(&run.dataset, lambda_hat, &settings, rng.next_u64())?;
        trajectory.push(point(&run.dataset, &eval));
    }

    let terminated_by = if eval.moments.variance <= config.gamma {
        Termination::Threshold
    } else {
        Termination::Budget
    };
    Ok(EntropyEstimate {
        mean: eval.moments.mean,
        variance: eval.moments.variance,
        within: eval.moments.within,
        between: eval.moments.between,
        samples_used: run.dataset.raw_count(),
        k_posterior: eval.kpost,
        per_k_stats: eval.stats,
        lambda_hat,
        terminated_by,
        trajectory,
        dataset: run.dataset,
    })
}

fn point(dataset: &EstimationDataset, eval: &Evaluation) -> TrajectoryPoint {
    TrajectoryPoint {
        samples_used: dataset.raw_count(),
        mean: eval.moments.mean,
        variance: eval.moments.variance,
        within: eval.moments.within,
        between: eval.moments.between,
        k_map: eval.kpost.map_k(),
    }
}

/// Plug-in entropy of the cluster frequencies of `n` direct samples.
pub fn baseline_semantic_entropy(
    prompt: &str,
    generator: &dyn Generator,
    oracle: &dyn EquivalenceOracle,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("the baseline needs at least one sample"));
    }
    let mut reps: Vec<Response> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for _ in 0..n {
        let resp = generator.sample_response(prompt, rng)?;
        let refs: Vec<&Response> = reps.iter().collect();
        let id = classify_incremental(oracle, prompt, &refs, &resp)?;
        if id == reps.len() {
            reps.push(resp);
            counts.push(0.0);
        }
        counts[id] += 1.0;
    }
    let freqs: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
    Ok(entropy_unchecked(&freqs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ExactMatch, GroundTruth, Scenario, SimulatedLm, TfCosine};
    use proptest::prelude::*;
    use rand::RngCore;
    use std::sync::Arc;

    fn word(s: &str, p: f64) -> Response {
        Response::from_words(vec![s.to_string()], vec![p.ln()]).unwrap()
    }

    fn kpost(support: Vec<usize>, probs: Vec<f64>) -> KPosterior {
        let n = probs.len();
        KPosterior {
            support,
            probs,
            log_evidence_per_k: vec![0.0; n],
        }
    }

    #[test]
    fn total_moments_examples() {
        let m = total_moments(&kpost(vec![2], vec![1.0]), &[(0.5, 0.02)]).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-15 && (m.variance - 0.02).abs() < 1e-15);
        let m = total_moments(&kpost(vec![2, 3], vec![0.5, 0.5]), &[(0.4, 0.0), (0.6, 0.0)]).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-12);
        assert!((m.variance - 0.01).abs() < 1e-12);
        assert!(total_moments(&kpost(vec![2, 3], vec![0.5, 0.5]), &[(0.4, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn total_variance_decomposes(
            raw in prop::collection::vec((0.01f64..1.0, 0.0f64..2.0, 0.0f64..0.5), 1..6)
        ) {
            let z: f64 = raw.iter().map(|r| r.0).sum();
            let probs: Vec<f64> = raw.iter().map(|r| r.0 / z).collect();
            let per_k: Vec<(f64, f64)> = raw.iter().map(|r| (r.1, r.2)).collect();
            let m = total_moments(&kpost((1..=raw.len()).collect(), probs.clone()), &per_k).unwrap();
            prop_assert!((m.variance - (m.within + m.between)).abs() <= 1e-9);
            // Second-moment route: E[h²] − E[h]².
            let second: f64 = probs.iter().zip(&per_k).map(|(p, (mu, v))| p * (v + mu * mu)).sum();
            prop_assert!((m.variance - (second - m.mean * m.mean)).abs() <= 1e-9);
        }

        #[test]
        fn unit_weights_need_no_scaling(ids in prop::collection::vec(0usize..4, 1..20), alpha0 in 0.05f64..5.0) {
            let mut ds = EstimationDataset::new();
            for (i, raw) in ids.iter().enumerate() {
                let id = (*raw).min(ds.k_obs());
                let r = word(&format!("w{i}"), 0.001);
                ds.push(SemanticSample::direct(r, id)).unwrap();
            }
            for k in ds.k_obs()..ds.k_obs() + 3 {
                let alpha = scaled_alphas(&ds, k, alpha0);
                let plain: Vec<f64> = (0..k)
                    .map(|j| alpha0 + ds.effective_counts().get(j).copied().unwrap_or(0.0))
                    .collect();
                prop_assert_eq!(alpha, plain);
            }
        }
    }

    #[test]
    fn weighted_update_examples() {
        let mut ds = EstimationDataset::new();
        ds.push(SemanticSample::direct(word("a", 0.1), 0)).unwrap();
        ds.push(SemanticSample::direct(word("b", 0.1), 0)).unwrap();
        let alpha = update_with_weighted_sample(
            &mut ds,
            SemanticSample::guided(word("c", 0.1), 1, 0.5).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(ds.effective_counts(), &[2.0, 0.5]);
        assert!((alpha[0] - 10.0 / 3.0).abs() < 1e-12);
        assert!((alpha[1] - 5.0 / 3.0).abs() < 1e-12);

        let mut empty = EstimationDataset::new();
        let alpha = update_with_weighted_sample(&mut empty, SemanticSample::direct(word("a", 0.2), 0), 1.0).unwrap();
        assert_eq!(empty.effective_counts(), &[1.0]);
        assert_eq!(alpha, vec![2.0]);

        let mut ds = EstimationDataset::new();
        ds.push(SemanticSample::direct(word("a", 0.1), 0)).unwrap();
        ds.push(SemanticSample::direct(word("b", 0.1), 1)).unwrap();
        ds.push(SemanticSample::direct(word("c", 0.1), 1)).unwrap();
        update_with_weighted_sample(&mut ds, SemanticSample::guided(word("d", 0.1), 1, 0.25).unwrap(), 1.0).unwrap();
        assert_eq!(ds.effective_counts()[1], 2.25);
        assert!(SemanticSample::guided(word("e", 0.1), 0, 0.0).is_err());
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn model(seqs: &[(&str, f64, usize)]) -> Arc<SimulatedLm> {
        let seqs: Vec<_> = seqs.iter().map(|(s, p, m)| (toks(s), *p, *m)).collect();
        let spec = Scenario::from_sequences(&seqs, Some(0)).unwrap();
        Arc::new(SimulatedLm::from_prompts(BTreeMap::from([("q".to_string(), spec)])).unwrap())
    }

    fn check_identity(e: &EntropyEstimate) {
        assert!((e.variance - (e.within + e.between)).abs() <= 1e-9);
        for p in &e.trajectory {
            assert!((p.variance - (p.within + p.between)).abs() <= 1e-9);
        }
    }

    #[test]
    fn deterministic_answer_stops_at_threshold() {
        let lm = model(&[("the answer is paris", 1.0, 0)]);
        let cfg = EstimatorConfig {
            gamma: 1e-3,
            seed: 1,
            ..Default::default()
        };
        let e = estimate_semantic_entropy("q", lm.as_ref(), &GroundTruth::new(lm.clone()), &TfCosine, &cfg).unwrap();
        check_identity(&e);
        assert_eq!(e.terminated_by, Termination::Threshold);
        assert!(e.mean.abs() < 1e-9);
        assert!(e.samples_used <= 2);
    }

    #[test]
    fn huge_gamma_skips_the_loop() {
        let lm = model(&[("a", 0.5, 0), ("b", 0.5, 1)]);
        let cfg = EstimatorConfig {
            gamma: 1e9,
            ..Default::default()
        };
        let e = estimate_semantic_entropy("q", lm.as_ref(), &ExactMatch, &TfCosine, &cfg).unwrap();
        assert_eq!(e.samples_used, cfg.n0);
        assert_eq!(e.terminated_by, Termination::Threshold);
        check_identity(&e);
    }

    #[test]
    fn tiny_gamma_hits_the_cap() {
        let lm = model(&[
            ("a x", 0.2, 0),
            ("a y", 0.1, 0),
            ("b x", 0.2, 1),
            ("b y", 0.1, 1),
            ("c x", 0.2, 2),
            ("c y", 0.1, 2),
            ("d x", 0.05, 3),
            ("d y", 0.05, 3),
        ]);
        let cfg = EstimatorConfig {
            gamma: 1e-9,
            n_max: 4,
            seed: 3,
            ..Default::default()
        };
        let e = estimate_semantic_entropy("q", lm.as_ref(), &GroundTruth::new(lm.clone()), &TfCosine, &cfg).unwrap();
        assert_eq!(e.samples_used, 4);
        assert_eq!(e.terminated_by, Termination::Budget);
        assert!(e.mean >= 0.0 && e.mean <= (e.k_posterior.support.last().copied().unwrap() as f64).ln() + 1e-12);
        check_identity(&e);
    }

    #[test]
    fn replay_matches_direct_runs() {
        let lm = model(&[("a x", 0.3, 0), ("a y", 0.2, 0), ("b x", 0.3, 1), ("c", 0.2, 2)]);
        let oracle = GroundTruth::new(lm.clone());
        let full = EstimatorConfig {
            gamma: f64::MIN_POSITIVE,
            n_max: 8,
            seed: 17,
            snis_draws: 512,
            ..Default::default()
        };
        let long = estimate_semantic_entropy("q", lm.as_ref(), &oracle, &TfCosine, &full).unwrap();
        for gamma in [1e-6, 1e-3, 0.01, 0.05, 0.2, 1.0] {
            let cfg = EstimatorConfig { gamma, ..full.clone() };
            let e = estimate_semantic_entropy("q", lm.as_ref(), &oracle, &TfCosine, &cfg).unwrap();
            let (p, term) = replay(&long.trajectory, gamma);
            assert_eq!(p.samples_used, e.samples_used);
            assert_eq!(p.mean.to_bits(), e.mean.to_bits());
            assert_eq!(p.variance.to_bits(), e.variance.to_bits());
            assert_eq!(term, e.terminated_by);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let lm = model(&[("a x", 0.3, 0), ("a y", 0.2, 0), ("b x", 0.5, 1)]);
        let oracle = GroundTruth::new(lm.clone());
        let cfg = EstimatorConfig {
            gamma: 1e-4,
            seed: 5,
            snis_draws: 256,
            ..Default::default()
        };
        let a = estimate_semantic_entropy("q", lm.as_ref(), &oracle, &TfCosine, &cfg).unwrap();
        let b = estimate_semantic_entropy("q", lm.as_ref(), &oracle, &TfCosine, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let ok = EstimatorConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            EstimatorConfig { gamma: 0.0, ..ok.clone() },
            EstimatorConfig { n0: 0, ..ok.clone() },
            EstimatorConfig { top_k: 0, ..ok.clone() },
            EstimatorConfig { alpha0: -1.0, ..ok.clone() },
            EstimatorConfig { n_max: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn baseline_examples() {
        struct Fixed(Vec<&'static str>, std::sync::Mutex<usize>);
        impl Generator for Fixed {
            fn sample_response(&self, _: &str, _: &mut dyn RngCore) -> Result<Response, BackendError> {
                let mut i = self.1.lock().unwrap();
                let r = word(self.0[*i % self.0.len()], 0.5);
                *i += 1;
                Ok(r)
            }
            fn next_token_distribution(&self, _: &str, _: &[String]) -> Result<Vec<crate::backends::ScoredToken>, BackendError> {
                Ok(Vec::new())
            }
            fn continue_with(
                &self,
                _: &str,
                _: &crate::backends::TokenPrefix,
                _: &crate::backends::ScoredToken,
                _: &mut dyn RngCore,
            ) -> Result<Response, BackendError> {
                Err(BackendError::InvalidRequest("fixed".into()))
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = |v: Vec<&'static str>, rng: &mut ChaCha8Rng| {
            baseline_semantic_entropy("q", &Fixed(v, Default::default()), &ExactMatch, 4, rng).unwrap()
        };
        assert_eq!(run(vec!["a"], &mut rng), 0.0);
        assert!((run(vec!["a", "b"], &mut rng) - 2f64.ln()).abs() < 1e-12);
        assert!((run(vec!["a", "a", "a", "b"], &mut rng) - 0.562335).abs() < 1e-6);
    }
}
