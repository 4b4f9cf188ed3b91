//! Truncated Dirichlet posterior over meaning probabilities.
//!
//! Observed sequences give a floor on each meaning's probability: meaning
//! `j` has at least the summed probability `b_j` of the distinct sequences
//! seen in it. The posterior `Dir(alpha)` is restricted to that region and
//! its entropy moments and marginal likelihood are integrated with
//! self-normalized importance sampling.
//!
//! Draws are taken through the affine map `p = b + (1 - B) u` with `u` on
//! the simplex, so every draw is feasible by construction. The density of
//! `u` is a mixture: a Dirichlet moment-matched to the truncated target in
//! `u` coordinates, the untruncated `Dir(alpha)`, and the flat Dirichlet.
//! With no constraint the proposal is exactly `Dir(alpha)` and all weights
//! are one.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::estimator::scaled_alphas;
use crate::math::{dirichlet_log_normalizer, entropy_unchecked, log_sum_exp, DirichletSampler};
use crate::types::EstimationDataset;

/// Constraint sets with at least this total mass collapse to a point.
pub const DEGENERACY_MARGIN: f64 = 1e-6;
pub const MIN_DRAWS: usize = 100;
/// Below this effective sample size a result is flagged unreliable.
pub const MIN_RELIABLE_ESS: f64 = 10.0;
pub const DEFAULT_DRAWS: usize = 4096;

const MASS_TOLERANCE: f64 = 1e-6;

/// Per-meaning lower bounds `p_j >= b_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSet {
    bounds: Vec<f64>,
    total_mass: f64,
}

impl ConstraintSet {
    pub fn new(bounds: Vec<f64>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("constraint set has no categories"));
        }
        if bounds.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::invalid("lower bounds must lie in [0, 1]"));
        }
        let total_mass: f64 = bounds.iter().sum();
        if total_mass > 1.0 + MASS_TOLERANCE {
            return Err(Error::invalid(format!("lower bounds sum to {total_mass} > 1")));
        }
        Ok(Self { bounds, total_mass })
    }

    /// The whole simplex.
    pub fn unconstrained(k: usize) -> Result<Self> {
        Self::new(vec![0.0; k])
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.total_mass >= 1.0 - DEGENERACY_MARGIN
    }
}

/// Lower bounds for hypothesis `k`: the observed distinct-sequence mass of
/// each meaning, padded with zeros for meanings not yet seen.
pub fn lower_bounds(dataset: &EstimationDataset, k: usize) -> Result<ConstraintSet> {
    let k_obs = dataset.k_obs();
    if k < k_obs || k == 0 {
        return Err(Error::ImpossibleHypothesis { k, k_obs });
    }
    let mut bounds = dataset.observed_mass_per_meaning();
    bounds.resize(k, 0.0);
    // Registry sums can overshoot by rounding; the registry itself caps the total.
    for b in &mut bounds {
        *b = b.clamp(0.0, 1.0);
    }
    let total: f64 = bounds.iter().sum();
    if total > 1.0 {
        for b in &mut bounds {
            *b /= total;
        }
    }
    ConstraintSet::new(bounds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Mixture centred on the truncated target (default).
    #[default]
    Adapted,
    /// `u ~ Dir(alpha)` alone.
    Prior,
}

/// Self-normalized importance sampling estimate of the entropy moments
/// under the truncated posterior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnisResult {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub effective_sample_size: f64,
    pub draws_used: usize,
    /// Log of the mean importance weight, an estimate of the posterior mass
    /// of the constraint region.
    pub log_normalizer: f64,
    /// Relative standard error of the mean weight (delta method).
    pub normalizer_rel_se: f64,
    /// The constraint region collapsed to a single point.
    pub degenerate: bool,
    /// Effective sample size fell below [`MIN_RELIABLE_ESS`].
    pub unreliable: bool,
}

impl SnisResult {
    fn point_mass(p: &[f64]) -> Self {
        Self {
            mean: entropy_unchecked(p),
            second_moment: entropy_unchecked(p).powi(2),
            variance: 0.0,
            effective_sample_size: 0.0,
            draws_used: 0,
            log_normalizer: f64::NEG_INFINITY,
            normalizer_rel_se: 0.0,
            degenerate: true,
            unreliable: false,
        }
    }
}

struct MixtureProposal {
    /// `(ln weight, sampler)`.
    components: Vec<(f64, DirichletSampler)>,
    cumulative: Vec<f64>,
}

impl MixtureProposal {
    fn single(alpha: &[f64]) -> Result<Self> {
        Ok(Self {
            components: vec![(0.0, DirichletSampler::new(alpha)?)],
            cumulative: vec![1.0],
        })
    }

    fn adapted(alpha: &[f64], constraints: &ConstraintSet) -> Result<Self> {
        let k = alpha.len();
        let kf = k as f64;
        let total: f64 = alpha.iter().sum();
        let slack = 1.0 - constraints.total_mass();
        let mean: Vec<f64> = alpha.iter().map(|a| a / total).collect();

        // Where the untruncated mean would sit in u coordinates, floored so
        // binding coordinates keep some room.
        let floor = 0.05 / kf;
        let mut centre: Vec<f64> = mean
            .iter()
            .zip(constraints.bounds())
            .map(|(m, b)| ((m - b) / slack).max(floor))
            .collect();
        let csum: f64 = centre.iter().sum();
        centre.iter_mut().for_each(|c| *c /= csum);

        // Match coordinate variances of the target mapped into u space, then
        // widen by a factor of two.
        let ratio = centre
            .iter()
            .zip(&mean)
            .map(|(c, m)| (c * (1.0 - c)) / (m * (1.0 - m)).max(1e-12))
            .fold(f64::INFINITY, f64::min);
        let concentration = ((total + 1.0) * slack * slack * ratio / 2.0 - 1.0).max(0.5 * kf);
        let beta: Vec<f64> = centre.iter().map(|c| (c * concentration).max(1e-3)).collect();

        Ok(Self {
            components: vec![
                (0.8f64.ln(), DirichletSampler::new(&beta)?),
                (0.1f64.ln(), DirichletSampler::new(alpha)?),
                (0.1f64.ln(), DirichletSampler::new(&vec![1.0; k])?),
            ],
            cumulative: vec![0.8, 0.9, 1.0],
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, log_u: &mut [f64], u: &mut [f64]) {
        let idx = if self.components.len() == 1 {
            0
        } else {
            let r: f64 = rng.random();
            self.cumulative
                .iter()
                .position(|c| r < *c)
                .unwrap_or(self.components.len() - 1)
        };
        self.components[idx].1.sample_both(rng, log_u, u);
    }

    fn log_density(&self, log_u: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend(
            self.components
                .iter()
                .map(|(lw, s)| lw + s.log_density_at_log(log_u)),
        );
        log_sum_exp(scratch)
    }
}

/// SNIS outcome plus, when counts were supplied, `ln E[Π p_j^{n_j}]` under
/// the truncated density.
struct SnisOutcome {
    result: SnisResult,
    log_expected_likelihood: Option<f64>,
}

fn run_snis<R: Rng + ?Sized>(
    alpha: &[f64],
    constraints: &ConstraintSet,
    draws: usize,
    proposal: Proposal,
    counts: Option<&[f64]>,
    rng: &mut R,
) -> Result<SnisOutcome> {
    let k = alpha.len();
    if constraints.len() != k {
        return Err(Error::invalid(format!(
            "{} Dirichlet parameters but {} constraints",
            k,
            constraints.len()
        )));
    }
    if draws < MIN_DRAWS {
        return Err(Error::invalid(format!("at least {MIN_DRAWS} draws required, got {draws}")));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::invalid(format!("Dirichlet parameter {a} is not positive")));
    }
    let log_lik_at = |log_p: &[f64]| -> f64 {
        counts.map_or(0.0, |n| {
            n.iter()
                .zip(log_p)
                .filter(|(nj, _)| **nj > 0.0)
                .map(|(nj, lp)| nj * lp)
                .sum()
        })
    };

    if constraints.is_degenerate() || k == 1 {
        let mass = constraints.total_mass();
        let p: Vec<f64> = if k == 1 {
            vec![1.0]
        } else {
            constraints.bounds().iter().map(|b| b / mass).collect()
        };
        let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        let mut result = SnisResult::point_mass(&p);
        if k == 1 {
            // The single-category simplex is a point carrying all the mass.
            result.log_normalizer = 0.0;
            result.effective_sample_size = draws as f64;
            result.draws_used = draws;
            result.degenerate = false;
        }
        return Ok(SnisOutcome {
            result,
            log_expected_likelihood: counts.map(|_| log_lik_at(&log_p)),
        });
    }

    let bounds = constraints.bounds();
    let slack = 1.0 - constraints.total_mass();
    let log_slack = slack.ln();
    let unconstrained = constraints.total_mass() == 0.0;
    let mixture = if unconstrained || proposal == Proposal::Prior {
        MixtureProposal::single(alpha)?
    } else {
        MixtureProposal::adapted(alpha, constraints)?
    };
    let target_log_norm = dirichlet_log_normalizer(alpha);

    let mut log_w = Vec::with_capacity(draws);
    let mut entropies = Vec::with_capacity(draws);
    let mut log_liks = Vec::with_capacity(if counts.is_some() { draws } else { 0 });
    let mut log_u = vec![0.0; k];
    let mut u = vec![0.0; k];
    let mut log_p = vec![0.0; k];
    let mut p = vec![0.0; k];
    let mut scratch = Vec::with_capacity(3);

    for _ in 0..draws {
        mixture.sample(rng, &mut log_u, &mut u);
        for j in 0..k {
            p[j] = bounds[j] + slack * u[j];
            log_p[j] = if bounds[j] == 0.0 { log_slack + log_u[j] } else { p[j].ln() };
        }
        let lw = if unconstrained && proposal == Proposal::Adapted {
            0.0
        } else {
            let log_target = target_log_norm
                + alpha
                    .iter()
                    .zip(&log_p)
                    .map(|(a, lp)| if *a == 1.0 { 0.0 } else { (a - 1.0) * lp })
                    .sum::<f64>();
            log_target + (k as f64 - 1.0) * log_slack - mixture.log_density(&log_u, &mut scratch)
        };
        log_w.push(lw);
        entropies.push(-p.iter().zip(&log_p).map(|(pj, lp)| if *pj > 0.0 { pj * lp } else { 0.0 }).sum::<f64>());
        if counts.is_some() {
            log_liks.push(log_lik_at(&log_p));
        }
    }

    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::invalid("importance weights are all zero or non-finite"));
    }
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut sum_sq = 0.0;
    for (lw, h) in log_w.iter().zip(&entropies) {
        let w = (lw - lse).exp();
        mean += w * h;
        second += w * h * h;
        sum_sq += w * w;
    }
    let n = draws as f64;
    let ess = 1.0 / sum_sq;
    // Relative spread of the raw weights: n Σŵ² = E[w²]/E[w]².
    let rel_se = ((n * sum_sq - 1.0).max(0.0) / n).sqrt();
    let variance = (second - mean * mean).max(0.0);
    let result = SnisResult {
        mean,
        second_moment: second,
        variance,
        effective_sample_size: ess.min(n),
        draws_used: draws,
        log_normalizer: lse - n.ln(),
        normalizer_rel_se: rel_se,
        degenerate: false,
        unreliable: ess < MIN_RELIABLE_ESS,
    };
    let log_expected_likelihood = counts.map(|_| {
        let joint: Vec<f64> = log_w.iter().zip(&log_liks).map(|(a, b)| a + b).collect();
        log_sum_exp(&joint) - lse
    });
    Ok(SnisOutcome {
        result,
        log_expected_likelihood,
    })
}

/// Entropy mean and variance under `Dir(alpha)` truncated to `constraints`.
pub fn snis_entropy_moments<R: Rng + ?Sized>(
    alpha: &[f64],
    constraints: &ConstraintSet,
    draws: usize,
    rng: &mut R,
) -> Result<SnisResult> {
    snis_entropy_moments_with(alpha, constraints, draws, Proposal::default(), rng)
}

pub fn snis_entropy_moments_with<R: Rng + ?Sized>(
    alpha: &[f64],
    constraints: &ConstraintSet,
    draws: usize,
    proposal: Proposal,
    rng: &mut R,
) -> Result<SnisResult> {
    Ok(run_snis(alpha, constraints, draws, proposal, None, rng)?.result)
}

/// Integration settings shared by every hypothesis of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorSettings {
    pub alpha0: f64,
    pub draws: usize,
    /// Integrate the likelihood against the truncated prior `Dir(alpha0)`
    /// instead of the data-informed posterior.
    pub marginal_prior_only: bool,
    pub proposal: Proposal,
}

impl PosteriorSettings {
    pub fn new(alpha0: f64, draws: usize) -> Self {
        Self {
            alpha0,
            draws,
            marginal_prior_only: false,
            proposal: Proposal::default(),
        }
    }
}

/// Conditional entropy moments and evidence for one hypothesis `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisStats {
    pub k: usize,
    pub mean: f64,
    pub variance: f64,
    pub log_evidence: f64,
    pub snis: SnisResult,
}

/// `ln Γ(N) − Σ_{n_j > 0} ln Γ(n_j)` with effective counts `n_j`.
fn log_count_coefficient(dataset: &EstimationDataset) -> f64 {
    let n = dataset.raw_count() as f64;
    ln_gamma(n)
        - dataset
            .effective_counts()
            .iter()
            .filter(|c| **c > 0.0)
            .map(|&c| ln_gamma(c))
            .sum::<f64>()
}

fn padded_counts(dataset: &EstimationDataset, k: usize) -> Vec<f64> {
    let mut counts = dataset.effective_counts().to_vec();
    counts.resize(k, 0.0);
    counts
}

/// Evaluates hypothesis `k`, sharing one set of draws between the entropy
/// moments and the marginal likelihood.
pub fn evaluate_hypothesis<R: Rng + ?Sized>(
    k: usize,
    dataset: &EstimationDataset,
    settings: &PosteriorSettings,
    rng: &mut R,
) -> Result<HypothesisStats> {
    if !(settings.alpha0 > 0.0) {
        return Err(Error::invalid("alpha0 must be positive"));
    }
    let constraints = lower_bounds(dataset, k)?;
    let alpha = scaled_alphas(dataset, k, settings.alpha0);
    let counts = padded_counts(dataset, k);
    let empty = dataset.raw_count() == 0;

    let outcome = run_snis(
        &alpha,
        &constraints,
        settings.draws,
        settings.proposal,
        (!empty && !settings.marginal_prior_only).then_some(&counts[..]),
        rng,
    )?;
    let log_evidence = if empty {
        0.0
    } else {
        let integral = match outcome.log_expected_likelihood {
            Some(v) => v,
            None => {
                let prior = vec![settings.alpha0; k];
                run_snis(&prior, &constraints, settings.draws, settings.proposal, Some(&counts), rng)?
                    .log_expected_likelihood
                    .expect("counts supplied")
            }
        };
        log_count_coefficient(dataset) + integral
    };
    Ok(HypothesisStats {
        k,
        mean: outcome.result.mean,
        variance: outcome.result.variance,
        log_evidence,
        snis: outcome.result,
    })
}

/// Entropy mean and variance given `k` meanings and the data.
pub fn conditional_entropy_stats<R: Rng + ?Sized>(
    k: usize,
    dataset: &EstimationDataset,
    alpha0: f64,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(alpha0 > 0.0) {
        return Err(Error::invalid("alpha0 must be positive"));
    }
    let constraints = lower_bounds(dataset, k)?;
    let alpha = scaled_alphas(dataset, k, alpha0);
    let r = run_snis(&alpha, &constraints, draws, Proposal::default(), None, rng)?.result;
    Ok((r.mean, r.variance))
}

/// `ln p(D | K)`; `-inf` when `k` is smaller than the observed meaning count.
pub fn log_marginal_likelihood<R: Rng + ?Sized>(
    k: usize,
    dataset: &EstimationDataset,
    alpha0: f64,
    draws: usize,
    marginal_prior_only: bool,
    rng: &mut R,
) -> Result<f64> {
    if k < dataset.k_obs() || k == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let settings = PosteriorSettings {
        marginal_prior_only,
        ..PosteriorSettings::new(alpha0, draws)
    };
    Ok(evaluate_hypothesis(k, dataset, &settings, rng)?.log_evidence)
}
