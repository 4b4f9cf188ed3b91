//! Entropy and Dirichlet primitives. All logarithms are natural.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::types::{ProbabilityVector, Response};

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &ProbabilityVector) -> f64 {
    entropy_unchecked(p.values())
}

/// Entropy of a vector assumed to lie on the simplex.
pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let h = -p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>();
    h.max(0.0)
}

/// Total log-probability of a response, the sum of its token log-probabilities.
pub fn sequence_log_prob(resp: &Response) -> f64 {
    resp.token_logprobs().iter().sum()
}

/// `ln Σ exp(x_i)`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::invalid("Dirichlet parameter vector is empty"));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::invalid(format!("Dirichlet parameter {a} is not positive")));
    }
    Ok(())
}

/// Draws a log-gamma variate. Shapes below one use the boost
/// `Gamma(a) = Gamma(a + 1) * U^(1/a)` taken in log space, which stays
/// finite for tiny shapes where the plain variate underflows to zero.
#[derive(Debug, Clone)]
struct LogGammaVariate {
    gamma: Gamma<f64>,
    inv_shape: Option<f64>,
}

impl LogGammaVariate {
    fn new(shape: f64) -> Self {
        let (boosted, inv_shape) = if shape < 1.0 {
            (shape + 1.0, Some(1.0 / shape))
        } else {
            (shape, None)
        };
        // Shape is validated positive by the caller.
        let gamma = Gamma::new(boosted, 1.0).expect("positive gamma shape");
        Self { gamma, inv_shape }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = self.gamma.sample(rng).ln();
        match self.inv_shape {
            None => x,
            Some(inv) => {
                let u: f64 = 1.0 - rng.random::<f64>();
                x + u.ln() * inv
            }
        }
    }
}

/// Reusable Dirichlet sampler producing log-coordinates.
#[derive(Debug, Clone)]
pub struct DirichletSampler {
    alpha: Vec<f64>,
    variates: Vec<LogGammaVariate>,
    log_norm: f64,
}

impl DirichletSampler {
    pub fn new(alpha: &[f64]) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha: alpha.to_vec(),
            variates: alpha.iter().map(|&a| LogGammaVariate::new(a)).collect(),
            log_norm: dirichlet_log_normalizer(alpha),
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Writes `ln u_j` for one draw `u ~ Dir(alpha)` into `log_u`.
    pub fn sample_log<R: Rng + ?Sized>(&self, rng: &mut R, log_u: &mut [f64]) {
        for (slot, v) in log_u.iter_mut().zip(&self.variates) {
            *slot = v.sample(rng);
        }
        let lse = log_sum_exp(log_u);
        for slot in log_u.iter_mut() {
            *slot -= lse;
        }
    }

    /// Like [`sample_log`](Self::sample_log), also writing the linear
    /// coordinates into `u`.
    pub fn sample_both<R: Rng + ?Sized>(&self, rng: &mut R, log_u: &mut [f64], u: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for (slot, v) in log_u.iter_mut().zip(&self.variates) {
            *slot = v.sample(rng);
            max = max.max(*slot);
        }
        let mut total = 0.0;
        for (e, lg) in u.iter_mut().zip(log_u.iter()) {
            *e = (lg - max).exp();
            total += *e;
        }
        let shift = max + total.ln();
        for (e, lg) in u.iter_mut().zip(log_u.iter_mut()) {
            *e /= total;
            *lg -= shift;
        }
    }

    /// Log density at a point given by its log-coordinates.
    pub fn log_density_at_log(&self, log_u: &[f64]) -> f64 {
        self.log_norm
            + self
                .alpha
                .iter()
                .zip(log_u)
                .map(|(a, lu)| if *a == 1.0 { 0.0 } else { (a - 1.0) * lu })
                .sum::<f64>()
    }
}

/// `ln Γ(Σα) − Σ ln Γ(α_j)`.
pub(crate) fn dirichlet_log_normalizer(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    ln_gamma(total) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

/// One draw from `Dir(alpha)` by normalizing independent gamma variates.
pub fn dirichlet_sample<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<ProbabilityVector> {
    let sampler = DirichletSampler::new(alpha)?;
    let mut log_u = vec![0.0; alpha.len()];
    sampler.sample_log(rng, &mut log_u);
    let values: Vec<f64> = log_u.iter().map(|l| l.exp()).collect();
    // exp of normalized logs sums to one up to rounding; renormalize anyway.
    ProbabilityVector::from_weights(&values)
}

/// Log density of `Dir(alpha)` at `p`.
///
/// A zero coordinate is allowed only where the density stays finite:
/// `alpha_j = 1` contributes nothing and `alpha_j > 1` gives `-inf`.
pub fn dirichlet_log_density(p: &ProbabilityVector, alpha: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    if p.len() != alpha.len() {
        return Err(Error::invalid(format!(
            "point has {} coordinates, parameter has {}",
            p.len(),
            alpha.len()
        )));
    }
    let mut acc = dirichlet_log_normalizer(alpha);
    for (&pj, &aj) in p.values().iter().zip(alpha) {
        if pj == 0.0 {
            if aj < 1.0 {
                return Err(Error::NonFiniteDensity);
            }
            if aj > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
        } else {
            acc += (aj - 1.0) * pj.ln();
        }
    }
    Ok(acc)
}

/// Exact mean of `H(p)` under the untruncated `Dir(alpha)`:
/// `ψ(A + 1) − Σ (α_j / A) ψ(α_j + 1)` with `A = Σ α_j`.
pub fn dirichlet_entropy_mean_closed_form(alpha: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    let total: f64 = alpha.iter().sum();
    Ok(digamma(total + 1.0)
        - alpha
            .iter()
            .map(|&a| a / total * digamma(a + 1.0))
            .sum::<f64>())
}
