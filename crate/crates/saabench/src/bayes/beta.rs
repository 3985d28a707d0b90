//! Random-walk Metropolis for the beta model under uniform shape priors.

use super::{BayesError, BetaPrior, ChainSettings, PosteriorDraws};
use crate::distributions::Sample;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

/// Sufficient statistics of the scaled-beta log-likelihood.
struct BetaStats {
    n: f64,
    sum_ln_u: f64,
    sum_ln_1mu: f64,
}

impl BetaStats {
    fn from_sample(ys: &[f64]) -> Result<Self, BayesError> {
        let eps = 1e-9;
        let (mut s1, mut s2) = (0.0, 0.0);
        for &y in ys {
            if !y.is_finite() || y.abs() > 1.0 {
                return Err(BayesError::OutOfSupport(format!(
                    "beta model needs observations in [-1, 1], got {y}"
                )));
            }
            let u = ((y + 1.0) / 2.0).clamp(eps, 1.0 - eps);
            s1 += u.ln();
            s2 += (1.0 - u).ln();
        }
        Ok(Self { n: ys.len() as f64, sum_ln_u: s1, sum_ln_1mu: s2 })
    }

    fn log_likelihood(&self, alpha: f64, beta: f64) -> f64 {
        let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
        -self.n * ln_b + (alpha - 1.0) * self.sum_ln_u + (beta - 1.0) * self.sum_ln_1mu
    }
}

// Proposals falling outside the prior box are rejected rather than folded
// back in: the posterior vanishes there, so rejection keeps the kernel
// exact. Folding would bias the chain once the adapted proposal carries
// correlation, because coordinate-wise reflection is only symmetric for
// axis-independent kernels.

/// Running mean and covariance of the burn-in trajectory; the posterior of
/// the two shapes is strongly correlated, so the proposal must track the
/// covariance to mix well.
struct ProposalShape {
    count: f64,
    mean: [f64; 2],
    // accumulated outer products of deviations
    c11: f64,
    c12: f64,
    c22: f64,
}

impl ProposalShape {
    fn new() -> Self {
        Self { count: 0.0, mean: [0.0; 2], c11: 0.0, c12: 0.0, c22: 0.0 }
    }

    fn update(&mut self, a: f64, b: f64) {
        self.count += 1.0;
        let da = a - self.mean[0];
        let db = b - self.mean[1];
        self.mean[0] += da / self.count;
        self.mean[1] += db / self.count;
        let da2 = a - self.mean[0];
        let db2 = b - self.mean[1];
        self.c11 += da * da2;
        self.c12 += da * db2;
        self.c22 += db * db2;
    }

    /// Cholesky factor of the tracked covariance, floored to stay usable
    /// when the trajectory has not spread yet.
    fn cholesky(&self, fallback: f64) -> [f64; 3] {
        if self.count < 20.0 {
            return [fallback, 0.0, fallback];
        }
        let n = self.count - 1.0;
        let floor = 1e-6;
        let v11 = (self.c11 / n).max(floor);
        let v22 = (self.c22 / n).max(floor);
        let v12 = self.c12 / n;
        let l11 = v11.sqrt();
        let l21 = v12 / l11;
        let l22 = (v22 - l21 * l21).max(floor).sqrt();
        [l11, l21, l22]
    }
}

/// Posterior draws of `(alpha, beta)` for a sample from the scaled beta.
///
/// An empty sample is legal and returns draws from the prior. Deterministic
/// for a fixed rng seed. Random-walk Metropolis confined to the prior box;
/// during burn-in the proposal covariance tracks the chain (Haario-style)
/// and a global factor chases a 20-50% acceptance rate, both frozen
/// afterwards.
pub fn posterior_beta(
    s: &Sample,
    prior: &BetaPrior,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws, BayesError> {
    prior.validate()?;
    let ys = s.scalars().ok_or(BayesError::NotUnivariate(s.dim()))?;
    let stats = BetaStats::from_sample(ys)?;

    let mut alpha = 0.5 * (prior.lo + prior.hi);
    let mut beta = alpha;
    let mut log_lik = stats.log_likelihood(alpha, beta);
    // 2.38^2/d is the classic optimal-scaling factor for Gaussian targets.
    let mut factor: f64 = 2.38 * 2.38 / 2.0;
    let isotropic = 0.15 * (prior.hi - prior.lo);
    let mut shape = ProposalShape::new();
    let mut chol = [isotropic, 0.0, isotropic];

    let mut draws = Vec::with_capacity(chain.draws);
    let mut accepted_post = 0usize;
    let mut window_accepts = 0usize;
    let total_iters = chain.burn_in + chain.draws * chain.thin;
    for iter in 0..total_iters {
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let root = factor.sqrt();
        let prop_a = alpha + root * chol[0] * g1;
        let prop_b = beta + root * (chol[1] * g1 + chol[2] * g2);
        let in_box = (prior.lo..=prior.hi).contains(&prop_a)
            && (prior.lo..=prior.hi).contains(&prop_b);
        let mut accept = false;
        if in_box {
            let prop_ll = stats.log_likelihood(prop_a, prop_b);
            if prop_ll - log_lik >= 0.0 || rng.random::<f64>().ln() < prop_ll - log_lik {
                alpha = prop_a;
                beta = prop_b;
                log_lik = prop_ll;
                accept = true;
            }
        }

        if iter < chain.burn_in {
            shape.update(alpha, beta);
            chol = shape.cholesky(isotropic);
            window_accepts += usize::from(accept);
            if (iter + 1) % 50 == 0 {
                let rate = window_accepts as f64 / 50.0;
                if rate < 0.2 {
                    factor *= 0.7;
                } else if rate > 0.5 {
                    factor *= 1.4;
                }
                window_accepts = 0;
            }
        } else {
            accepted_post += usize::from(accept);
            let post = iter - chain.burn_in;
            if (post + 1).is_multiple_of(chain.thin) {
                draws.push(vec![alpha, beta]);
            }
        }
    }

    let kept = (chain.draws * chain.thin).max(1) as f64;
    Ok(PosteriorDraws::from_draws(draws, accepted_post as f64 / kept))
}
