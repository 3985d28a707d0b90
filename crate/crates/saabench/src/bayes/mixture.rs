//! Gibbs sampler for the two-component Gaussian mixture under conjugate
//! priors: Dirichlet weights, Gamma precisions, normal locations given the
//! component scale.

use super::{BayesError, ChainSettings, MixturePrior, PosteriorDraws, PriorMean};
use crate::distributions::{normal_pdf, Sample};
use rand::Rng;
use rand_distr::{Distribution as _, Gamma, StandardNormal};

struct ComponentStats {
    count: f64,
    mean: f64,
    sum_sq_dev: f64,
}

/// Posterior location parameters `(m_n, alpha_n)` of the normal-given-scale
/// prior after folding in one component's assigned points.
fn location_update(alpha0: f64, prior_mean: f64, stats: &ComponentStats) -> (f64, f64) {
    let alpha_n = alpha0 + stats.count;
    let m_n = (alpha0 * prior_mean + stats.count * stats.mean) / alpha_n;
    (m_n, alpha_n)
}

/// Conjugate normal-gamma update for one component given its assigned
/// points; returns the sampled `(sigma^2, mu)`.
fn sample_component(
    prior: &MixturePrior,
    prior_mean: f64,
    stats: &ComponentStats,
    rng: &mut impl Rng,
) -> (f64, f64) {
    let (a0, b0) = prior.precision_gamma();
    let alpha0 = prior.alpha_prec;
    let (m_n, alpha_n) = location_update(alpha0, prior_mean, stats);
    let a_n = a0 + stats.count / 2.0;
    let b_n = b0
        + 0.5 * stats.sum_sq_dev
        + alpha0 * stats.count * (stats.mean - prior_mean).powi(2) / (2.0 * alpha_n);
    let tau = Gamma::new(a_n, 1.0 / b_n).expect("positive shape and rate").sample(rng);
    let var = 1.0 / tau;
    let g: f64 = rng.sample(StandardNormal);
    let mu = m_n + g * (var / alpha_n).sqrt();
    (var, mu)
}

fn beta_draw(a: f64, b: f64, rng: &mut impl Rng) -> f64 {
    // Two gammas rather than rand_distr's Beta keeps one code path for any
    // positive shapes.
    let x = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    let y = Gamma::new(b, 1.0).expect("positive shape").sample(rng);
    x / (x + y)
}

fn run_gibbs(
    ys: &[f64],
    prior: &MixturePrior,
    prior_mean: f64,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> PosteriorDraws {
    let n = ys.len();

    // Deterministic starting point: split the data range.
    let (mut mu1, mut mu2, mut var1, mut var2) = if n >= 2 {
        let mut sorted = ys.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |f: f64| sorted[((f * (n - 1) as f64).round() as usize).min(n - 1)];
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64).max(1e-4);
        (q(0.25), q(0.75), var, var)
    } else {
        (prior_mean - 0.5, prior_mean + 0.5, 1.0, 1.0)
    };
    let mut rho = 0.5;

    let mut draws = Vec::with_capacity(chain.draws);
    let total_iters = chain.burn_in + chain.draws * chain.thin;
    for iter in 0..total_iters {
        // Latent assignments.
        let mut s1 = ComponentStats { count: 0.0, mean: 0.0, sum_sq_dev: 0.0 };
        let mut s2 = ComponentStats { count: 0.0, mean: 0.0, sum_sq_dev: 0.0 };
        let mut members1: Vec<f64> = Vec::new();
        let mut members2: Vec<f64> = Vec::new();
        for &y in ys {
            let p1 = rho * normal_pdf(y, mu1, var1.sqrt());
            let p2 = (1.0 - rho) * normal_pdf(y, mu2, var2.sqrt());
            let total = p1 + p2;
            let take1 = if total > 0.0 { rng.random::<f64>() < p1 / total } else { rng.random::<f64>() < 0.5 };
            if take1 {
                members1.push(y);
            } else {
                members2.push(y);
            }
        }
        for (members, stats) in [(&members1, &mut s1), (&members2, &mut s2)] {
            stats.count = members.len() as f64;
            if !members.is_empty() {
                stats.mean = members.iter().sum::<f64>() / stats.count;
                stats.sum_sq_dev = members.iter().map(|y| (y - stats.mean).powi(2)).sum();
            }
        }

        // Weights: Dirichlet(delta + n1, delta + n2) is a beta here.
        rho = beta_draw(prior.delta + s1.count, prior.delta + s2.count, rng);

        // Scales and locations, conjugate per component.
        let (v1, m1) = sample_component(prior, prior_mean, &s1, rng);
        let (v2, m2) = sample_component(prior, prior_mean, &s2, rng);
        var1 = v1;
        mu1 = m1;
        var2 = v2;
        mu2 = m2;

        if iter >= chain.burn_in {
            let post = iter - chain.burn_in;
            if (post + 1).is_multiple_of(chain.thin) {
                // Read-out ordering resolves label switching: component 1 is
                // the one with the smaller location.
                let draw = if mu1 <= mu2 {
                    vec![rho, mu1, mu2, var1.sqrt(), var2.sqrt()]
                } else {
                    vec![1.0 - rho, mu2, mu1, var2.sqrt(), var1.sqrt()]
                };
                draws.push(draw);
            }
        }
    }
    PosteriorDraws::from_draws(draws, 1.0)
}

/// Posterior draws `[rho1, mu1, mu2, sigma1, sigma2]` (ordered `mu1 <= mu2`)
/// for a univariate sample under the conjugate mixture model.
pub fn posterior_mixture(
    s: &Sample,
    prior: &MixturePrior,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws, BayesError> {
    prior.validate()?;
    let ys = s.scalars().ok_or(BayesError::NotUnivariate(s.dim()))?;
    if ys.is_empty() {
        return Err(BayesError::EmptySample);
    }
    let prior_mean = match prior.m {
        PriorMean::SampleMean => ys.iter().sum::<f64>() / ys.len() as f64,
        PriorMean::Fixed(v) => v,
    };
    Ok(run_gibbs(ys, prior, prior_mean, chain, rng))
}

/// Draws from the prior alone (the likelihood term suppressed); a validation
/// hook. Requires a fixed prior mean, since there is no sample to center on.
pub fn posterior_mixture_prior_only(
    prior: &MixturePrior,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws, BayesError> {
    prior.validate()?;
    let PriorMean::Fixed(m) = prior.m else {
        return Err(BayesError::NeedsFixedPriorMean);
    };
    Ok(run_gibbs(&[], prior, m, chain, rng))
}

/// Validation hook: a single known-variance Gaussian component. Exercises
/// the same conjugate location update as the mixture sweep, so the draw
/// distribution must match the closed-form normal posterior
/// `N((alpha m + N ybar)/(alpha + N), sigma^2/(alpha + N))`.
pub fn posterior_gaussian_known_variance(
    s: &Sample,
    sigma2: f64,
    prior_mean: f64,
    alpha_prec: f64,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws, BayesError> {
    let ys = s.scalars().ok_or(BayesError::NotUnivariate(s.dim()))?;
    if ys.is_empty() {
        return Err(BayesError::EmptySample);
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(BayesError::InvalidPrior(format!("known variance must be > 0, got {sigma2}")));
    }
    let count = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / count;
    let sum_sq_dev = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let stats = ComponentStats { count, mean, sum_sq_dev };

    // Same location update as the mixture sweep, with the precision held at
    // 1/sigma2 instead of being drawn.
    let (m_n, alpha_n) = location_update(alpha_prec, prior_mean, &stats);
    let mut draws = Vec::with_capacity(chain.draws);
    let total_iters = chain.burn_in + chain.draws * chain.thin;
    for iter in 0..total_iters {
        let g: f64 = rng.sample(StandardNormal);
        let mu = m_n + g * (sigma2 / alpha_n).sqrt();
        if iter >= chain.burn_in && (iter - chain.burn_in + 1).is_multiple_of(chain.thin) {
            draws.push(vec![mu]);
        }
    }
    Ok(PosteriorDraws::from_draws(draws, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{predictive_moments_1d, UnivariateFamily};
    use crate::distributions::builtin_univariate;
    use crate::rng::{stream, StreamRole};

    #[test]
    fn prior_only_run_has_symmetric_weights() {
        let prior = MixturePrior { m: PriorMean::Fixed(0.0), ..MixturePrior::default() };
        let draws = posterior_mixture_prior_only(
            &prior,
            &ChainSettings::default(),
            &mut stream(60, 0, 0, StreamRole::Mcmc, 0),
        )
        .unwrap();
        let mean_rho = draws.param_mean(0);
        // Symmetric Dirichlet(10, 10) has mean 1/2; with read-out ordering the
        // stored rho is the weight of the lower-location component, which is
        // independent of the weight draw under the prior.
        assert!((mean_rho - 0.5).abs() < 0.02, "rho {mean_rho}");
    }

    #[test]
    fn recovers_mixture_mean_on_large_sample() {
        let dist = &builtin_univariate()[3]; // analytic mean -0.14
        let s = dist.sample(10_000, &mut stream(61, 4, 0, StreamRole::TrainingSample, 0));
        let draws = posterior_mixture(
            &s,
            &MixturePrior::default(),
            &ChainSettings::default(),
            &mut stream(61, 4, 0, StreamRole::Mcmc, 0),
        )
        .unwrap();
        let m = predictive_moments_1d(&draws, UnivariateFamily::Mixture).unwrap();
        assert!((m.m1 + 0.14).abs() < 0.02, "predictive mean {}", m.m1);
    }

    #[test]
    fn single_component_truth_is_recovered() {
        // mu1 = mu2 truth collapses to one Gaussian.
        let truth = crate::distributions::GaussianMixture2::new(0.25, 0.25, 0.2, 0.2, 0.5).unwrap();
        let dist = crate::distributions::TrueDistribution::GaussianMixture2(truth);
        let s = dist.sample(5_000, &mut stream(62, 9, 0, StreamRole::TrainingSample, 0));
        let draws = posterior_mixture(
            &s,
            &MixturePrior::default(),
            &ChainSettings::default(),
            &mut stream(62, 9, 0, StreamRole::Mcmc, 0),
        )
        .unwrap();
        let m = predictive_moments_1d(&draws, UnivariateFamily::Mixture).unwrap();
        assert!((m.m1 - 0.25).abs() < 0.02, "predictive mean {}", m.m1);
    }

    #[test]
    fn labels_are_ordered_in_every_draw() {
        let dist = &builtin_univariate()[4];
        let s = dist.sample(40, &mut stream(63, 5, 0, StreamRole::TrainingSample, 0));
        let draws = posterior_mixture(
            &s,
            &MixturePrior::default(),
            &ChainSettings { draws: 500, burn_in: 100, thin: 1 },
            &mut stream(63, 5, 0, StreamRole::Mcmc, 0),
        )
        .unwrap();
        for d in &draws.draws {
            assert!(d[1] <= d[2]);
            assert!(d[3] > 0.0 && d[4] > 0.0);
            assert!((0.0..=1.0).contains(&d[0]));
        }
    }

    #[test]
    fn known_variance_hook_matches_closed_form() {
        let dist = &builtin_univariate()[4];
        let s = dist.sample(25, &mut stream(64, 5, 0, StreamRole::TrainingSample, 0));
        let ys = s.scalars().unwrap();
        let (sigma2, m0, alpha0) = (0.09, 0.1, 0.5);
        let draws = posterior_gaussian_known_variance(
            &s,
            sigma2,
            m0,
            alpha0,
            &ChainSettings::default(),
            &mut stream(64, 5, 0, StreamRole::Mcmc, 0),
        )
        .unwrap();
        let count = ys.len() as f64;
        let ybar = ys.iter().sum::<f64>() / count;
        let alpha_n = alpha0 + count;
        let want_mean = (alpha0 * m0 + count * ybar) / alpha_n;
        let want_var = sigma2 / alpha_n;
        let k = draws.draws.len() as f64;
        let got_mean = draws.param_mean(0);
        let got_var =
            draws.draws.iter().map(|d| (d[0] - got_mean).powi(2)).sum::<f64>() / (k - 1.0);
        // Three Monte Carlo standard errors of each statistic.
        let se_mean = (want_var / k).sqrt();
        assert!((got_mean - want_mean).abs() < 3.0 * se_mean, "{got_mean} vs {want_mean}");
        let se_var = want_var * (2.0 / (k - 1.0)).sqrt();
        assert!((got_var - want_var).abs() < 3.0 * se_var, "{got_var} vs {want_var}");
    }

    #[test]
    fn mixture_rejects_empty_sample() {
        assert!(matches!(
            posterior_mixture(
                &Sample::from_scalars(vec![]),
                &MixturePrior::default(),
                &ChainSettings::default(),
                &mut stream(65, 0, 0, StreamRole::Mcmc, 0)
            ),
            Err(BayesError::EmptySample)
        ));
    }
}
