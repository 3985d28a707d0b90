//! Posterior sampling and posterior-predictive decisions.
//!
//! Three model families: a beta on [-1, 1] with uniform shape priors
//! (random-walk Metropolis), a two-component Gaussian mixture with conjugate
//! priors (Gibbs), and a multivariate-t portfolio model with per-asset Gamma
//! scales and an LKJ correlation prior (Metropolis-within-Gibbs on an
//! unconstrained reparameterization).
//!
//! Instead of committing to one fitted parameter value, every sampler keeps
//! the posterior draws; the decision is taken against the predictive mixture
//! those draws induce. For the quadratic costs that predictive enters only
//! through its first two moments, which are averaged analytically per draw.

mod beta;
mod diagnostics;
mod mixture;
mod portfolio;

pub use beta::posterior_beta;
pub use diagnostics::effective_sample_size;
pub use mixture::{posterior_gaussian_known_variance, posterior_mixture, posterior_mixture_prior_only};
pub use portfolio::{
    bayes_portfolio_covariance, posterior_portfolio, posterior_portfolio_prior_only,
    predictive_second_moment_matrix, rebuild_scale_matrix, sample_lkj_cholesky,
    sample_portfolio_predictive,
};

use crate::distributions::{GaussianMixture2, MomentPair, Sample, ScaledBeta};
use crate::quadratic::{saa_minimize, DecisionBox, QuadraticCost};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("sample is empty")]
    EmptySample,
    #[error("expected a univariate sample, got d={0}")]
    NotUnivariate(usize),
    #[error("sample dimension {got} does not match the prior's {expected} assets")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("observation outside the model support: {0}")]
    OutOfSupport(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("posterior is empty")]
    NoDraws,
    #[error("a prior-only mixture run needs a fixed prior mean")]
    NeedsFixedPriorMean,
}

/// MCMC chain lengths. Draws are stored after burn-in, one per `thin`
/// iterations; proposal scales adapt only during burn-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSettings {
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self { draws: 5000, burn_in: 1000, thin: 1 }
    }
}

/// Stored posterior draws plus chain health indicators.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// One parameter vector per stored draw; the layout is fixed per family
    /// (beta: `[alpha, beta]`; mixture: `[rho1, mu1, mu2, sigma1, sigma2]`
    /// with `mu1 <= mu2`; portfolio: `[mu; n][sigma; n][cpc; n(n-1)/2]`).
    pub draws: Vec<Vec<f64>>,
    /// Fraction of accepted proposals after burn-in (1 for pure Gibbs).
    pub acceptance_rate: f64,
    pub diagnostics: ChainDiagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct ChainDiagnostics {
    /// Effective sample size per stored parameter.
    pub ess: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub(crate) fn from_draws(draws: Vec<Vec<f64>>, acceptance_rate: f64) -> Self {
        let dim = draws.first().map_or(0, Vec::len);
        let mut ess = Vec::with_capacity(dim);
        for j in 0..dim {
            let series: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            ess.push(effective_sample_size(&series));
        }
        let mut warnings = Vec::new();
        if !(0.05..=0.95).contains(&acceptance_rate) {
            warnings.push(format!(
                "acceptance rate {acceptance_rate:.3} outside [0.05, 0.95] after adaptation"
            ));
        }
        Self { draws, acceptance_rate, diagnostics: ChainDiagnostics { ess, warnings } }
    }

    /// Mean of one stored parameter across draws.
    pub fn param_mean(&self, index: usize) -> f64 {
        self.draws.iter().map(|d| d[index]).sum::<f64>() / self.draws.len() as f64
    }
}

/// Uniform prior bounds shared by both beta shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    pub lo: f64,
    pub hi: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { lo: 1.0, hi: 7.0 }
    }
}

impl BetaPrior {
    pub(crate) fn validate(&self) -> Result<(), BayesError> {
        if !(self.lo >= 1.0 && self.lo < self.hi && self.hi.is_finite()) {
            return Err(BayesError::InvalidPrior(format!(
                "beta prior needs 1 <= lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Where the mixture prior centers the component locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMean {
    /// Use the mean of the observed sample.
    SampleMean,
    Fixed(f64),
}

/// Conjugate prior for the two-component mixture: symmetric Dirichlet on the
/// weights, Gamma (the 1-D Wishart) on each precision, and a normal on each
/// location given its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixturePrior {
    pub delta: f64,
    pub v: f64,
    pub n: f64,
    pub alpha_prec: f64,
    pub m: PriorMean,
}

impl Default for MixturePrior {
    fn default() -> Self {
        Self { delta: 10.0, v: 0.1, n: 2.0, alpha_prec: 0.1, m: PriorMean::SampleMean }
    }
}

impl MixturePrior {
    pub(crate) fn validate(&self) -> Result<(), BayesError> {
        for (name, v) in [
            ("delta", self.delta),
            ("v", self.v),
            ("n", self.n),
            ("alpha_prec", self.alpha_prec),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BayesError::InvalidPrior(format!("mixture prior {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Gamma(shape, rate) identification of the univariate Wishart(V, n)
    /// on each precision.
    pub(crate) fn precision_gamma(&self) -> (f64, f64) {
        (self.n / 2.0, 1.0 / (2.0 * self.v))
    }
}

/// Prior for the portfolio model: per-asset Gamma scales, LKJ concentration
/// for the correlation Cholesky factor, and the fixed t degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioPrior {
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub eta: f64,
    pub n_assets: usize,
    pub nu: f64,
}

impl Default for PortfolioPrior {
    fn default() -> Self {
        Self { gamma_shape: 3.0, gamma_rate: 1.0, eta: 2.0, n_assets: 5, nu: 3.0 }
    }
}

impl PortfolioPrior {
    pub(crate) fn validate(&self) -> Result<(), BayesError> {
        for (name, v) in [
            ("gamma_shape", self.gamma_shape),
            ("gamma_rate", self.gamma_rate),
            ("eta", self.eta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BayesError::InvalidPrior(format!("portfolio prior {name} must be > 0, got {v}")));
            }
        }
        if self.n_assets < 2 {
            return Err(BayesError::InvalidPrior("portfolio prior needs n_assets >= 2".into()));
        }
        if !(self.nu.is_finite() && self.nu > 2.0) {
            return Err(BayesError::InvalidPrior(format!("portfolio prior needs nu > 2, got {}", self.nu)));
        }
        Ok(())
    }
}

/// Which univariate model a stored draw vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnivariateFamily {
    Beta,
    Mixture,
}

/// Prior choice for the quadratic-study Bayesian decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnivariatePrior {
    Beta(BetaPrior),
    Mixture(MixturePrior),
}

impl UnivariatePrior {
    pub fn family(&self) -> UnivariateFamily {
        match self {
            UnivariatePrior::Beta(_) => UnivariateFamily::Beta,
            UnivariatePrior::Mixture(_) => UnivariateFamily::Mixture,
        }
    }
}

fn draw_moments(draw: &[f64], family: UnivariateFamily) -> MomentPair {
    match family {
        UnivariateFamily::Beta => ScaledBeta::new(draw[0], draw[1])
            .expect("stored draws satisfy prior support")
            .moments(),
        UnivariateFamily::Mixture => {
            let (rho, mu1, mu2, s1, s2) = (draw[0], draw[1], draw[2], draw[3], draw[4]);
            MomentPair::new(
                rho * mu1 + (1.0 - rho) * mu2,
                rho * (mu1 * mu1 + s1 * s1) + (1.0 - rho) * (mu2 * mu2 + s2 * s2),
            )
        }
    }
}

/// Moments of the posterior-predictive mixture: the per-draw analytic
/// moments of `f(y; theta)` averaged over the stored draws.
pub fn predictive_moments_1d(
    draws: &PosteriorDraws,
    family: UnivariateFamily,
) -> Result<MomentPair, BayesError> {
    if draws.draws.is_empty() {
        return Err(BayesError::NoDraws);
    }
    let k = draws.draws.len() as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for draw in &draws.draws {
        let m = draw_moments(draw, family);
        m1 += m.m1;
        m2 += m.m2;
    }
    Ok(MomentPair::new(m1 / k, m2 / k))
}

/// One draw from the univariate posterior predictive: pick a stored draw,
/// then draw `y` from it.
pub fn sample_univariate_predictive(
    draws: &PosteriorDraws,
    family: UnivariateFamily,
    rng: &mut impl Rng,
) -> f64 {
    let draw = &draws.draws[rng.random_range(0..draws.draws.len())];
    match family {
        UnivariateFamily::Beta => ScaledBeta::new(draw[0], draw[1])
            .expect("stored draws satisfy prior support")
            .sample_one(rng),
        UnivariateFamily::Mixture => {
            GaussianMixture2::new(draw[1], draw[2], draw[3], draw[4], draw[0])
                .expect("stored draws satisfy prior support")
                .sample_one(rng)
        }
    }
}

/// Full Bayesian route for a quadratic cost: sample the posterior, average
/// the predictive moments, optimize the expected cost exactly.
pub fn bayes_decision_quadratic(
    s: &Sample,
    cost: &QuadraticCost,
    prior: &UnivariatePrior,
    chain: &ChainSettings,
    bounds: &DecisionBox,
    rng: &mut impl Rng,
) -> Result<f64, BayesError> {
    let draws = match prior {
        UnivariatePrior::Beta(p) => posterior_beta(s, p, chain, rng)?,
        UnivariatePrior::Mixture(p) => posterior_mixture(s, p, chain, rng)?,
    };
    let moments = predictive_moments_1d(&draws, prior.family())?;
    Ok(saa_minimize(cost, moments, bounds))
}

/// Sampling route for the Bayesian quadratic decision: SAA on a large
/// resample from the posterior predictive. Cross-validates
/// [`bayes_decision_quadratic`].
pub fn bayes_decision_quadratic_mc(
    s: &Sample,
    cost: &QuadraticCost,
    prior: &UnivariatePrior,
    chain: &ChainSettings,
    bounds: &DecisionBox,
    predictive_draws: usize,
    rng: &mut impl Rng,
) -> Result<f64, BayesError> {
    let draws = match prior {
        UnivariatePrior::Beta(p) => posterior_beta(s, p, chain, rng)?,
        UnivariatePrior::Mixture(p) => posterior_mixture(s, p, chain, rng)?,
    };
    let family = prior.family();
    let ys: Vec<f64> = (0..predictive_draws)
        .map(|_| sample_univariate_predictive(&draws, family, rng))
        .collect();
    let moments = crate::quadratic::sample_moments(&Sample::from_scalars(ys))
        .expect("predictive resample is nonempty");
    Ok(saa_minimize(cost, moments, bounds))
}
