//! Metropolis-within-Gibbs for the portfolio model: per-asset Gamma scales,
//! an LKJ prior on the correlation Cholesky factor, a normal location given
//! the covariance, and a multivariate-t likelihood with fixed degrees of
//! freedom.
//!
//! The chain moves on an unconstrained reparameterization — log scales and
//! atanh canonical partial correlations (CPCs) — so every stored draw maps
//! back to a symmetric positive-definite scale matrix by construction.

use super::{BayesError, ChainSettings, PortfolioPrior, PosteriorDraws};
use crate::distributions::Sample;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution as _, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

/// Vine level Beta parameter for the CPC in (0-based) column `j` of a
/// d-dimensional factor under LKJ concentration `eta`.
fn cpc_beta_shape(eta: f64, d: usize, j: usize) -> f64 {
    eta + (d as f64 - 2.0 - j as f64) / 2.0
}

/// Builds the unit-row correlation Cholesky factor from CPCs in row-major
/// order. `None` when accumulated rounding leaves no mass for a diagonal
/// entry; callers treat that as a rejected proposal.
fn corr_cholesky_from_cpcs(p: &[f64], n: usize) -> Option<DMatrix<f64>> {
    debug_assert_eq!(p.len(), n * (n - 1) / 2);
    let mut l = DMatrix::zeros(n, n);
    l[(0, 0)] = 1.0;
    let mut k = 0;
    for i in 1..n {
        let mut remaining: f64 = 1.0;
        for j in 0..i {
            let pij = p[k];
            k += 1;
            l[(i, j)] = pij * remaining.sqrt();
            remaining *= 1.0 - pij * pij;
            if remaining <= 1e-14 {
                return None;
            }
        }
        l[(i, i)] = remaining.sqrt();
    }
    Some(l)
}

/// Draws a correlation Cholesky factor whose correlation matrix follows
/// LKJ(`eta`); CPCs are vine Betas drawn row-major from `rng`.
pub fn sample_lkj_cholesky(n: usize, eta: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut p = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..n {
        for j in 0..i {
            let a = cpc_beta_shape(eta, n, j);
            let x = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
            let y = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
            p.push(2.0 * x / (x + y) - 1.0);
        }
    }
    corr_cholesky_from_cpcs(&p, n).expect("vine CPCs are strictly inside (-1, 1)")
}

struct PortfolioModel<'a> {
    rows: Vec<DVector<f64>>,
    prior: &'a PortfolioPrior,
    /// Per-point t normalization, excluding the log-determinant.
    lik_const: f64,
}

impl<'a> PortfolioModel<'a> {
    fn new(rows: Vec<DVector<f64>>, prior: &'a PortfolioPrior) -> Self {
        let d = prior.n_assets as f64;
        let nu = prior.nu;
        let lik_const = ln_gamma((nu + d) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * d * (nu * std::f64::consts::PI).ln();
        Self { rows, prior, lik_const }
    }

    /// Joint log density of data and parameters on the unconstrained scale,
    /// Jacobians included. `None` means the proposal is invalid.
    fn log_target(&self, mu: &DVector<f64>, log_sigma: &[f64], z: &[f64]) -> Option<f64> {
        let n = self.prior.n_assets;
        let p: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        let mut l = corr_cholesky_from_cpcs(&p, n)?;
        let sigma: Vec<f64> = log_sigma.iter().map(|v| v.exp()).collect();
        if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return None;
        }
        for i in 0..n {
            for j in 0..=i {
                l[(i, j)] *= sigma[i];
            }
        }
        let ln_det_l: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();

        let nu = self.prior.nu;
        let d = n as f64;
        let mut lp = 0.0;
        for row in &self.rows {
            let w = l.solve_lower_triangular(&(row - mu))?;
            lp += self.lik_const - ln_det_l
                - 0.5 * (nu + d) * (1.0 + w.norm_squared() / nu).ln();
        }

        // Location prior N(0, Sigma), up to a constant.
        let w = l.solve_lower_triangular(mu)?;
        lp += -0.5 * w.norm_squared() - ln_det_l;

        // Gamma(shape, rate) on each sigma plus the log-sigma Jacobian.
        for (s, ls) in sigma.iter().zip(log_sigma) {
            lp += self.prior.gamma_shape * ls - self.prior.gamma_rate * s;
        }

        // Vine Beta prior on each CPC plus the tanh Jacobian.
        let mut k = 0;
        for i in 1..n {
            for j in 0..i {
                lp += cpc_beta_shape(self.prior.eta, n, j) * (1.0 - p[k] * p[k]).ln();
                k += 1;
            }
        }
        Some(lp)
    }
}

fn run_chain(
    model: &PortfolioModel<'_>,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> PosteriorDraws {
    let n = model.prior.n_assets;
    let m = n * (n - 1) / 2;

    // Start at the data's marginal summary (or the prior's typical set when
    // there is no data) with an identity correlation.
    let (mut mu, mut log_sigma) = if model.rows.is_empty() {
        let prior_sigma_mean = model.prior.gamma_shape / model.prior.gamma_rate;
        (DVector::zeros(n), vec![prior_sigma_mean.ln(); n])
    } else {
        let count = model.rows.len() as f64;
        let mean = model.rows.iter().fold(DVector::zeros(n), |acc, r| acc + r) / count;
        let sds: Vec<f64> = (0..n)
            .map(|j| {
                let ss = model.rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>();
                (ss / (count - 1.0).max(1.0)).sqrt().max(1e-4)
            })
            .collect();
        (mean, sds.iter().map(|s| s.ln()).collect())
    };
    let mut z = vec![0.0; m];

    let n_obs = model.rows.len() as f64;
    let data_scale = if model.rows.is_empty() { 1.0 } else { 2.0 / n_obs.sqrt() };
    let mut scale_mu = if model.rows.is_empty() {
        1.0
    } else {
        let avg_sd = log_sigma.iter().map(|ls| ls.exp()).sum::<f64>() / n as f64;
        (2.0 * avg_sd / n_obs.sqrt()).max(1e-6)
    };
    let mut scale_sig = data_scale.clamp(0.02, 0.5);
    let mut scale_z = data_scale.clamp(0.02, 0.5);

    let mut current = model
        .log_target(&mu, &log_sigma, &z)
        .expect("initial state is valid");

    let mut draws = Vec::with_capacity(chain.draws);
    let mut accepted_post = 0usize;
    let mut proposals_post = 0usize;
    let mut window: [(usize, usize); 3] = [(0, 0); 3];
    let total_iters = chain.burn_in + chain.draws * chain.thin;
    for iter in 0..total_iters {
        for block in 0..3usize {
            let (mut mu_p, mut ls_p, mut z_p) = (mu.clone(), log_sigma.clone(), z.clone());
            match block {
                0 => {
                    for v in mu_p.iter_mut() {
                        *v += scale_mu * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                1 => {
                    for v in ls_p.iter_mut() {
                        *v += scale_sig * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                _ => {
                    for v in z_p.iter_mut() {
                        *v += scale_z * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            let proposal_lp = model.log_target(&mu_p, &ls_p, &z_p);
            let accept = match proposal_lp {
                Some(lp) => lp - current >= 0.0 || rng.random::<f64>().ln() < lp - current,
                None => false,
            };
            if accept {
                mu = mu_p;
                log_sigma = ls_p;
                z = z_p;
                current = proposal_lp.expect("accepted proposals have a value");
            }

            if iter < chain.burn_in {
                let (acc, tot) = &mut window[block];
                *acc += usize::from(accept);
                *tot += 1;
                if *tot == 50 {
                    let rate = *acc as f64 / 50.0;
                    let scale = match block {
                        0 => &mut scale_mu,
                        1 => &mut scale_sig,
                        _ => &mut scale_z,
                    };
                    if rate < 0.2 {
                        *scale *= 0.7;
                    } else if rate > 0.5 {
                        *scale *= 1.4;
                    }
                    window[block] = (0, 0);
                }
            } else {
                accepted_post += usize::from(accept);
                proposals_post += 1;
            }
        }

        if iter >= chain.burn_in && (iter - chain.burn_in + 1).is_multiple_of(chain.thin) {
            let mut draw = Vec::with_capacity(2 * n + m);
            draw.extend(mu.iter());
            draw.extend(log_sigma.iter().map(|ls| ls.exp()));
            draw.extend(z.iter().map(|v| v.tanh()));
            draws.push(draw);
        }
    }

    let acc_rate = if proposals_post == 0 {
        1.0
    } else {
        accepted_post as f64 / proposals_post as f64
    };
    PosteriorDraws::from_draws(draws, acc_rate)
}

/// Posterior draws `[mu; n][sigma; n][cpc; n(n-1)/2]` for an N×n return
/// sample under the portfolio model.
pub fn posterior_portfolio(
    s: &Sample,
    prior: &PortfolioPrior,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws, BayesError> {
    prior.validate()?;
    if s.dim() != prior.n_assets {
        return Err(BayesError::DimensionMismatch { expected: prior.n_assets, got: s.dim() });
    }
    if s.n() < 2 {
        return Err(BayesError::EmptySample);
    }
    let rows: Vec<DVector<f64>> = s.rows().map(DVector::from_row_slice).collect();
    Ok(run_chain(&PortfolioModel::new(rows, prior), chain, rng))
}

/// Draws from the joint prior (no likelihood term); a validation hook.
pub fn posterior_portfolio_prior_only(
    prior: &PortfolioPrior,
    chain: &ChainSettings,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws, BayesError> {
    prior.validate()?;
    Ok(run_chain(&PortfolioModel::new(Vec::new(), prior), chain, rng))
}

/// Scale matrix `Sigma = D L_corr L_corr^T D` encoded by one stored draw.
pub fn rebuild_scale_matrix(draw: &[f64], n_assets: usize) -> DMatrix<f64> {
    let n = n_assets;
    let sigma = &draw[n..2 * n];
    let p = &draw[2 * n..];
    let mut l = corr_cholesky_from_cpcs(p, n).expect("stored CPCs are strictly inside (-1, 1)");
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] *= sigma[i];
        }
    }
    &l * l.transpose()
}

/// Predictive second-moment matrix `E[z z^T]`: the average over draws of
/// `nu/(nu-2) * Sigma + mu mu^T`. Symmetric positive semi-definite.
pub fn predictive_second_moment_matrix(
    draws: &PosteriorDraws,
    prior: &PortfolioPrior,
) -> Result<DMatrix<f64>, BayesError> {
    if draws.draws.is_empty() {
        return Err(BayesError::NoDraws);
    }
    let n = prior.n_assets;
    let t_factor = prior.nu / (prior.nu - 2.0);
    let mut acc = DMatrix::zeros(n, n);
    for draw in &draws.draws {
        let mu = DVector::from_row_slice(&draw[..n]);
        acc += rebuild_scale_matrix(draw, n) * t_factor + &mu * mu.transpose();
    }
    acc /= draws.draws.len() as f64;
    // Symmetrize away accumulation rounding.
    Ok((&acc + acc.transpose()) * 0.5)
}

/// Centered predictive covariance: the second-moment matrix minus the outer
/// product of the predictive mean. This is what the minimum-variance solver
/// consumes on the Bayesian route.
pub fn bayes_portfolio_covariance(
    draws: &PosteriorDraws,
    prior: &PortfolioPrior,
) -> Result<DMatrix<f64>, BayesError> {
    let second = predictive_second_moment_matrix(draws, prior)?;
    let n = prior.n_assets;
    let mut mean = DVector::zeros(n);
    for draw in &draws.draws {
        mean += DVector::from_row_slice(&draw[..n]);
    }
    mean /= draws.draws.len() as f64;
    Ok(second - &mean * mean.transpose())
}

/// One draw from the portfolio posterior predictive: pick a stored draw,
/// then draw a t return vector from it.
pub fn sample_portfolio_predictive(
    draws: &PosteriorDraws,
    prior: &PortfolioPrior,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let n = prior.n_assets;
    let draw = &draws.draws[rng.random_range(0..draws.draws.len())];
    let mu = DVector::from_row_slice(&draw[..n]);
    let sigma = &draw[n..2 * n];
    let mut l = corr_cholesky_from_cpcs(&draw[2 * n..], n).expect("stored CPCs are valid");
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] *= sigma[i];
        }
    }
    let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let w = ChiSquared::new(prior.nu).expect("nu > 2").sample(rng);
    mu + l * g * (prior.nu / w).sqrt()
}
