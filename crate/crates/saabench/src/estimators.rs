//! Decision procedures for the scalar quadratic test set: sample average
//! approximation, bootstrap aggregation, kernel smoothing, and constrained
//! maximum likelihood.
//!
//! Kernel and MLE decisions go through the analytic-moment path: for a
//! quadratic cost the optimal decision depends on the predictive density
//! only through its first two moments, so smoothing and fitting reduce to
//! exact moment transforms. The `*_mc` variants keep the large-resample
//! sampling route for cross-validation.

use crate::distributions::{GaussianMixture2, MomentPair, Sample, ScaledBeta};
use crate::quadratic::{sample_moments, saa_minimize, DecisionBox, QuadraticCost, QuadraticError};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("sample is empty")]
    EmptySample,
    #[error("expected a univariate sample, got d={0}")]
    NotUnivariate(usize),
    #[error("sample has zero variance; Scott bandwidth is degenerate")]
    DegenerateBandwidth,
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
}

impl From<QuadraticError> for EstimatorError {
    fn from(e: QuadraticError) -> Self {
        match e {
            QuadraticError::EmptySample => EstimatorError::EmptySample,
            QuadraticError::NotUnivariate(d) => EstimatorError::NotUnivariate(d),
        }
    }
}

/// Bootstrap-aggregation settings. `resample_size = None` means M = N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaggingSpec {
    pub replicates: usize,
    pub resample_size: Option<usize>,
    pub with_replacement: bool,
}

impl Default for BaggingSpec {
    fn default() -> Self {
        Self { replicates: 400, resample_size: None, with_replacement: true }
    }
}

/// Bandwidth selection for the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `h = std(s) * N^(-1/(d+4))` with the 1/(N-1) std divisor.
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub bandwidth: BandwidthRule,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { bandwidth: BandwidthRule::Scott }
    }
}

/// Parametric family for the MLE route, with the fitting constraints used
/// throughout the scalar study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MleFamily {
    /// Unimodal beta on [-1, 1]: both shapes constrained > 1.
    ScaledBeta,
    /// Two-component Gaussian mixture with a scale floor.
    GaussianMixture2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleSpec {
    pub family: MleFamily,
    /// Lower bound on each mixture scale.
    pub sigma_floor: f64,
    /// Seeded EM restarts for the mixture family.
    pub restarts: usize,
    pub max_iters: usize,
}

impl MleSpec {
    pub fn beta() -> Self {
        Self { family: MleFamily::ScaledBeta, sigma_floor: 0.1, restarts: 10, max_iters: 1000 }
    }

    pub fn mixture() -> Self {
        Self { family: MleFamily::GaussianMixture2, sigma_floor: 0.1, restarts: 10, max_iters: 1000 }
    }
}

/// A fitted parametric density, ready to report moments or draws.
#[derive(Debug, Clone)]
pub enum FittedUnivariate {
    Beta(ScaledBeta),
    Mixture(GaussianMixture2),
}

impl FittedUnivariate {
    pub fn moments(&self) -> MomentPair {
        match self {
            FittedUnivariate::Beta(d) => d.moments(),
            FittedUnivariate::Mixture(d) => d.moments(),
        }
    }

    pub fn sample_one(&self, rng: &mut impl Rng) -> f64 {
        match self {
            FittedUnivariate::Beta(d) => d.sample_one(rng),
            FittedUnivariate::Mixture(d) => d.sample_one(rng),
        }
    }
}

/// SAA: optimize the in-sample objective exactly.
pub fn saa_decision(
    s: &Sample,
    cost: &QuadraticCost,
    bounds: &DecisionBox,
) -> Result<f64, EstimatorError> {
    Ok(saa_minimize(cost, sample_moments(s)?, bounds))
}

/// Moment pairs of `B` bootstrap resamples, drawn sequentially from `rng`.
///
/// These are the sufficient statistics of every per-resample SAA problem, so
/// one pass serves any number of cost functions.
pub fn bootstrap_moment_pairs(
    s: &Sample,
    spec: &BaggingSpec,
    rng: &mut impl Rng,
) -> Result<Vec<MomentPair>, EstimatorError> {
    let ys = s.scalars().ok_or(EstimatorError::NotUnivariate(s.dim()))?;
    if ys.is_empty() {
        return Err(EstimatorError::EmptySample);
    }
    if spec.replicates == 0 {
        return Err(EstimatorError::EstimationFailed("bagging needs B >= 1".into()));
    }
    let m = spec.resample_size.unwrap_or(ys.len());
    if m == 0 {
        return Err(EstimatorError::EstimationFailed("bagging needs M >= 1".into()));
    }
    if !spec.with_replacement && m > ys.len() {
        return Err(EstimatorError::EstimationFailed(
            "subsampling without replacement needs M <= N".into(),
        ));
    }
    let mut out = Vec::with_capacity(spec.replicates);
    let mut scratch = Vec::with_capacity(m);
    for _ in 0..spec.replicates {
        scratch.clear();
        if spec.with_replacement {
            for _ in 0..m {
                scratch.push(ys[rng.random_range(0..ys.len())]);
            }
        } else {
            let idx = rand::seq::index::sample(rng, ys.len(), m);
            scratch.extend(idx.iter().map(|i| ys[i]));
        }
        out.push(sample_moments(&Sample::from_scalars(scratch.clone()))?);
    }
    Ok(out)
}

/// Bagging: average the SAA decisions of `B` bootstrap resamples.
pub fn bag_decision(
    s: &Sample,
    cost: &QuadraticCost,
    spec: &BaggingSpec,
    bounds: &DecisionBox,
    rng: &mut impl Rng,
) -> Result<f64, EstimatorError> {
    let moments = bootstrap_moment_pairs(s, spec, rng)?;
    Ok(average_decisions(cost, &moments, bounds))
}

/// Mean of per-resample decisions. Identical decisions short-circuit so a
/// degenerate sample reproduces the SAA decision bit-for-bit.
pub(crate) fn average_decisions(
    cost: &QuadraticCost,
    moments: &[MomentPair],
    bounds: &DecisionBox,
) -> f64 {
    let first = saa_minimize(cost, moments[0], bounds);
    let mut sum = 0.0;
    let mut all_equal = true;
    for m in moments {
        let x = saa_minimize(cost, *m, bounds);
        all_equal &= x.to_bits() == first.to_bits();
        sum += x;
    }
    if all_equal {
        first
    } else {
        sum / moments.len() as f64
    }
}

/// Scott's-rule bandwidth for a univariate sample.
pub fn scott_bandwidth(s: &Sample) -> Result<f64, EstimatorError> {
    let ys = s.scalars().ok_or(EstimatorError::NotUnivariate(s.dim()))?;
    if ys.is_empty() {
        return Err(EstimatorError::EmptySample);
    }
    if ys.len() < 2 {
        return Err(EstimatorError::DegenerateBandwidth);
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(EstimatorError::DegenerateBandwidth);
    }
    Ok(var.sqrt() * n.powf(-0.2))
}

/// Exact moments of the Gaussian-kernel smoothed density: smoothing leaves
/// the mean alone and adds `h^2` to the raw second moment.
pub fn kernel_smoothed_moments(
    s: &Sample,
    spec: &KernelSpec,
) -> Result<(MomentPair, f64), EstimatorError> {
    let h = match spec.bandwidth {
        BandwidthRule::Scott => scott_bandwidth(s)?,
        BandwidthRule::Fixed(h) => {
            if !(h.is_finite() && h >= 0.0) {
                return Err(EstimatorError::EstimationFailed(format!(
                    "fixed bandwidth must be finite and >= 0, got {h}"
                )));
            }
            h
        }
    };
    let m = sample_moments(s)?;
    Ok((MomentPair::new(m.m1, m.m2 + h * h), h))
}

/// Kernel smoothing: optimize the expected cost under the smoothed density.
pub fn kernel_decision(
    s: &Sample,
    cost: &QuadraticCost,
    spec: &KernelSpec,
    bounds: &DecisionBox,
) -> Result<f64, EstimatorError> {
    let (m, _) = kernel_smoothed_moments(s, spec)?;
    Ok(saa_minimize(cost, m, bounds))
}

/// One draw from the kernel density estimate: a data point plus kernel noise.
pub fn kde_draw(ys: &[f64], h: f64, rng: &mut impl Rng) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    ys[rng.random_range(0..ys.len())] + h * g
}

/// Sampling route for the kernel decision: SAA on a large resample from the
/// smoothed density. Cross-validates [`kernel_decision`].
pub fn kernel_decision_mc(
    s: &Sample,
    cost: &QuadraticCost,
    spec: &KernelSpec,
    bounds: &DecisionBox,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<f64, EstimatorError> {
    let (_, h) = kernel_smoothed_moments(s, spec)?;
    let ys = s.scalars().expect("dimension checked above");
    let resample: Vec<f64> = (0..draws).map(|_| kde_draw(ys, h, rng)).collect();
    saa_decision(&Sample::from_scalars(resample), cost, bounds)
}

/// Constrained maximum-likelihood fit of the requested family.
pub fn mle_fit(s: &Sample, spec: &MleSpec) -> Result<FittedUnivariate, EstimatorError> {
    let ys = s.scalars().ok_or(EstimatorError::NotUnivariate(s.dim()))?;
    if ys.is_empty() {
        return Err(EstimatorError::EmptySample);
    }
    match spec.family {
        MleFamily::ScaledBeta => fit_scaled_beta(ys).map(FittedUnivariate::Beta),
        MleFamily::GaussianMixture2 => {
            fit_mixture2(ys, spec.sigma_floor, spec.restarts, spec.max_iters)
                .map(FittedUnivariate::Mixture)
        }
    }
}

/// MLE route: fit, take the fitted family's exact moments, optimize.
pub fn mle_decision(
    s: &Sample,
    cost: &QuadraticCost,
    spec: &MleSpec,
    bounds: &DecisionBox,
) -> Result<f64, EstimatorError> {
    let fitted = mle_fit(s, spec)?;
    Ok(saa_minimize(cost, fitted.moments(), bounds))
}

/// Sampling route for the MLE decision: SAA on a large resample from the
/// fitted density.
pub fn mle_decision_mc(
    s: &Sample,
    cost: &QuadraticCost,
    spec: &MleSpec,
    bounds: &DecisionBox,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<f64, EstimatorError> {
    let fitted = mle_fit(s, spec)?;
    let resample: Vec<f64> = (0..draws).map(|_| fitted.sample_one(rng)).collect();
    saa_decision(&Sample::from_scalars(resample), cost, bounds)
}

/// Sum of log-densities of `ys` under a scaled beta.
pub fn scaled_beta_log_likelihood(ys: &[f64], d: &ScaledBeta) -> f64 {
    ys.iter().map(|&y| d.log_pdf(y)).sum()
}

/// Sum of log-densities of `ys` under a two-component mixture.
pub fn mixture_log_likelihood(ys: &[f64], d: &GaussianMixture2) -> f64 {
    ys.iter().map(|&y| d.log_pdf(y)).sum()
}

// --- beta MLE ---------------------------------------------------------

fn fit_scaled_beta(ys: &[f64]) -> Result<ScaledBeta, EstimatorError> {
    if ys.iter().any(|y| !y.is_finite() || y.abs() > 1.0) {
        return Err(EstimatorError::EstimationFailed(
            "beta family requires observations inside [-1, 1]".into(),
        ));
    }
    // Boundary points are pulled inward so the log-likelihood stays finite.
    let eps = 1e-9;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &y in ys {
        let u = ((y + 1.0) / 2.0).clamp(eps, 1.0 - eps);
        s1 += u.ln();
        s2 += (1.0 - u).ln();
    }
    let n = ys.len() as f64;

    // Negative log-likelihood in unconstrained coordinates alpha = 1 + e^a.
    let nll = |p: &[f64]| {
        let alpha = 1.0 + p[0].min(30.0).exp();
        let beta = 1.0 + p[1].min(30.0).exp();
        let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
        n * (ln_b + std::f64::consts::LN_2) - (alpha - 1.0) * s1 - (beta - 1.0) * s2
    };

    // Moment-matched start in u-space.
    let mean_u = ys.iter().map(|y| (y + 1.0) / 2.0).sum::<f64>() / n;
    let var_u = ys
        .iter()
        .map(|y| ((y + 1.0) / 2.0 - mean_u).powi(2))
        .sum::<f64>()
        / n;
    let (a0, b0) = if var_u > 1e-12 && mean_u > 0.0 && mean_u < 1.0 {
        let common = (mean_u * (1.0 - mean_u) / var_u - 1.0).max(0.0);
        (
            (mean_u * common).clamp(1.001, 50.0),
            ((1.0 - mean_u) * common).clamp(1.001, 50.0),
        )
    } else {
        (2.0, 2.0)
    };
    let init = [(a0 - 1.0f64).ln(), (b0 - 1.0f64).ln()];

    let best = nelder_mead(nll, &init, 0.5, 500, 1e-8)
        .map_err(|_| EstimatorError::EstimationFailed("beta MLE did not converge".into()))?;
    let alpha = 1.0 + best[0].min(30.0).exp();
    let beta = 1.0 + best[1].min(30.0).exp();
    Ok(ScaledBeta::new(alpha, beta).expect("transform keeps shapes positive"))
}

// --- mixture MLE (EM) -------------------------------------------------

fn fit_mixture2(
    ys: &[f64],
    sigma_floor: f64,
    restarts: usize,
    max_iters: usize,
) -> Result<GaussianMixture2, EstimatorError> {
    use rand::SeedableRng;
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sigma0 = std.max(sigma_floor);

    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];

    // Restart initializations are derived from a fixed seed so the fit is a
    // pure function of the sample.
    let mut restart_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5aab_e5c4);
    let mut best: Option<(f64, GaussianMixture2)> = None;
    for r in 0..restarts.max(1) {
        let (mu1, mu2) = if r == 0 {
            (quantile(0.25), quantile(0.75))
        } else {
            (
                ys[restart_rng.random_range(0..ys.len())],
                ys[restart_rng.random_range(0..ys.len())],
            )
        };
        if let Some((ll, fit)) = em_mixture2(ys, 0.5, mu1, mu2, sigma0, sigma0, sigma_floor, max_iters) {
            // Strict improvement keeps ties with the earliest restart.
            if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                best = Some((ll, fit));
            }
        }
    }
    let (_, fit) = best.ok_or_else(|| {
        EstimatorError::EstimationFailed("mixture EM did not converge from any restart".into())
    })?;
    Ok(fit)
}

/// One EM run; returns the final log-likelihood and fit (components ordered
/// by location), or `None` when the iteration cap is hit before the
/// likelihood settles.
#[allow(clippy::too_many_arguments)]
fn em_mixture2(
    ys: &[f64],
    mut rho: f64,
    mut mu1: f64,
    mut mu2: f64,
    mut sigma1: f64,
    mut sigma2: f64,
    sigma_floor: f64,
    max_iters: usize,
) -> Option<(f64, GaussianMixture2)> {
    use crate::distributions::normal_pdf;
    let n = ys.len() as f64;
    let floor_var = sigma_floor * sigma_floor;
    let mut last_ll = f64::NEG_INFINITY;
    let mut resp = vec![0.0; ys.len()];
    for _ in 0..max_iters {
        // E step
        let mut ll = 0.0;
        for (i, &y) in ys.iter().enumerate() {
            let p1 = rho * normal_pdf(y, mu1, sigma1);
            let p2 = (1.0 - rho) * normal_pdf(y, mu2, sigma2);
            let total = p1 + p2;
            resp[i] = if total > 0.0 { p1 / total } else { 0.5 };
            ll += total.max(f64::MIN_POSITIVE).ln();
        }
        // M step
        let n1: f64 = resp.iter().sum();
        let n2 = n - n1;
        if n1 > 1e-12 {
            let new_mu1 = ys.iter().zip(&resp).map(|(y, r)| r * y).sum::<f64>() / n1;
            let v1 = ys
                .iter()
                .zip(&resp)
                .map(|(y, r)| r * (y - new_mu1).powi(2))
                .sum::<f64>()
                / n1;
            mu1 = new_mu1;
            sigma1 = v1.max(floor_var).sqrt();
        }
        if n2 > 1e-12 {
            let new_mu2 = ys.iter().zip(&resp).map(|(y, r)| (1.0 - r) * y).sum::<f64>() / n2;
            let v2 = ys
                .iter()
                .zip(&resp)
                .map(|(y, r)| (1.0 - r) * (y - new_mu2).powi(2))
                .sum::<f64>()
                / n2;
            mu2 = new_mu2;
            sigma2 = v2.max(floor_var).sqrt();
        }
        rho = (n1 / n).clamp(0.0, 1.0);

        if (ll - last_ll).abs() <= 1e-8 * (1.0 + ll.abs()) {
            let fit = if mu1 <= mu2 {
                GaussianMixture2::new(mu1, mu2, sigma1, sigma2, rho)
            } else {
                GaussianMixture2::new(mu2, mu1, sigma2, sigma1, 1.0 - rho)
            }
            .ok()?;
            return Some((ll, fit));
        }
        last_ll = ll;
    }
    None
}

// --- derivative-free simplex search ------------------------------------

/// Nelder-Mead over R^d. Returns the best vertex once the simplex's function
/// values agree to `ftol`; errors if the iteration cap is exhausted first.
fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    init: &[f64],
    step: f64,
    max_iters: usize,
    ftol: f64,
) -> Result<Vec<f64>, ()> {
    let d = init.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((init.to_vec(), f(init)));
    for i in 0..d {
        let mut v = init.to_vec();
        v[i] += step;
        let fv = f(&v);
        simplex.push((v, fv));
    }

    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[d].1);
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            return Ok(simplex[0].0.clone());
        }

        let mut centroid = vec![0.0; d];
        for (v, _) in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = blend(1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = blend(2.0);
            let fe = f(&expanded);
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[d].1 { blend(0.5) } else { blend(-0.5) };
            let fc = f(&contracted);
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let anchor = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = entry
                        .0
                        .iter()
                        .zip(&anchor)
                        .map(|(x, a)| a + 0.5 * (x - a))
                        .collect();
                    let fv = f(&v);
                    *entry = (v, fv);
                }
            }
        }
    }
    Err(())
}
