//! Ground-truth generative families: exact samplers, densities, and
//! closed-form moments.
//!
//! Three families cover both benchmark studies: a beta rescaled to
//! `[-1, 1]`, a two-component Gaussian mixture, and a multivariate Student t.
//! All objects are immutable after construction and safe to share across
//! threads; random streams are owned by one caller at a time.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta as BetaSampler, ChiSquared, Distribution as _, StandardNormal};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("invalid {family} parameter: {reason}")]
    InvalidParameter { family: &'static str, reason: String },
    #[error("analytic moments are not available for {0}")]
    MomentsUnavailable(&'static str),
}

fn invalid(family: &'static str, reason: impl Into<String>) -> DistributionError {
    DistributionError::InvalidParameter {
        family,
        reason: reason.into(),
    }
}

/// First and second raw moments `(E[y], E[y^2])` — the sufficient statistics
/// the quadratic cost family depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub m1: f64,
    pub m2: f64,
}

impl MomentPair {
    pub fn new(m1: f64, m2: f64) -> Self {
        Self { m1, m2 }
    }

    /// Central second moment, clamped at zero against rounding.
    pub fn variance(&self) -> f64 {
        (self.m2 - self.m1 * self.m1).max(0.0)
    }
}

/// An N×d matrix of observations, row-major. d=1 for the scalar study,
/// d=5 for portfolios.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Sample {
    pub fn from_scalars(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { n, d: 1, values }
    }

    /// Builds a multivariate sample from `n` rows of width `d`.
    /// Panics if the row-major buffer length is not `n * d`.
    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * d, "row-major buffer has wrong length");
        Self { n, d, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The observations as a flat slice when d=1.
    pub fn scalars(&self) -> Option<&[f64]> {
        (self.d == 1).then_some(&self.values[..])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Per-column sample standard deviations with the 1/(N-1) divisor.
    pub fn column_stds(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.d)
            .map(|j| {
                let mean = self.rows().map(|r| r[j]).sum::<f64>() / n;
                let ss = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

/// Beta(alpha, beta) linearly mapped onto the support `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledBeta {
    alpha: f64,
    beta: f64,
}

impl ScaledBeta {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, DistributionError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid("scaled beta", format!("alpha must be > 0, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("scaled beta", format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Density at `y`; zero outside `[-1, 1]`.
    pub fn pdf(&self, y: f64) -> f64 {
        if !(-1.0..=1.0).contains(&y) {
            return 0.0;
        }
        self.log_pdf(y).exp()
    }

    /// Log-density at `y`; `-inf` outside the support.
    pub fn log_pdf(&self, y: f64) -> f64 {
        if !(-1.0..=1.0).contains(&y) {
            return f64::NEG_INFINITY;
        }
        let u = (y + 1.0) / 2.0;
        // 0.5 * BetaPdf((y+1)/2): the 1/2 is the Jacobian of the rescaling.
        let ln_b = ln_gamma(self.alpha) + ln_gamma(self.beta) - ln_gamma(self.alpha + self.beta);
        (self.alpha - 1.0) * u.ln() + (self.beta - 1.0) * (1.0 - u).ln()
            - ln_b
            - std::f64::consts::LN_2
    }

    pub fn moments(&self) -> MomentPair {
        let s = self.alpha + self.beta;
        let eu = self.alpha / s;
        let eu2 = self.alpha * (self.alpha + 1.0) / (s * (s + 1.0));
        MomentPair::new(2.0 * eu - 1.0, 4.0 * eu2 - 4.0 * eu + 1.0)
    }

    pub fn sample_one(&self, rng: &mut impl Rng) -> f64 {
        let u = BetaSampler::new(self.alpha, self.beta)
            .expect("parameters validated at construction")
            .sample(rng);
        2.0 * u - 1.0
    }
}

/// Two-component Gaussian mixture. `rho` is the weight of the FIRST
/// component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixture2 {
    mu1: f64,
    mu2: f64,
    sigma1: f64,
    sigma2: f64,
    rho: f64,
}

impl GaussianMixture2 {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self, DistributionError> {
        if !(sigma1.is_finite() && sigma1 > 0.0) || !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(invalid(
                "gaussian mixture",
                format!("scales must be > 0, got ({sigma1}, {sigma2})"),
            ));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(invalid("gaussian mixture", format!("rho must be in [0,1], got {rho}")));
        }
        if !mu1.is_finite() || !mu2.is_finite() {
            return Err(invalid("gaussian mixture", "locations must be finite"));
        }
        Ok(Self { mu1, mu2, sigma1, sigma2, rho })
    }

    pub fn params(&self) -> (f64, f64, f64, f64, f64) {
        (self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.rho * normal_pdf(y, self.mu1, self.sigma1)
            + (1.0 - self.rho) * normal_pdf(y, self.mu2, self.sigma2)
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        self.pdf(y).ln()
    }

    pub fn moments(&self) -> MomentPair {
        let m1 = self.rho * self.mu1 + (1.0 - self.rho) * self.mu2;
        let m2 = self.rho * (self.mu1 * self.mu1 + self.sigma1 * self.sigma1)
            + (1.0 - self.rho) * (self.mu2 * self.mu2 + self.sigma2 * self.sigma2);
        MomentPair::new(m1, m2)
    }

    pub fn sample_one(&self, rng: &mut impl Rng) -> f64 {
        // Component pick first, then the normal draw, so a seed fixes both.
        let (mu, sigma) = if rng.random::<f64>() < self.rho {
            (self.mu1, self.sigma1)
        } else {
            (self.mu2, self.sigma2)
        };
        let g: f64 = rng.sample(StandardNormal);
        mu + sigma * g
    }
}

pub fn normal_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Multivariate Student t with location `mu`, SPD scale matrix, and
/// `nu > 2` degrees of freedom (so the covariance `scale * nu/(nu-2)` exists).
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateT {
    mu: DVector<f64>,
    scale: DMatrix<f64>,
    nu: f64,
    scale_chol: DMatrix<f64>,
    ln_pdf_const: f64,
}

impl MultivariateT {
    pub fn new(mu: DVector<f64>, scale: DMatrix<f64>, nu: f64) -> Result<Self, DistributionError> {
        let n = mu.len();
        if scale.nrows() != n || scale.ncols() != n {
            return Err(invalid("multivariate t", "scale matrix shape must match location length"));
        }
        if !(nu.is_finite() && nu > 2.0) {
            return Err(invalid("multivariate t", format!("nu must be > 2, got {nu}")));
        }
        let asym = (&scale - scale.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(invalid("multivariate t", format!("scale matrix asymmetric by {asym:e}")));
        }
        let scale_chol = Cholesky::new(scale.clone())
            .ok_or_else(|| invalid("multivariate t", "scale matrix is not positive definite"))?
            .l();
        let ln_det_l: f64 = (0..n).map(|i| scale_chol[(i, i)].ln()).sum();
        let d = n as f64;
        let ln_pdf_const = ln_gamma((nu + d) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * d * (nu * std::f64::consts::PI).ln()
            - ln_det_l;
        Ok(Self { mu, scale, nu, scale_chol, ln_pdf_const })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn location(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// `scale * nu/(nu-2)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scale * (self.nu / (self.nu - 2.0))
    }

    pub fn log_pdf(&self, y: &DVector<f64>) -> f64 {
        let z = self
            .scale_chol
            .solve_lower_triangular(&(y - &self.mu))
            .expect("nonsingular");
        let mahal = z.norm_squared();
        let d = self.dim() as f64;
        self.ln_pdf_const - 0.5 * (self.nu + d) * (1.0 + mahal / self.nu).ln()
    }

    pub fn pdf(&self, y: &DVector<f64>) -> f64 {
        self.log_pdf(y).exp()
    }

    pub fn sample_one(&self, rng: &mut impl Rng) -> DVector<f64> {
        // y = mu + L g / sqrt(w / nu): the n normals come first, then the
        // chi-square, all from the same stream.
        let n = self.dim();
        let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let w = ChiSquared::new(self.nu).expect("nu validated").sample(rng);
        &self.mu + &self.scale_chol * g * (self.nu / w).sqrt()
    }
}

/// A generative model the harness can treat as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueDistribution {
    ScaledBeta(ScaledBeta),
    GaussianMixture2(GaussianMixture2),
    MultivariateT(MultivariateT),
}

impl TrueDistribution {
    pub fn dim(&self) -> usize {
        match self {
            TrueDistribution::ScaledBeta(_) | TrueDistribution::GaussianMixture2(_) => 1,
            TrueDistribution::MultivariateT(t) => t.dim(),
        }
    }

    /// `n` i.i.d. draws; the same seed yields a bit-identical sample.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Sample {
        assert!(n >= 1, "sample size must be at least 1");
        match self {
            TrueDistribution::ScaledBeta(d) => {
                Sample::from_scalars((0..n).map(|_| d.sample_one(rng)).collect())
            }
            TrueDistribution::GaussianMixture2(d) => {
                Sample::from_scalars((0..n).map(|_| d.sample_one(rng)).collect())
            }
            TrueDistribution::MultivariateT(d) => {
                let dim = d.dim();
                let mut values = Vec::with_capacity(n * dim);
                for _ in 0..n {
                    values.extend_from_slice(d.sample_one(rng).as_slice());
                }
                Sample::from_row_major(n, dim, values)
            }
        }
    }

    /// Exact `(E[y], E[y^2])` for the univariate families.
    pub fn analytic_moments(&self) -> Result<MomentPair, DistributionError> {
        match self {
            TrueDistribution::ScaledBeta(d) => Ok(d.moments()),
            TrueDistribution::GaussianMixture2(d) => Ok(d.moments()),
            TrueDistribution::MultivariateT(_) => {
                Err(DistributionError::MomentsUnavailable("multivariate t"))
            }
        }
    }
}

/// The five univariate truths of the scalar study, ids 1..=5.
pub fn builtin_univariate() -> Vec<TrueDistribution> {
    vec![
        TrueDistribution::ScaledBeta(ScaledBeta::new(2.0, 2.0).unwrap()),
        TrueDistribution::ScaledBeta(ScaledBeta::new(5.0, 5.0).unwrap()),
        TrueDistribution::ScaledBeta(ScaledBeta::new(2.0, 5.0).unwrap()),
        TrueDistribution::GaussianMixture2(
            GaussianMixture2::new(-0.5, 0.4, 0.15, 0.3, 0.6).unwrap(),
        ),
        TrueDistribution::GaussianMixture2(
            GaussianMixture2::new(-0.1, 0.4, 0.3, 0.1, 0.7).unwrap(),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamRole};
    use approx::assert_relative_eq;

    #[test]
    fn scaled_beta_pdf_matches_transform() {
        let d = ScaledBeta::new(2.0, 2.0).unwrap();
        // Beta(2,2) pdf at 1/2 is 1.5; the half Jacobian gives 0.75.
        assert_relative_eq!(d.pdf(0.0), 0.75, max_relative = 1e-12);
        assert_eq!(ScaledBeta::new(2.0, 5.0).unwrap().pdf(1.5), 0.0);
        assert_eq!(d.pdf(-1.0001), 0.0);
    }

    #[test]
    fn degenerate_mixture_pdf() {
        let d = GaussianMixture2::new(0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(
            d.pdf(0.0),
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scaled_beta_moments() {
        let m = ScaledBeta::new(2.0, 2.0).unwrap().moments();
        assert_relative_eq!(m.m1, 0.0, epsilon = 1e-15);
        assert_relative_eq!(m.m2, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn mixture_moments_table_rows() {
        let d4 = GaussianMixture2::new(-0.5, 0.4, 0.15, 0.3, 0.6).unwrap();
        assert_relative_eq!(d4.moments().m1, -0.14, max_relative = 1e-12);
        let d5 = GaussianMixture2::new(-0.1, 0.4, 0.3, 0.1, 0.7).unwrap();
        assert_relative_eq!(d5.moments().m1, 0.05, max_relative = 1e-12);
        // Equal components collapse to a single Gaussian.
        let flat = GaussianMixture2::new(0.3, 0.3, 0.2, 0.2, 0.25).unwrap().moments();
        assert_relative_eq!(flat.m1, 0.3, max_relative = 1e-12);
        assert_relative_eq!(flat.m2, 0.09 + 0.04, max_relative = 1e-12);
    }

    #[test]
    fn moment_pair_variance_nonnegative() {
        for dist in builtin_univariate() {
            let m = dist.analytic_moments().unwrap();
            assert!(m.m2 >= m.m1 * m.m1);
        }
    }

    #[test]
    fn multivariate_t_covariance_scaling() {
        let scale = DMatrix::identity(5, 5) * 0.5;
        let t = MultivariateT::new(DVector::zeros(5), scale, 3.0).unwrap();
        assert_relative_eq!(t.covariance()[(0, 0)], 1.5, max_relative = 1e-12);
    }

    #[test]
    fn multivariate_t_rejects_bad_inputs() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.5; // asymmetric
        assert!(MultivariateT::new(DVector::zeros(3), m, 3.0).is_err());
        assert!(MultivariateT::new(DVector::zeros(3), DMatrix::identity(3, 3), 2.0).is_err());
        let neg = DMatrix::identity(3, 3) * -1.0;
        assert!(MultivariateT::new(DVector::zeros(3), neg, 3.0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        for dist in builtin_univariate() {
            let a = dist.sample(64, &mut stream(9, 1, 0, StreamRole::TrainingSample, 0));
            let b = dist.sample(64, &mut stream(9, 1, 0, StreamRole::TrainingSample, 0));
            assert_eq!(a, b);
            let c = dist.sample(64, &mut stream(9, 1, 1, StreamRole::TrainingSample, 0));
            assert_ne!(a, c);
        }
    }

    #[test]
    fn univariate_pdfs_integrate_to_one() {
        // Trapezoid quadrature over a covering interval, 200k panels.
        let cases: Vec<(TrueDistribution, f64, f64)> = vec![
            (builtin_univariate()[0].clone(), -1.0, 1.0),
            (builtin_univariate()[2].clone(), -1.0, 1.0),
            (builtin_univariate()[3].clone(), -4.0, 4.0),
            (builtin_univariate()[4].clone(), -4.0, 4.0),
        ];
        for (dist, lo, hi) in cases {
            let pdf = |y: f64| match &dist {
                TrueDistribution::ScaledBeta(d) => d.pdf(y),
                TrueDistribution::GaussianMixture2(d) => d.pdf(y),
                _ => unreachable!(),
            };
            let k = 200_000usize;
            let h = (hi - lo) / k as f64;
            let mut total = 0.5 * (pdf(lo) + pdf(hi));
            for i in 1..k {
                total += pdf(lo + h * i as f64);
            }
            total *= h;
            assert!((total - 1.0).abs() < 1e-6, "integral {total} for {dist:?}");
        }
    }
}
