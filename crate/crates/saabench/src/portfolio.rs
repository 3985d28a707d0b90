//! Minimum-variance portfolio selection: covariance estimation under each
//! decision method and the closed-form weight solver.
//!
//! Returns have zero mean in every shipped truth, so the in-sample problem
//! coincides with SAA on the cost `(w' z)^2` and the out-of-sample cost of a
//! weight vector is the exact quadratic form against the true covariance.

use crate::bayes::{
    bayes_portfolio_covariance, posterior_portfolio, BayesError, ChainSettings, PortfolioPrior,
};
use crate::distributions::Sample;
use crate::estimators::{BaggingSpec, BandwidthRule, KernelSpec};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("covariance matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("covariance matrix asymmetric by {0:e}")]
    NotSymmetric(f64),
    #[error("covariance matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),
    #[error("covariance matrix is singular even after ridge regularization")]
    SingularCovariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

/// Symmetric matrix of return covariances. Symmetry is enforced on
/// construction; definiteness is the solver's concern.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    m: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, PortfolioError> {
        if m.nrows() != m.ncols() {
            return Err(PortfolioError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        let scale = 1.0 + m.abs().max();
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-12 * scale {
            return Err(PortfolioError::NotSymmetric(asym));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[[f64; 5]; 5]) -> Result<Self, PortfolioError> {
        let m = DMatrix::from_fn(5, 5, |i, j| rows[i][j]);
        Self::new(m)
    }

    /// Config-input gate: also rejects matrices with a meaningfully negative
    /// eigenvalue.
    pub fn validate_psd(&self) -> Result<(), PortfolioError> {
        let scale = (self.m.trace() / self.n() as f64).max(f64::MIN_POSITIVE);
        let min_eig = self.m.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * scale {
            return Err(PortfolioError::NotPositiveSemiDefinite(min_eig));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { m: &self.m * c }
    }
}

/// Portfolio weights; components sum to 1 (borrowing allowed, so negative
/// entries are fine).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// The centered sample covariance with the paper's 1/N divisor. The weight
/// solution is divisor-invariant, so the choice is cosmetic.
pub fn sample_covariance(s: &Sample) -> Result<CovarianceMatrix, PortfolioError> {
    if s.n() < 2 {
        return Err(PortfolioError::TooFewObservations(s.n()));
    }
    let (n, d) = (s.n() as f64, s.dim());
    let mut mean = vec![0.0; d];
    for row in s.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for row in s.rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (row[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    CovarianceMatrix::new(cov)
}

/// Largest power of two at or below `x`; 1 for non-positive or non-finite
/// input. Dividing by it shifts exponents only, so rescaled inputs that are
/// exact scalings solve bit-identically.
fn power_of_two_scale(x: f64) -> f64 {
    if x.is_finite() && x > 0.0 {
        2.0f64.powi(x.log2().floor() as i32)
    } else {
        1.0
    }
}

fn solve_min_variance(sigma: &CovarianceMatrix) -> Result<(Weights, bool), PortfolioError> {
    let n = sigma.n();
    if n == 0 {
        return Err(PortfolioError::NotSquare { rows: 0, cols: 0 });
    }
    let p = power_of_two_scale(sigma.m.trace() / n as f64);
    let mut work = &sigma.m / p;

    let scale = work.trace() / n as f64;
    let ridge_scale = if scale > 0.0 { scale } else { 1.0 };
    let min_eig = work.clone().symmetric_eigenvalues().min();
    let ridged = min_eig < 1e-10 * ridge_scale;
    if ridged {
        for i in 0..n {
            work[(i, i)] += 1e-8 * ridge_scale;
        }
    }

    let chol = Cholesky::new(work).ok_or(PortfolioError::SingularCovariance)?;
    let raw = chol.solve(&DVector::from_element(n, 1.0));
    let denom = raw.sum();
    if !(denom.is_finite() && denom.abs() > 0.0) {
        return Err(PortfolioError::SingularCovariance);
    }
    let w: Vec<f64> = raw.iter().map(|v| v / denom).collect();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(PortfolioError::SingularCovariance);
    }
    Ok((Weights(w), ridged))
}

/// Closed-form minimum-variance weights `Sigma^{-1} 1 / (1' Sigma^{-1} 1)`.
///
/// A matrix whose smallest eigenvalue falls below `1e-10 * trace/n` is
/// ridge-regularized by `1e-8 * trace/n * I` before inversion.
pub fn min_variance_weights(sigma: &CovarianceMatrix) -> Result<Weights, PortfolioError> {
    solve_min_variance(sigma).map(|(w, _)| w)
}

/// Like [`min_variance_weights`], also reporting whether the ridge fired.
pub fn min_variance_weights_detailed(
    sigma: &CovarianceMatrix,
) -> Result<(Weights, bool), PortfolioError> {
    solve_min_variance(sigma)
}

/// Exact out-of-sample cost of holding `w` under the true covariance.
pub fn out_of_sample_variance(w: &Weights, true_cov: &CovarianceMatrix) -> f64 {
    assert_eq!(w.len(), true_cov.n(), "weight/covariance dimension mismatch");
    let v = DVector::from_row_slice(w.as_slice());
    (v.transpose() * &true_cov.m * v)[(0, 0)]
}

/// Scott's-rule bandwidth at dimension d: `N^(-1/(d+4))` times the average
/// marginal standard deviation.
pub fn multivariate_scott_bandwidth(s: &Sample) -> f64 {
    let d = s.dim() as f64;
    let avg_std = s.column_stds().iter().sum::<f64>() / d;
    avg_std * (s.n() as f64).powf(-1.0 / (d + 4.0))
}

/// How a covariance estimate is produced from the sample.
#[derive(Debug, Clone)]
pub enum CovarianceMethod {
    /// Plain sample covariance.
    Saa,
    /// Sample covariance inflated by the spherical Gaussian kernel:
    /// `Sigma + h^2 I`.
    Kernel(KernelSpec),
    /// EM fit of a multivariate-t scale matrix with fixed `nu`; the
    /// covariance is `nu/(nu-2)` times the fitted scale.
    MleT { nu: f64, max_iters: usize },
    /// Centered posterior-predictive covariance under the LKJ model.
    Bayes { prior: PortfolioPrior, chain: ChainSettings },
}

/// Covariance estimate per method. `rng` is consumed only by the Bayesian
/// route.
pub fn method_covariance(
    s: &Sample,
    method: &CovarianceMethod,
    rng: &mut impl Rng,
) -> Result<CovarianceMatrix, PortfolioError> {
    if s.n() < 2 {
        return Err(PortfolioError::TooFewObservations(s.n()));
    }
    match method {
        CovarianceMethod::Saa => sample_covariance(s),
        CovarianceMethod::Kernel(spec) => {
            let h = match spec.bandwidth {
                BandwidthRule::Scott => multivariate_scott_bandwidth(s),
                BandwidthRule::Fixed(h) => {
                    if !(h.is_finite() && h >= 0.0) {
                        return Err(PortfolioError::EstimationFailed(format!(
                            "fixed bandwidth must be finite and >= 0, got {h}"
                        )));
                    }
                    h
                }
            };
            let mut cov = sample_covariance(s)?.m;
            for i in 0..cov.nrows() {
                cov[(i, i)] += h * h;
            }
            CovarianceMatrix::new(cov)
        }
        CovarianceMethod::MleT { nu, max_iters } => {
            let (_, scale) = fit_t_scale_em(s, *nu, *max_iters, 1e-8)?;
            CovarianceMatrix::new(scale * (*nu / (*nu - 2.0)))
        }
        CovarianceMethod::Bayes { prior, chain } => {
            let draws = posterior_portfolio(s, prior, chain, rng)?;
            CovarianceMatrix::new(bayes_portfolio_covariance(&draws, prior)?)
        }
    }
}

/// EM for the location and scale of a multivariate t with known degrees of
/// freedom. Errors if the log-likelihood has not settled within `max_iters`.
pub fn fit_t_scale_em(
    s: &Sample,
    nu: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), PortfolioError> {
    if s.n() < 2 {
        return Err(PortfolioError::TooFewObservations(s.n()));
    }
    if !(nu.is_finite() && nu > 2.0) {
        return Err(PortfolioError::EstimationFailed(format!("t EM needs nu > 2, got {nu}")));
    }
    let (n, d) = (s.n() as f64, s.dim());
    let rows: Vec<DVector<f64>> = s.rows().map(DVector::from_row_slice).collect();

    let mut mu = rows.iter().fold(DVector::zeros(d), |acc, r| acc + r) / n;
    let mut scale = sample_covariance(s)?.m * ((nu - 2.0) / nu);
    // Degenerate starts still need a usable Cholesky.
    let floor = (scale.trace() / d as f64).max(1e-12) * 1e-9;
    for i in 0..d {
        scale[(i, i)] += floor;
    }

    let lik_const = ln_gamma((nu + d as f64) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * d as f64 * (nu * std::f64::consts::PI).ln();
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..max_iters {
        let chol = Cholesky::new(scale.clone()).ok_or_else(|| {
            PortfolioError::EstimationFailed("t EM scale matrix lost definiteness".into())
        })?;
        let l = chol.l();
        let ln_det_l: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();

        let mut ll = 0.0;
        let mut wsum = 0.0;
        let mut wmean = DVector::zeros(d);
        let mut weights = Vec::with_capacity(rows.len());
        for r in &rows {
            let z = l.solve_lower_triangular(&(r - &mu)).expect("cholesky factor is nonsingular");
            let delta = z.norm_squared();
            ll += lik_const - ln_det_l - 0.5 * (nu + d as f64) * (1.0 + delta / nu).ln();
            let w = (nu + d as f64) / (nu + delta);
            weights.push(w);
            wsum += w;
            wmean += r * w;
        }
        mu = wmean / wsum;
        let mut new_scale = DMatrix::zeros(d, d);
        for (r, w) in rows.iter().zip(&weights) {
            let diff = r - &mu;
            new_scale += &diff * diff.transpose() * *w;
        }
        scale = new_scale / n;

        if (ll - last_ll).abs() <= tol * (1.0 + ll.abs()) {
            return Ok((mu, scale));
        }
        last_ll = ll;
    }
    Err(PortfolioError::EstimationFailed(format!(
        "t EM did not converge within {max_iters} iterations"
    )))
}

/// Outcome of bagging portfolio weights.
#[derive(Debug, Clone)]
pub struct BaggedWeights {
    pub weights: Weights,
    /// Resamples dropped because their covariance stayed singular after the
    /// ridge.
    pub excluded: usize,
    /// Resamples whose covariance needed the ridge.
    pub ridged: usize,
}

/// Bagging for portfolios: average the per-resample minimum-variance
/// weights. Identical per-resample weights are returned exactly.
pub fn bagged_weights(
    s: &Sample,
    spec: &BaggingSpec,
    rng: &mut impl Rng,
) -> Result<BaggedWeights, PortfolioError> {
    if s.n() < 2 {
        return Err(PortfolioError::TooFewObservations(s.n()));
    }
    if spec.replicates == 0 {
        return Err(PortfolioError::EstimationFailed("bagging needs B >= 1".into()));
    }
    let d = s.dim();
    let m = spec.resample_size.unwrap_or(s.n());
    if m < 2 {
        return Err(PortfolioError::EstimationFailed("portfolio resamples need M >= 2".into()));
    }
    if !spec.with_replacement && m > s.n() {
        return Err(PortfolioError::EstimationFailed(
            "subsampling without replacement needs M <= N".into(),
        ));
    }

    let mut sum = vec![0.0; d];
    let mut kept = 0usize;
    let mut excluded = 0usize;
    let mut ridged = 0usize;
    let mut first: Option<Weights> = None;
    let mut all_equal = true;
    let mut values = Vec::with_capacity(m * d);
    for _ in 0..spec.replicates {
        values.clear();
        if spec.with_replacement {
            for _ in 0..m {
                values.extend_from_slice(s.row(rng.random_range(0..s.n())));
            }
        } else {
            let idx = rand::seq::index::sample(rng, s.n(), m);
            for i in idx {
                values.extend_from_slice(s.row(i));
            }
        }
        let resample = Sample::from_row_major(m, d, values.clone());
        match sample_covariance(&resample).and_then(|c| min_variance_weights_detailed(&c)) {
            Ok((w, was_ridged)) => {
                ridged += usize::from(was_ridged);
                kept += 1;
                for (acc, v) in sum.iter_mut().zip(w.as_slice()) {
                    *acc += v;
                }
                match &first {
                    None => first = Some(w),
                    Some(f) => {
                        all_equal &= f
                            .as_slice()
                            .iter()
                            .zip(w.as_slice())
                            .all(|(a, b)| a.to_bits() == b.to_bits());
                    }
                }
            }
            Err(_) => excluded += 1,
        }
    }
    if kept == 0 {
        return Err(PortfolioError::SingularCovariance);
    }
    let weights = if all_equal {
        first.expect("kept > 0")
    } else {
        Weights(sum.into_iter().map(|v| v / kept as f64).collect())
    };
    Ok(BaggedWeights { weights, excluded, ridged })
}

/// The five frozen true covariance matrices (weekly-return scale), ids 1..=5.
///
/// Generated once by a seeded procedure — an LKJ(eta=2) correlation matrix
/// scaled by per-asset volatilities drawn uniformly from [0.02, 0.06] — and
/// committed as literals so every run sees identical ground truth.
pub fn builtin_covariances() -> Vec<CovarianceMatrix> {
    let rows: [[[f64; 5]; 5]; 5] = [
        [
            [0.0013549932286026295, -0.0002192075117791982, 0.000261339416459666, 0.0004013047920670519, 0.0005767722595421561],
            [-0.0002192075117791982, 0.0016325278522185797, 0.0004997703582752175, -0.00019534416113094088, -8.85096374886553e-6],
            [0.000261339416459666, 0.0004997703582752175, 0.0023403050978071716, -0.0004415120197242649, 0.0021588160972637297],
            [0.0004013047920670519, -0.00019534416113094088, -0.0004415120197242649, 0.00046689734060881266, -0.0004023493004918573],
            [0.0005767722595421561, -8.85096374886553e-6, 0.0021588160972637297, -0.0004023493004918573, 0.003156100574351456],
        ],
        [
            [0.003022882823649021, -0.00016090205260344136, -0.0012990491833761537, 0.0001857392351526686, -5.757682417319301e-5],
            [-0.00016090205260344136, 0.0005432812803171248, 0.0003598436803546202, 0.00039326114918892695, 9.496949986380725e-5],
            [-0.0012990491833761537, 0.0003598436803546202, 0.0016266537405126857, -0.0002488963611391251, -0.00032212063641707574],
            [0.0001857392351526686, 0.00039326114918892695, -0.0002488963611391251, 0.002417195142212704, 0.0008672558262035626],
            [-5.757682417319301e-5, 9.496949986380725e-5, -0.00032212063641707574, 0.0008672558262035626, 0.0006714490370534044],
        ],
        [
            [0.0005785878348358057, 0.00022665770637714702, 0.0004492983534287148, -0.00012477257720697042, -0.0007081562061821101],
            [0.00022665770637714702, 0.001034982971806297, 0.0007706229710314781, 0.00030478709645601775, -0.00048440652416317846],
            [0.0004492983534287148, 0.0007706229710314781, 0.0020075327371394443, 0.0005600972440418079, -0.0009193939596307968],
            [-0.00012477257720697042, 0.00030478709645601775, 0.0005600972440418079, 0.003064199954209771, 0.000818999208204373],
            [-0.0007081562061821101, -0.00048440652416317846, -0.0009193939596307968, 0.000818999208204373, 0.002263988412728398],
        ],
        [
            [0.0007424530547985787, 2.6060471840828054e-5, -0.00010183240810494054, 0.0004360806215953173, 2.462383379823253e-5],
            [2.6060471840828054e-5, 0.0023141544342239586, 1.383140287235073e-5, 0.00028689498863475896, 0.00034693451336424225],
            [-0.00010183240810494054, 1.383140287235073e-5, 0.0016514932913278852, 0.0007652307261855235, 0.0007944660151234734],
            [0.0004360806215953173, 0.00028689498863475896, 0.0007652307261855235, 0.0026700427263043683, 0.00014224084693051798],
            [2.462383379823253e-5, 0.00034693451336424225, 0.0007944660151234734, 0.00014224084693051798, 0.0013499515287148337],
        ],
        [
            [0.0007391773591850315, -0.0002380976935717577, -0.000522997180942972, -5.820294355615371e-5, -0.0003977647462857599],
            [-0.0002380976935717577, 0.002798198417702411, -0.00015007551846185223, 0.0005228396239189825, -0.0003232529068662157],
            [-0.000522997180942972, -0.00015007551846185223, 0.002890642032894592, 0.0011048852181594882, 0.0006026396344797036],
            [-5.820294355615371e-5, 0.0005228396239189825, 0.0011048852181594882, 0.0010824444505989127, 0.0003941600568854975],
            [-0.0003977647462857599, -0.0003232529068662157, 0.0006026396344797036, 0.0003941600568854975, 0.0017381553091291443],
        ],
    ];
    rows.iter()
        .map(|r| CovarianceMatrix::from_rows(r).expect("frozen matrices are symmetric"))
        .collect()
}
