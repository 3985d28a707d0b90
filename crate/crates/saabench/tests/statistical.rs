//! Seeded Monte Carlo agreement suites: sampler moments against closed
//! forms, two-path (analytic vs sampling) agreement for the predictive
//! decision routes, and posterior consistency on large samples.

mod common;

use nalgebra::{DMatrix, DVector};
use saabench::bayes::{
    posterior_beta, posterior_portfolio, predictive_moments_1d, predictive_second_moment_matrix,
    rebuild_scale_matrix, sample_portfolio_predictive, sample_univariate_predictive, BetaPrior,
    ChainSettings, PortfolioPrior, UnivariateFamily,
};
use saabench::distributions::{builtin_univariate, MultivariateT, ScaledBeta, TrueDistribution};
use saabench::estimators::{kde_draw, mle_fit, scaled_beta_log_likelihood, scott_bandwidth, FittedUnivariate, MleSpec};
use saabench::portfolio::builtin_covariances;
use saabench::quadratic::sample_moments;
use saabench::rng::{stream, StreamRole};

#[test]
fn seeded_sampler_means_match_analytic_moments() {
    // 1e6 draws per distribution; the sample mean must sit within four
    // standard errors of the closed-form mean.
    let draws = 1_000_000;
    for (id, dist) in builtin_univariate().into_iter().enumerate() {
        let m = dist.analytic_moments().unwrap();
        let s = dist.sample(draws, &mut stream(101, id as u64, 0, StreamRole::TrainingSample, 0));
        let ys = s.scalars().unwrap();
        let (mean, var) = common::mean_var(ys);
        let stderr = (var / draws as f64).sqrt();
        assert!(
            (mean - m.m1).abs() < 4.0 * stderr,
            "dist {}: mean {mean} vs {}, stderr {stderr}",
            id + 1,
            m.m1
        );
        let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
        let (mean2, var2) = common::mean_var(&sq);
        let stderr2 = (var2 / draws as f64).sqrt();
        assert!(
            (mean2 - m.m2).abs() < 4.0 * stderr2,
            "dist {}: m2 {mean2} vs {}",
            id + 1,
            m.m2
        );
    }
}

#[test]
fn multivariate_t_sample_covariance_matches_scaling() {
    // scale = I5, nu = 3: covariance is 3*I5. Fourth moments do not exist,
    // so entry-level tolerances stay loose.
    let t = MultivariateT::new(DVector::zeros(5), DMatrix::identity(5, 5), 3.0).unwrap();
    let dist = TrueDistribution::MultivariateT(t);
    let s = dist.sample(1_000_000, &mut stream(102, 0, 0, StreamRole::TrainingSample, 0));
    let cov = saabench::portfolio::sample_covariance(&s).unwrap();
    for i in 0..5 {
        assert!(
            (cov.matrix()[(i, i)] - 3.0).abs() < 0.45,
            "diag {i}: {}",
            cov.matrix()[(i, i)]
        );
        for j in 0..i {
            assert!(cov.matrix()[(i, j)].abs() < 0.3, "offdiag {i}{j}: {}", cov.matrix()[(i, j)]);
        }
    }
}

#[test]
fn kernel_sampling_route_matches_moment_identity() {
    // Draws from the kernel density estimate must reproduce the exact
    // smoothed moments (m1, m2 + h^2) within four standard errors.
    let dist = &builtin_univariate()[2];
    for rep in 0..3u64 {
        let s = dist.sample(25, &mut stream(103, 1, rep, StreamRole::TrainingSample, 0));
        let ys = s.scalars().unwrap();
        let h = scott_bandwidth(&s).unwrap();
        let base = sample_moments(&s).unwrap();
        let mut rng = stream(103, 1, rep, StreamRole::Evaluation, 0);
        let draws: Vec<f64> = (0..1_000_000).map(|_| kde_draw(ys, h, &mut rng)).collect();
        let (mean, var) = common::mean_var(&draws);
        let se = (var / draws.len() as f64).sqrt();
        assert!((mean - base.m1).abs() < 4.0 * se, "rep {rep}: mean {mean} vs {}", base.m1);
        let sq: Vec<f64> = draws.iter().map(|y| y * y).collect();
        let (mean2, var2) = common::mean_var(&sq);
        let se2 = (var2 / draws.len() as f64).sqrt();
        assert!(
            (mean2 - (base.m2 + h * h)).abs() < 4.0 * se2,
            "rep {rep}: m2 {mean2} vs {}",
            base.m2 + h * h
        );
    }
}

#[test]
fn beta_mle_matches_coarse_grid_search() {
    // Independent oracle: exhaustive grid over the constrained shape space.
    let dist = &builtin_univariate()[2]; // ScaledBeta(2, 5)
    let s = dist.sample(200, &mut stream(104, 3, 0, StreamRole::TrainingSample, 0));
    let ys = s.scalars().unwrap();
    let FittedUnivariate::Beta(fit) = mle_fit(&s, &MleSpec::beta()).unwrap() else { panic!() };

    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..400 {
        for j in 0..400 {
            let a = 1.0 + 0.025 * (i as f64 + 0.5);
            let b = 1.0 + 0.025 * (j as f64 + 0.5);
            let ll = scaled_beta_log_likelihood(ys, &ScaledBeta::new(a, b).unwrap());
            if ll > best.0 {
                best = (ll, a, b);
            }
        }
    }
    // The simplex must land within one grid cell of the exhaustive argmax
    // and at least match its likelihood.
    assert!((fit.alpha() - best.1).abs() < 0.05, "alpha {} vs grid {}", fit.alpha(), best.1);
    assert!((fit.beta() - best.2).abs() < 0.05, "beta {} vs grid {}", fit.beta(), best.2);
    assert!(scaled_beta_log_likelihood(ys, &fit) >= best.0 - 1e-6);
}

#[test]
fn beta_predictive_two_path_agreement() {
    // Analytic predictive moments vs Monte Carlo over (theta, y) draws.
    let dist = &builtin_univariate()[0];
    let s = dist.sample(20, &mut stream(105, 1, 0, StreamRole::TrainingSample, 0));
    let draws = posterior_beta(
        &s,
        &BetaPrior::default(),
        &ChainSettings::default(),
        &mut stream(105, 1, 0, StreamRole::Mcmc, 0),
    )
    .unwrap();
    let exact = predictive_moments_1d(&draws, UnivariateFamily::Beta).unwrap();

    let mut rng = stream(105, 1, 0, StreamRole::Evaluation, 0);
    let n = 1_000_000;
    let ys: Vec<f64> =
        (0..n).map(|_| sample_univariate_predictive(&draws, UnivariateFamily::Beta, &mut rng)).collect();
    let (mean, var) = common::mean_var(&ys);
    let se = (var / n as f64).sqrt();
    assert!((mean - exact.m1).abs() < 4.0 * se, "m1 {mean} vs {}", exact.m1);
    let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
    let (mean2, var2) = common::mean_var(&sq);
    let se2 = (var2 / n as f64).sqrt();
    assert!((mean2 - exact.m2).abs() < 4.0 * se2, "m2 {mean2} vs {}", exact.m2);
}

#[test]
fn beta_predictive_density_integrates_to_one() {
    let dist = &builtin_univariate()[1];
    let s = dist.sample(20, &mut stream(106, 2, 0, StreamRole::TrainingSample, 0));
    let chain = ChainSettings { draws: 200, burn_in: 200, thin: 1 };
    let draws = posterior_beta(
        &s,
        &BetaPrior::default(),
        &chain,
        &mut stream(106, 2, 0, StreamRole::Mcmc, 0),
    )
    .unwrap();
    let members: Vec<ScaledBeta> = draws
        .draws
        .iter()
        .map(|d| ScaledBeta::new(d[0], d[1]).unwrap())
        .collect();
    let predictive = |y: f64| {
        members.iter().map(|b| b.pdf(y)).sum::<f64>() / members.len() as f64
    };
    let k = 20_000usize;
    let h = 2.0 / k as f64;
    let mut total = 0.5 * (predictive(-1.0) + predictive(1.0));
    for i in 1..k {
        total += predictive(-1.0 + h * i as f64);
    }
    total *= h;
    assert!((total - 1.0).abs() < 1e-3, "integral {total}");
}

#[test]
fn portfolio_posterior_recovers_scale_matrix() {
    // 2000 observations pin the scale matrix to within 10% Frobenius error.
    let truth_scale = builtin_covariances()[0].matrix() / 3.0;
    let t = MultivariateT::new(DVector::zeros(5), truth_scale.clone(), 3.0).unwrap();
    let s = TrueDistribution::MultivariateT(t)
        .sample(2000, &mut stream(107, 0, 0, StreamRole::TrainingSample, 0));
    let prior = PortfolioPrior::default();
    let chain = ChainSettings { draws: 3000, burn_in: 1500, thin: 1 };
    let draws =
        posterior_portfolio(&s, &prior, &chain, &mut stream(107, 0, 0, StreamRole::Mcmc, 0)).unwrap();
    let mut mean_scale = DMatrix::zeros(5, 5);
    for d in &draws.draws {
        mean_scale += rebuild_scale_matrix(d, 5);
    }
    mean_scale /= draws.draws.len() as f64;
    let rel = (&mean_scale - &truth_scale).norm() / truth_scale.norm();
    assert!(rel < 0.10, "relative Frobenius error {rel}");
}

#[test]
fn portfolio_second_moment_two_path_agreement() {
    let truth_scale = builtin_covariances()[1].matrix() / 3.0;
    let t = MultivariateT::new(DVector::zeros(5), truth_scale, 3.0).unwrap();
    let s = TrueDistribution::MultivariateT(t)
        .sample(60, &mut stream(108, 1, 0, StreamRole::TrainingSample, 0));
    let prior = PortfolioPrior::default();
    let chain = ChainSettings { draws: 1500, burn_in: 800, thin: 1 };
    let draws =
        posterior_portfolio(&s, &prior, &chain, &mut stream(108, 1, 0, StreamRole::Mcmc, 0)).unwrap();
    let exact = predictive_second_moment_matrix(&draws, &prior).unwrap();

    let n = 1_000_000usize;
    let mut rng = stream(108, 1, 0, StreamRole::Evaluation, 0);
    let mut acc = DMatrix::zeros(5, 5);
    for _ in 0..n {
        let z = sample_portfolio_predictive(&draws, &prior, &mut rng);
        acc += &z * z.transpose();
    }
    let mc = &acc / n as f64;
    // At nu=3 the squared draws have no finite variance, so no CLT interval
    // applies; the stable-law error of the mean decays like n^(-1/3), which
    // puts 1e6 draws near 1% relative error. Assert 10% per entry against
    // the matrix scale plus 5% in Frobenius norm.
    let scale = exact.abs().max();
    for i in 0..5 {
        for j in 0..5 {
            assert!(
                (mc[(i, j)] - exact[(i, j)]).abs() < 0.10 * scale,
                "entry ({i},{j}): mc {} vs exact {}",
                mc[(i, j)],
                exact[(i, j)]
            );
        }
    }
    let rel = (&mc - &exact).norm() / exact.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

#[test]
fn disjoint_streams_are_statistically_independent() {
    // Correlation between two role-separated streams of the same cell key
    // should vanish at the 1/sqrt(n) scale.
    let n = 200_000;
    let dist = &builtin_univariate()[0];
    let a = dist.sample(n, &mut stream(109, 7, 3, StreamRole::TrainingSample, 0));
    let b = dist.sample(n, &mut stream(109, 7, 3, StreamRole::Evaluation, 0));
    let (xa, xb) = (a.scalars().unwrap(), b.scalars().unwrap());
    let (ma, va) = common::mean_var(xa);
    let (mb, vb) = common::mean_var(xb);
    let cov = xa
        .iter()
        .zip(xb)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
}

#[test]
fn mixture_sample_from_kde_vs_fixed_bandwidth_unused_streams() {
    // Guard: a kernel draw consumes exactly one index and one normal, so
    // interleaving with other draws stays reproducible.
    let ys = [0.0, 1.0, 2.0];
    let mut r1 = stream(110, 0, 0, StreamRole::Evaluation, 0);
    let first: Vec<f64> = (0..8).map(|_| kde_draw(&ys, 0.5, &mut r1)).collect();
    let mut r2 = stream(110, 0, 0, StreamRole::Evaluation, 0);
    let second: Vec<f64> = (0..8).map(|_| kde_draw(&ys, 0.5, &mut r2)).collect();
    assert_eq!(first, second);
}
