//! Replicated matched-pair experiments: draw K training samples per cell,
//! let every selected method decide on each, and score each method against
//! SAA on identical evaluation data.
//!
//! Evaluation defaults to the exact-expectation path: for quadratic costs
//! the true distribution's analytic moments, for portfolios the true
//! covariance quadratic form. The Monte Carlo path (`mc_eval`) replaces it
//! with a single shared evaluation sample per replication, which keeps the
//! pairing matched.
//!
//! Determinism: every random stream is keyed by (master seed, cell,
//! replication, role), replications are folded in index order, and a
//! failing method drops only its own replication pairs. Results are
//! identical regardless of worker count.

pub mod config;
pub mod plot;
pub mod records;

pub use config::{load_config, resolve, ConfigError, ExperimentConfig, Family, MethodName};
pub use records::{config_hash, emit_csv, emit_meta, ImprovementRecord, RunMeta, CSV_HEADER};

use crate::bayes::{
    bayes_portfolio_covariance, posterior_beta, posterior_mixture, posterior_portfolio,
    predictive_moments_1d, sample_univariate_predictive, PriorMean, UnivariateFamily,
};
use crate::distributions::{MomentPair, MultivariateT, Sample, TrueDistribution};
use crate::estimators::{bootstrap_moment_pairs, kde_draw, kernel_smoothed_moments, mle_fit, MleFamily, MleSpec};
use crate::portfolio::{
    bagged_weights, method_covariance, min_variance_weights_detailed, out_of_sample_variance,
    sample_covariance, CovarianceMatrix, CovarianceMethod, Weights,
};
use crate::quadratic::{expected_cost, saa_minimize, sample_moments, DecisionBox};
use crate::rng::{cell_id, stream, StreamRole};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::path::PathBuf;
use thiserror::Error;

/// Substream tags for the Monte Carlo predictive resamples, keeping them
/// disjoint from the shared evaluation sample (substream 0).
const SUB_KERNEL_PREDICTIVE: u32 = 10;
const SUB_MLE_PREDICTIVE: u32 = 11;
const SUB_BAYES_PREDICTIVE: u32 = 12;
/// Draw count of the optional sampling routes.
const PREDICTIVE_DRAWS: usize = 100_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("paired lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 paired replications, got {got} ({context})")]
    TooFewPairs { got: usize, context: String },
    #[error("no records to emit")]
    NoRecords,
    #[error("experiment setup failed: {0}")]
    Setup(String),
}

/// Matched-pair improvement of a method over SAA: mean of the per-replication
/// cost differences with a 1.96-standard-error interval.
pub fn paired_improvement(
    costs_saa: &[f64],
    costs_method: &[f64],
) -> Result<(f64, f64, f64), HarnessError> {
    if costs_saa.len() != costs_method.len() {
        return Err(HarnessError::LengthMismatch {
            left: costs_saa.len(),
            right: costs_method.len(),
        });
    }
    let k = costs_saa.len();
    if k < 2 {
        return Err(HarnessError::TooFewPairs { got: k, context: "paired_improvement".into() });
    }
    let diffs: Vec<f64> = costs_saa.iter().zip(costs_method).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / k as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let stderr = (var / k as f64).sqrt();
    Ok((mean, mean - 1.96 * stderr, mean + 1.96 * stderr))
}

/// Aggregate counters produced alongside the records.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<ImprovementRecord>,
    /// Ridge regularizations that fired anywhere in the run.
    pub ridge_count: u64,
    /// Method-replication pairs dropped because estimation failed.
    pub excluded_total: u64,
}

/// Files written by [`run_and_emit`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub outcome: RunOutcome,
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub plot_paths: Vec<PathBuf>,
}

/// Runs the configured experiment and returns one record per
/// (problem, distribution, method, N).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ImprovementRecord>, HarnessError> {
    run_outcome(cfg).map(|o| o.records)
}

pub fn run_outcome(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Setup(format!("worker pool: {e}")))?;
    pool.install(|| match cfg.family {
        Family::Quadratic => run_quadratic(cfg),
        Family::Portfolio => run_portfolio(cfg),
    })
}

/// Runs the experiment and writes `<family>.csv`, `<family>.meta.json`, and
/// one SVG per distribution/covariance into the configured output directory.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    let outcome = run_outcome(cfg)?;
    let base = cfg.output_dir.join(cfg.family.as_str());
    let csv_path = base.with_extension("csv");
    emit_csv(&outcome.records, &csv_path)?;
    let meta_path = base.with_extension("meta.json");
    let meta = RunMeta::new(cfg, outcome.ridge_count, outcome.excluded_total);
    emit_meta(&meta, &meta_path)?;

    let mut plot_paths = Vec::new();
    let group_ids: Vec<u32> = match cfg.family {
        Family::Quadratic => cfg.distribution_ids.clone(),
        Family::Portfolio => cfg.covariance_ids.clone(),
    };
    let tag = match cfg.family {
        Family::Quadratic => "dist",
        Family::Portfolio => "cov",
    };
    for id in group_ids {
        let group: Vec<ImprovementRecord> = outcome
            .records
            .iter()
            .filter(|r| r.distribution_id == id)
            .cloned()
            .collect();
        if group.is_empty() {
            continue;
        }
        let path = cfg.output_dir.join(format!("{}_{tag}{id}.svg", cfg.family.as_str()));
        plot::emit_plot(&group, &path)?;
        plot_paths.push(path);
    }
    Ok(RunArtifacts { outcome, csv_path, meta_path, plot_paths })
}

// ---------------------------------------------------------------------
// Quadratic study
// ---------------------------------------------------------------------

struct QuadRep {
    /// Cost of the SAA decision per configured cost function.
    saa: Vec<f64>,
    /// Per method (in config order), per cost function; `None` = estimation
    /// failed for this replication.
    methods: Vec<Option<Vec<f64>>>,
}

fn univariate_mle_family(dist: &TrueDistribution) -> MleFamily {
    match dist {
        TrueDistribution::ScaledBeta(_) => MleFamily::ScaledBeta,
        _ => MleFamily::GaussianMixture2,
    }
}

fn run_quadratic(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let bounds = DecisionBox::default();
    let costs: Vec<_> = cfg.cost_ids.iter().map(|id| (*id, *cfg.cost(*id))).collect();
    let mut per_cell: Vec<((u32, usize), Vec<QuadRep>)> = Vec::new();

    for &dist_id in &cfg.distribution_ids {
        let dist = cfg.distribution(dist_id);
        let true_moments = dist.analytic_moments().map_err(|e| {
            HarnessError::Setup(format!("distribution {dist_id} lacks analytic moments: {e}"))
        })?;
        for &n in &cfg.sample_sizes {
            let cell = cell_id(cfg.family.code(), u64::from(dist_id), n as u64);
            let reps: Vec<QuadRep> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    quadratic_replication(cfg, dist, &costs, &bounds, cell, rep as u64, n, true_moments)
                })
                .collect();
            per_cell.push(((dist_id, n), reps));
        }
    }

    // Deterministic fold into records: distribution, cost, method, then N.
    let mut records = Vec::new();
    let mut excluded_total = 0u64;
    for &dist_id in &cfg.distribution_ids {
        for (ci, &(cost_id, _)) in costs.iter().enumerate() {
            for (mi, method) in cfg.methods.iter().enumerate() {
                for &n in &cfg.sample_sizes {
                    let reps = &per_cell
                        .iter()
                        .find(|((d, nn), _)| *d == dist_id && *nn == n)
                        .expect("cell computed above")
                        .1;
                    let mut saa_costs = Vec::with_capacity(reps.len());
                    let mut method_costs = Vec::with_capacity(reps.len());
                    for rep in reps.iter() {
                        if let Some(m) = &rep.methods[mi] {
                            saa_costs.push(rep.saa[ci]);
                            method_costs.push(m[ci]);
                        }
                    }
                    let excluded = reps.len() - saa_costs.len();
                    excluded_total += excluded as u64;
                    let k = saa_costs.len();
                    let (mean, lo, hi) =
                        paired_improvement(&saa_costs, &method_costs).map_err(|e| match e {
                            HarnessError::TooFewPairs { got, .. } => HarnessError::TooFewPairs {
                                got,
                                context: format!(
                                    "cost {cost_id}, distribution {dist_id}, method {}, N={n}",
                                    method.as_str()
                                ),
                            },
                            other => other,
                        })?;
                    records.push(ImprovementRecord {
                        family: cfg.family,
                        problem_id: cost_id,
                        distribution_id: dist_id,
                        method: *method,
                        n,
                        k,
                        mean_improvement: mean,
                        ci_low: lo,
                        ci_high: hi,
                        mean_cost_saa: saa_costs.iter().sum::<f64>() / k as f64,
                        mean_cost_method: method_costs.iter().sum::<f64>() / k as f64,
                        excluded,
                    });
                }
            }
        }
    }
    Ok(RunOutcome { records, ridge_count: 0, excluded_total })
}

#[allow(clippy::too_many_arguments)]
fn quadratic_replication(
    cfg: &ExperimentConfig,
    dist: &TrueDistribution,
    costs: &[(u32, crate::quadratic::QuadraticCost)],
    bounds: &DecisionBox,
    cell: u64,
    rep: u64,
    n: usize,
    true_moments: MomentPair,
) -> QuadRep {
    let seed = cfg.master_seed;
    let sample = dist.sample(n, &mut stream(seed, cell, rep, StreamRole::TrainingSample, 0));
    let eval_moments = if cfg.mc_eval {
        let eval = dist.sample(cfg.eval_size, &mut stream(seed, cell, rep, StreamRole::Evaluation, 0));
        sample_moments(&eval).expect("evaluation sample is nonempty")
    } else {
        true_moments
    };

    let in_sample = sample_moments(&sample).expect("training sample is nonempty");
    let score = |x: f64, ci: usize| expected_cost(&costs[ci].1, x, eval_moments);
    let saa: Vec<f64> = costs
        .iter()
        .enumerate()
        .map(|(ci, (_, cost))| score(saa_minimize(cost, in_sample, bounds), ci))
        .collect();

    let moments_to_costs = |m: MomentPair| -> Vec<f64> {
        costs
            .iter()
            .enumerate()
            .map(|(ci, (_, cost))| score(saa_minimize(cost, m, bounds), ci))
            .collect()
    };

    let methods = cfg
        .methods
        .iter()
        .map(|method| match method {
            MethodName::Saa => Some(saa.clone()),
            MethodName::Bagging => {
                let mut rng = stream(seed, cell, rep, StreamRole::Bootstrap, 0);
                bootstrap_moment_pairs(&sample, &cfg.bagging, &mut rng).ok().map(|pairs| {
                    costs
                        .iter()
                        .enumerate()
                        .map(|(ci, (_, cost))| {
                            score(crate::estimators::average_decisions(cost, &pairs, bounds), ci)
                        })
                        .collect()
                })
            }
            MethodName::Kernel => kernel_smoothed_moments(&sample, &cfg.kernel).ok().map(|(m, h)| {
                if cfg.mc_predictive {
                    let ys = sample.scalars().expect("quadratic samples are univariate");
                    let mut rng =
                        stream(seed, cell, rep, StreamRole::Evaluation, SUB_KERNEL_PREDICTIVE);
                    let resample: Vec<f64> =
                        (0..PREDICTIVE_DRAWS).map(|_| kde_draw(ys, h, &mut rng)).collect();
                    let m = sample_moments(&Sample::from_scalars(resample)).expect("nonempty");
                    moments_to_costs(m)
                } else {
                    moments_to_costs(m)
                }
            }),
            MethodName::Mle => {
                let spec = MleSpec {
                    family: univariate_mle_family(dist),
                    sigma_floor: cfg.mle.sigma_floor,
                    restarts: cfg.mle.restarts,
                    max_iters: cfg.mle.max_iters,
                };
                mle_fit(&sample, &spec).ok().map(|fitted| {
                    if cfg.mc_predictive {
                        let mut rng =
                            stream(seed, cell, rep, StreamRole::Evaluation, SUB_MLE_PREDICTIVE);
                        let resample: Vec<f64> =
                            (0..PREDICTIVE_DRAWS).map(|_| fitted.sample_one(&mut rng)).collect();
                        let m = sample_moments(&Sample::from_scalars(resample)).expect("nonempty");
                        moments_to_costs(m)
                    } else {
                        moments_to_costs(fitted.moments())
                    }
                })
            }
            MethodName::Bayes => {
                let mut rng = stream(seed, cell, rep, StreamRole::Mcmc, 0);
                let (draws, family) = match dist {
                    TrueDistribution::ScaledBeta(_) => (
                        posterior_beta(&sample, &cfg.bayes.beta_prior, &cfg.bayes.chain, &mut rng),
                        UnivariateFamily::Beta,
                    ),
                    _ => {
                        let prior =
                            crate::bayes::MixturePrior { m: PriorMean::SampleMean, ..cfg.bayes.mixture_prior };
                        (
                            posterior_mixture(&sample, &prior, &cfg.bayes.chain, &mut rng),
                            UnivariateFamily::Mixture,
                        )
                    }
                };
                draws.ok().map(|draws| {
                    if cfg.mc_predictive {
                        let mut rng =
                            stream(seed, cell, rep, StreamRole::Evaluation, SUB_BAYES_PREDICTIVE);
                        let resample: Vec<f64> = (0..PREDICTIVE_DRAWS)
                            .map(|_| sample_univariate_predictive(&draws, family, &mut rng))
                            .collect();
                        let m = sample_moments(&Sample::from_scalars(resample)).expect("nonempty");
                        moments_to_costs(m)
                    } else {
                        let m = predictive_moments_1d(&draws, family)
                            .expect("chains store at least one draw");
                        moments_to_costs(m)
                    }
                })
            }
        })
        .collect();

    QuadRep { saa, methods }
}

// ---------------------------------------------------------------------
// Portfolio study
// ---------------------------------------------------------------------

struct PortfolioRep {
    saa: f64,
    methods: Vec<Option<f64>>,
    ridge: u64,
}

fn run_portfolio(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let mut per_cell: Vec<((u32, usize), Vec<PortfolioRep>)> = Vec::new();
    for &cov_id in &cfg.covariance_ids {
        let true_cov = cfg.covariance(cov_id);
        let scale = true_cov.matrix() * ((cfg.t_nu - 2.0) / cfg.t_nu);
        let truth = MultivariateT::new(DVector::zeros(true_cov.n()), scale, cfg.t_nu)
            .map_err(|e| HarnessError::Setup(format!("covariance {cov_id}: {e}")))?;
        for &n in &cfg.sample_sizes {
            let cell = cell_id(cfg.family.code(), u64::from(cov_id), n as u64);
            let reps: Vec<PortfolioRep> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| portfolio_replication(cfg, &truth, true_cov, cell, rep as u64, n))
                .collect();
            per_cell.push(((cov_id, n), reps));
        }
    }

    let mut records = Vec::new();
    let mut excluded_total = 0u64;
    let mut ridge_count = 0u64;
    for (_, reps) in &per_cell {
        for rep in reps {
            ridge_count += rep.ridge;
        }
    }
    for &cov_id in &cfg.covariance_ids {
        for (mi, method) in cfg.methods.iter().enumerate() {
            for &n in &cfg.sample_sizes {
                let reps = &per_cell
                    .iter()
                    .find(|((c, nn), _)| *c == cov_id && *nn == n)
                    .expect("cell computed above")
                    .1;
                let mut saa_costs = Vec::with_capacity(reps.len());
                let mut method_costs = Vec::with_capacity(reps.len());
                for rep in reps.iter() {
                    if let Some(c) = rep.methods[mi] {
                        saa_costs.push(rep.saa);
                        method_costs.push(c);
                    }
                }
                let excluded = reps.len() - saa_costs.len();
                excluded_total += excluded as u64;
                let k = saa_costs.len();
                let (mean, lo, hi) =
                    paired_improvement(&saa_costs, &method_costs).map_err(|e| match e {
                        HarnessError::TooFewPairs { got, .. } => HarnessError::TooFewPairs {
                            got,
                            context: format!(
                                "covariance {cov_id}, method {}, N={n}",
                                method.as_str()
                            ),
                        },
                        other => other,
                    })?;
                records.push(ImprovementRecord {
                    family: cfg.family,
                    problem_id: 1,
                    distribution_id: cov_id,
                    method: *method,
                    n,
                    k,
                    mean_improvement: mean,
                    ci_low: lo,
                    ci_high: hi,
                    mean_cost_saa: saa_costs.iter().sum::<f64>() / k as f64,
                    mean_cost_method: method_costs.iter().sum::<f64>() / k as f64,
                    excluded,
                });
            }
        }
    }
    Ok(RunOutcome { records, ridge_count, excluded_total })
}

fn portfolio_replication(
    cfg: &ExperimentConfig,
    truth: &MultivariateT,
    true_cov: &CovarianceMatrix,
    cell: u64,
    rep: u64,
    n: usize,
) -> PortfolioRep {
    let seed = cfg.master_seed;
    let dist = TrueDistribution::MultivariateT(truth.clone());
    let sample = dist.sample(n, &mut stream(seed, cell, rep, StreamRole::TrainingSample, 0));

    // Matched evaluation: either the exact quadratic form or a shared
    // second-moment matrix from one evaluation sample.
    let eval_matrix: Option<DMatrix<f64>> = cfg.mc_eval.then(|| {
        let eval =
            dist.sample(cfg.eval_size, &mut stream(seed, cell, rep, StreamRole::Evaluation, 0));
        let d = eval.dim();
        let mut m = DMatrix::zeros(d, d);
        for row in eval.rows() {
            let v = DVector::from_row_slice(row);
            m += &v * v.transpose();
        }
        m / eval.n() as f64
    });
    let score = |w: &Weights| match &eval_matrix {
        Some(m) => {
            let v = DVector::from_row_slice(w.as_slice());
            (v.transpose() * m * v)[(0, 0)]
        }
        None => out_of_sample_variance(w, true_cov),
    };

    let mut ridge = 0u64;
    let saa_solution = sample_covariance(&sample)
        .and_then(|cov| min_variance_weights_detailed(&cov));
    let Ok((saa_weights, saa_ridged)) = saa_solution else {
        // Without an SAA decision there is nothing to pair against; the
        // whole replication is excluded for every method.
        return PortfolioRep {
            saa: f64::NAN,
            methods: vec![None; cfg.methods.len()],
            ridge: 0,
        };
    };
    ridge += u64::from(saa_ridged);
    let saa_cost = score(&saa_weights);

    let mut methods = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let outcome: Option<f64> = match method {
            MethodName::Saa => Some(saa_cost),
            MethodName::Bagging => (|| {
                let mut rng = stream(seed, cell, rep, StreamRole::Bootstrap, 0);
                let out = bagged_weights(&sample, &cfg.bagging, &mut rng).ok()?;
                ridge += out.ridged as u64;
                Some(score(&out.weights))
            })(),
            MethodName::Kernel => (|| {
                let mut rng = stream(seed, cell, rep, StreamRole::Mcmc, 1);
                let cov =
                    method_covariance(&sample, &CovarianceMethod::Kernel(cfg.kernel), &mut rng)
                        .ok()?;
                let (w, r) = min_variance_weights_detailed(&cov).ok()?;
                ridge += u64::from(r);
                Some(score(&w))
            })(),
            MethodName::Mle => (|| {
                let mut rng = stream(seed, cell, rep, StreamRole::Mcmc, 2);
                let cov = method_covariance(
                    &sample,
                    &CovarianceMethod::MleT { nu: cfg.t_nu, max_iters: cfg.mle.max_iters },
                    &mut rng,
                )
                .ok()?;
                let (w, r) = min_variance_weights_detailed(&cov).ok()?;
                ridge += u64::from(r);
                Some(score(&w))
            })(),
            MethodName::Bayes => (|| {
                let mut rng = stream(seed, cell, rep, StreamRole::Mcmc, 0);
                let prior = crate::bayes::PortfolioPrior {
                    n_assets: sample.dim(),
                    nu: cfg.t_nu,
                    ..cfg.bayes.portfolio_prior
                };
                let draws = posterior_portfolio(&sample, &prior, &cfg.bayes.chain, &mut rng).ok()?;
                let cov = if cfg.mc_predictive {
                    let mut prng =
                        stream(seed, cell, rep, StreamRole::Evaluation, SUB_BAYES_PREDICTIVE);
                    let d = sample.dim();
                    let mut values = Vec::with_capacity(PREDICTIVE_DRAWS * d);
                    for _ in 0..PREDICTIVE_DRAWS {
                        let z =
                            crate::bayes::sample_portfolio_predictive(&draws, &prior, &mut prng);
                        values.extend_from_slice(z.as_slice());
                    }
                    let resample = Sample::from_row_major(PREDICTIVE_DRAWS, d, values);
                    sample_covariance(&resample).ok()?
                } else {
                    let predictive = bayes_portfolio_covariance(&draws, &prior).ok()?;
                    CovarianceMatrix::new(predictive).ok()?
                };
                let (w, r) = min_variance_weights_detailed(&cov).ok()?;
                ridge += u64::from(r);
                Some(score(&w))
            })(),
        };
        methods.push(outcome);
    }

    PortfolioRep { saa: saa_cost, methods, ridge }
}
