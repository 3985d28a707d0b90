//! Experiment configuration: TOML schema, paper-default filling, and
//! whole-file validation that reports every violation at once.

use crate::bayes::{BetaPrior, ChainSettings, MixturePrior, PortfolioPrior, PriorMean};
use crate::distributions::{GaussianMixture2, ScaledBeta, TrueDistribution};
use crate::estimators::{BaggingSpec, BandwidthRule, KernelSpec};
use crate::portfolio::{builtin_covariances, CovarianceMatrix};
use crate::quadratic::{builtin_costs, QuadraticCost};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Which benchmark study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Quadratic,
    Portfolio,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Quadratic => "quadratic",
            Family::Portfolio => "portfolio",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            Family::Quadratic => 1,
            Family::Portfolio => 2,
        }
    }
}

/// A decision method selected for the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Saa,
    Bagging,
    Kernel,
    Mle,
    Bayes,
}

impl MethodName {
    pub const ALL: [MethodName; 5] = [
        MethodName::Saa,
        MethodName::Bagging,
        MethodName::Kernel,
        MethodName::Mle,
        MethodName::Bayes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Saa => "saa",
            MethodName::Bagging => "bagging",
            MethodName::Kernel => "kernel",
            MethodName::Mle => "mle",
            MethodName::Bayes => "bayes",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

// ---------------------------------------------------------------------
// Raw file schema: every knob optional, defaults filled at resolve time.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution_ids: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_ids: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance_ids: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_predictive: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_eval: Option<bool>,
    /// Degrees of freedom of the t distribution used for portfolio truths,
    /// the MLE fit, and the Bayesian likelihood.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bagging: Option<RawBagging>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<RawKernel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mle: Option<RawMle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bayes: Option<RawBayes>,
    /// Full replacement for the built-in cost table when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<CostRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<DistributionRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<CovarianceRow>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBagging {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    /// Resample size; 0 or absent means M = N.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub with_replacement: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKernel {
    /// "scott" (default) or "fixed".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMle {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBayes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_prior_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_prior_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lkj_eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostRow {
    pub id: u32,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionRow {
    pub id: u32,
    /// "scaled_beta" or "gaussian_mixture".
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceRow {
    pub id: u32,
    /// Row-major n x n entries.
    pub rows: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------
// Resolved configuration.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MleTuning {
    pub sigma_floor: f64,
    pub restarts: usize,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesTuning {
    pub chain: ChainSettings,
    pub beta_prior: BetaPrior,
    pub mixture_prior: MixturePrior,
    pub portfolio_prior: PortfolioPrior,
}

/// Fully validated experiment description: the unit of work for
/// `run_experiment`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub master_seed: u64,
    pub replications: usize,
    pub eval_size: usize,
    pub sample_sizes: Vec<usize>,
    pub distribution_ids: Vec<u32>,
    pub cost_ids: Vec<u32>,
    pub covariance_ids: Vec<u32>,
    pub methods: Vec<MethodName>,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub mc_predictive: bool,
    pub mc_eval: bool,
    pub t_nu: f64,
    pub bagging: BaggingSpec,
    pub kernel: KernelSpec,
    pub mle: MleTuning,
    pub bayes: BayesTuning,
    pub costs: Vec<(u32, QuadraticCost)>,
    pub distributions: Vec<(u32, TrueDistribution)>,
    pub covariances: Vec<(u32, CovarianceMatrix)>,
}

impl ExperimentConfig {
    /// The paper-default experiment for a family; equals resolving a config
    /// file that names only the family.
    pub fn default_for(family: Family) -> Self {
        resolve(RawConfig {
            family,
            master_seed: None,
            replications: None,
            eval_size: None,
            sample_sizes: None,
            distribution_ids: None,
            cost_ids: None,
            covariance_ids: None,
            methods: None,
            output_dir: None,
            workers: None,
            mc_predictive: None,
            mc_eval: None,
            t_nu: None,
            bagging: None,
            kernel: None,
            mle: None,
            bayes: None,
            costs: None,
            distributions: None,
            covariances: None,
        })
        .expect("builtin defaults validate")
    }

    pub fn cost(&self, id: u32) -> &QuadraticCost {
        &self.costs.iter().find(|(i, _)| *i == id).expect("validated id").1
    }

    pub fn distribution(&self, id: u32) -> &TrueDistribution {
        &self.distributions.iter().find(|(i, _)| *i == id).expect("validated id").1
    }

    pub fn covariance(&self, id: u32) -> &CovarianceMatrix {
        &self.covariances.iter().find(|(i, _)| *i == id).expect("validated id").1
    }

    /// Canonical TOML rendering with every default made explicit; the run
    /// metadata hashes this string. Worker count and output placement do
    /// not change results, so they are pinned before hashing.
    pub fn canonical_toml(&self) -> String {
        let mut raw = self.to_raw();
        raw.workers = Some(0);
        raw.output_dir = Some(PathBuf::from("out"));
        toml::to_string(&raw).expect("config serializes")
    }

    /// Expands the resolved config back into the file schema.
    pub fn to_raw(&self) -> RawConfig {
        let kernel = match self.kernel.bandwidth {
            BandwidthRule::Scott => RawKernel { bandwidth_rule: Some("scott".into()), h: None },
            BandwidthRule::Fixed(h) => {
                RawKernel { bandwidth_rule: Some("fixed".into()), h: Some(h) }
            }
        };
        let costs = self
            .costs
            .iter()
            .map(|(id, c)| CostRow { id: *id, alpha: c.alpha, beta: c.beta, gamma: c.gamma })
            .collect();
        let distributions = self
            .distributions
            .iter()
            .map(|(id, d)| match d {
                TrueDistribution::ScaledBeta(b) => DistributionRow {
                    id: *id,
                    kind: "scaled_beta".into(),
                    alpha: Some(b.alpha()),
                    beta: Some(b.beta()),
                    mu1: None,
                    mu2: None,
                    sigma1: None,
                    sigma2: None,
                    rho: None,
                },
                TrueDistribution::GaussianMixture2(m) => {
                    let (mu1, mu2, sigma1, sigma2, rho) = m.params();
                    DistributionRow {
                        id: *id,
                        kind: "gaussian_mixture".into(),
                        alpha: None,
                        beta: None,
                        mu1: Some(mu1),
                        mu2: Some(mu2),
                        sigma1: Some(sigma1),
                        sigma2: Some(sigma2),
                        rho: Some(rho),
                    }
                }
                TrueDistribution::MultivariateT(_) => {
                    unreachable!("multivariate truths live in the covariance table")
                }
            })
            .collect();
        let covariances = self
            .covariances
            .iter()
            .map(|(id, c)| CovarianceRow {
                id: *id,
                rows: (0..c.n())
                    .map(|i| (0..c.n()).map(|j| c.matrix()[(i, j)]).collect())
                    .collect(),
            })
            .collect();
        RawConfig {
            family: self.family,
            master_seed: Some(self.master_seed),
            replications: Some(self.replications),
            eval_size: Some(self.eval_size),
            sample_sizes: Some(self.sample_sizes.clone()),
            distribution_ids: Some(self.distribution_ids.clone()),
            cost_ids: Some(self.cost_ids.clone()),
            covariance_ids: Some(self.covariance_ids.clone()),
            methods: Some(self.methods.iter().map(|m| m.as_str().to_string()).collect()),
            output_dir: Some(self.output_dir.clone()),
            workers: Some(self.workers),
            mc_predictive: Some(self.mc_predictive),
            mc_eval: Some(self.mc_eval),
            t_nu: Some(self.t_nu),
            bagging: Some(RawBagging {
                b: Some(self.bagging.replicates),
                m: Some(self.bagging.resample_size.unwrap_or(0)),
                with_replacement: Some(self.bagging.with_replacement),
            }),
            kernel: Some(kernel),
            mle: Some(RawMle {
                sigma_floor: Some(self.mle.sigma_floor),
                restarts: Some(self.mle.restarts),
                max_iters: Some(self.mle.max_iters),
            }),
            bayes: Some(RawBayes {
                draws: Some(self.bayes.chain.draws),
                burn_in: Some(self.bayes.chain.burn_in),
                thin: Some(self.bayes.chain.thin),
                beta_prior_lo: Some(self.bayes.beta_prior.lo),
                beta_prior_hi: Some(self.bayes.beta_prior.hi),
                mixture_delta: Some(self.bayes.mixture_prior.delta),
                mixture_v: Some(self.bayes.mixture_prior.v),
                mixture_n: Some(self.bayes.mixture_prior.n),
                mixture_alpha: Some(self.bayes.mixture_prior.alpha_prec),
                gamma_shape: Some(self.bayes.portfolio_prior.gamma_shape),
                gamma_rate: Some(self.bayes.portfolio_prior.gamma_rate),
                lkj_eta: Some(self.bayes.portfolio_prior.eta),
            }),
            costs: Some(costs),
            distributions: Some(distributions),
            covariances: Some(covariances),
        }
    }
}

/// Reads and fully validates a TOML config file. Parse errors carry the
/// toml reporter's line/column; semantic errors list every violation.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw)
}

/// Fills paper defaults and validates. All violations are reported together.
pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut problems: Vec<String> = Vec::new();
    let family = raw.family;

    let replications = raw.replications.unwrap_or(match family {
        Family::Quadratic => 1000,
        Family::Portfolio => 500,
    });
    if replications < 2 {
        problems.push(format!("replications must be >= 2, got {replications}"));
    }
    let eval_size = raw.eval_size.unwrap_or(100_000);
    if eval_size < 1 {
        problems.push("eval_size must be >= 1".into());
    }
    let sample_sizes = raw.sample_sizes.unwrap_or(match family {
        Family::Quadratic => vec![10, 20, 50],
        Family::Portfolio => vec![30, 50, 100, 150, 200],
    });
    let min_n = match family {
        Family::Quadratic => 1,
        Family::Portfolio => 2,
    };
    if sample_sizes.is_empty() {
        problems.push("sample_sizes must not be empty".into());
    }
    for &n in &sample_sizes {
        if n < min_n {
            problems.push(format!("sample_sizes entries must be >= {min_n} for {}, got {n}", family.as_str()));
        }
    }

    let methods = match raw.methods {
        None => MethodName::ALL.to_vec(),
        Some(names) => {
            let mut out = Vec::new();
            for name in &names {
                match MethodName::parse(name) {
                    Some(m) => {
                        if !out.contains(&m) {
                            out.push(m);
                        }
                    }
                    None => problems.push(format!(
                        "methods: unknown method {name:?} (expected one of saa, bagging, kernel, mle, bayes)"
                    )),
                }
            }
            if out.is_empty() {
                problems.push("methods must select at least one method".into());
            }
            out
        }
    };

    let t_nu = raw.t_nu.unwrap_or(3.0);
    if !(t_nu.is_finite() && t_nu > 2.0) {
        problems.push(format!("t_nu must be > 2 so covariances exist, got {t_nu}"));
    }

    // Resolved problem tables, built-in unless overridden.
    let costs: Vec<(u32, QuadraticCost)> = match &raw.costs {
        None => builtin_costs().into_iter().enumerate().map(|(i, c)| (i as u32 + 1, c)).collect(),
        Some(rows) => rows
            .iter()
            .map(|r| (r.id, QuadraticCost::new(r.alpha, r.beta, r.gamma)))
            .collect(),
    };
    let distributions: Vec<(u32, TrueDistribution)> = match &raw.distributions {
        None => crate::distributions::builtin_univariate()
            .into_iter()
            .enumerate()
            .map(|(i, d)| (i as u32 + 1, d))
            .collect(),
        Some(rows) => {
            let mut out = Vec::new();
            for row in rows {
                match build_distribution(row) {
                    Ok(d) => out.push((row.id, d)),
                    Err(msg) => problems.push(format!("distributions id {}: {msg}", row.id)),
                }
            }
            out
        }
    };
    let covariances: Vec<(u32, CovarianceMatrix)> = match &raw.covariances {
        None => builtin_covariances().into_iter().enumerate().map(|(i, c)| (i as u32 + 1, c)).collect(),
        Some(rows) => {
            let mut out = Vec::new();
            for row in rows {
                match build_covariance(row) {
                    Ok(c) => out.push((row.id, c)),
                    Err(msg) => problems.push(format!("covariances id {}: {msg}", row.id)),
                }
            }
            out
        }
    };

    fn check_ids<T>(
        ids: &[u32],
        table: &[(u32, T)],
        what: &str,
        problems: &mut Vec<String>,
    ) {
        for id in ids {
            if !table.iter().any(|(i, _)| i == id) {
                problems.push(format!("{what} references unknown id {id}"));
            }
        }
    }

    let cost_ids = match family {
        Family::Quadratic => {
            let ids = raw.cost_ids.clone().unwrap_or_else(|| costs.iter().map(|(i, _)| *i).collect());
            check_ids(&ids, &costs, "cost_ids", &mut problems);
            if ids.is_empty() {
                problems.push("cost_ids must not be empty for the quadratic family".into());
            }
            ids
        }
        Family::Portfolio => raw.cost_ids.clone().unwrap_or_default(),
    };
    let distribution_ids = match family {
        Family::Quadratic => {
            let ids = raw
                .distribution_ids
                .clone()
                .unwrap_or_else(|| distributions.iter().map(|(i, _)| *i).collect());
            for id in &ids {
                match distributions.iter().find(|(i, _)| i == id) {
                    None => problems.push(format!("distribution_ids references unknown id {id}")),
                    Some((_, d)) if d.dim() != 1 => problems.push(format!(
                        "distribution id {id} is not univariate; the quadratic family needs d=1"
                    )),
                    _ => {}
                }
            }
            if ids.is_empty() {
                problems.push("distribution_ids must not be empty for the quadratic family".into());
            }
            ids
        }
        Family::Portfolio => raw.distribution_ids.clone().unwrap_or_default(),
    };
    let covariance_ids = match family {
        Family::Portfolio => {
            let ids = raw
                .covariance_ids
                .clone()
                .unwrap_or_else(|| covariances.iter().map(|(i, _)| *i).collect());
            check_ids(&ids, &covariances, "covariance_ids", &mut problems);
            if ids.is_empty() {
                problems.push("covariance_ids must not be empty for the portfolio family".into());
            }
            ids
        }
        Family::Quadratic => raw.covariance_ids.clone().unwrap_or_default(),
    };

    // Per-method tuning sections.
    let rb = raw.bagging.clone().unwrap_or_default();
    let bagging = BaggingSpec {
        replicates: rb.b.unwrap_or(400),
        resample_size: match rb.m {
            None | Some(0) => None,
            Some(m) => Some(m),
        },
        with_replacement: rb.with_replacement.unwrap_or(true),
    };
    if bagging.replicates == 0 {
        problems.push("bagging.b must be >= 1".into());
    }

    let rk = raw.kernel.clone().unwrap_or_default();
    let kernel = match rk.bandwidth_rule.as_deref() {
        None | Some("scott") => {
            if let Some(h) = rk.h {
                problems.push(format!(
                    "kernel.h = {h} is only meaningful with kernel.bandwidth_rule = \"fixed\""
                ));
            }
            KernelSpec { bandwidth: BandwidthRule::Scott }
        }
        Some("fixed") => match rk.h {
            Some(h) if h.is_finite() && h >= 0.0 => KernelSpec { bandwidth: BandwidthRule::Fixed(h) },
            Some(h) => {
                problems.push(format!("kernel.h must be finite and >= 0, got {h}"));
                KernelSpec::default()
            }
            None => {
                problems.push("kernel.bandwidth_rule = \"fixed\" requires kernel.h".into());
                KernelSpec::default()
            }
        },
        Some(other) => {
            problems.push(format!(
                "kernel.bandwidth_rule must be \"scott\" or \"fixed\", got {other:?}"
            ));
            KernelSpec::default()
        }
    };

    let rm = raw.mle.clone().unwrap_or_default();
    let mle = MleTuning {
        sigma_floor: rm.sigma_floor.unwrap_or(0.1),
        restarts: rm.restarts.unwrap_or(10),
        max_iters: rm.max_iters.unwrap_or(1000),
    };
    if !(mle.sigma_floor.is_finite() && mle.sigma_floor > 0.0) {
        problems.push(format!("mle.sigma_floor must be > 0, got {}", mle.sigma_floor));
    }
    if mle.restarts == 0 {
        problems.push("mle.restarts must be >= 1".into());
    }
    if mle.max_iters == 0 {
        problems.push("mle.max_iters must be >= 1".into());
    }

    let rbay = raw.bayes.clone().unwrap_or_default();
    let chain = ChainSettings {
        draws: rbay.draws.unwrap_or(5000),
        burn_in: rbay.burn_in.unwrap_or(1000),
        thin: rbay.thin.unwrap_or(1),
    };
    if chain.draws == 0 {
        problems.push("bayes.draws must be >= 1".into());
    }
    if chain.thin == 0 {
        problems.push("bayes.thin must be >= 1".into());
    }
    let beta_prior = BetaPrior {
        lo: rbay.beta_prior_lo.unwrap_or(1.0),
        hi: rbay.beta_prior_hi.unwrap_or(7.0),
    };
    if !(beta_prior.lo >= 1.0 && beta_prior.lo < beta_prior.hi && beta_prior.hi.is_finite()) {
        problems.push(format!(
            "bayes.beta_prior needs 1 <= lo < hi, got [{}, {}]",
            beta_prior.lo, beta_prior.hi
        ));
    }
    let mixture_prior = MixturePrior {
        delta: rbay.mixture_delta.unwrap_or(10.0),
        v: rbay.mixture_v.unwrap_or(0.1),
        n: rbay.mixture_n.unwrap_or(2.0),
        alpha_prec: rbay.mixture_alpha.unwrap_or(0.1),
        m: PriorMean::SampleMean,
    };
    for (key, v) in [
        ("bayes.mixture_delta", mixture_prior.delta),
        ("bayes.mixture_v", mixture_prior.v),
        ("bayes.mixture_n", mixture_prior.n),
        ("bayes.mixture_alpha", mixture_prior.alpha_prec),
    ] {
        if !(v.is_finite() && v > 0.0) {
            problems.push(format!("{key} must be > 0, got {v}"));
        }
    }
    let portfolio_prior = PortfolioPrior {
        gamma_shape: rbay.gamma_shape.unwrap_or(3.0),
        gamma_rate: rbay.gamma_rate.unwrap_or(1.0),
        eta: rbay.lkj_eta.unwrap_or(2.0),
        n_assets: 5,
        nu: t_nu,
    };
    for (key, v) in [
        ("bayes.gamma_shape", portfolio_prior.gamma_shape),
        ("bayes.gamma_rate", portfolio_prior.gamma_rate),
        ("bayes.lkj_eta", portfolio_prior.eta),
    ] {
        if !(v.is_finite() && v > 0.0) {
            problems.push(format!("{key} must be > 0, got {v}"));
        }
    }

    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems));
    }

    Ok(ExperimentConfig {
        family,
        master_seed: raw.master_seed.unwrap_or(42),
        replications,
        eval_size,
        sample_sizes,
        distribution_ids,
        cost_ids,
        covariance_ids,
        methods,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        workers: raw.workers.unwrap_or(0),
        mc_predictive: raw.mc_predictive.unwrap_or(false),
        mc_eval: raw.mc_eval.unwrap_or(false),
        t_nu,
        bagging,
        kernel,
        mle,
        bayes: BayesTuning { chain, beta_prior, mixture_prior, portfolio_prior },
        costs,
        distributions,
        covariances,
    })
}

fn build_distribution(row: &DistributionRow) -> Result<TrueDistribution, String> {
    match row.kind.as_str() {
        "scaled_beta" => {
            let alpha = row.alpha.ok_or("scaled_beta needs alpha")?;
            let beta = row.beta.ok_or("scaled_beta needs beta")?;
            ScaledBeta::new(alpha, beta)
                .map(TrueDistribution::ScaledBeta)
                .map_err(|e| e.to_string())
        }
        "gaussian_mixture" => {
            let mu1 = row.mu1.ok_or("gaussian_mixture needs mu1")?;
            let mu2 = row.mu2.ok_or("gaussian_mixture needs mu2")?;
            let sigma1 = row.sigma1.ok_or("gaussian_mixture needs sigma1")?;
            let sigma2 = row.sigma2.ok_or("gaussian_mixture needs sigma2")?;
            let rho = row.rho.ok_or("gaussian_mixture needs rho")?;
            GaussianMixture2::new(mu1, mu2, sigma1, sigma2, rho)
                .map(TrueDistribution::GaussianMixture2)
                .map_err(|e| e.to_string())
        }
        other => Err(format!("unknown distribution kind {other:?}")),
    }
}

fn build_covariance(row: &CovarianceRow) -> Result<CovarianceMatrix, String> {
    let n = row.rows.len();
    if n == 0 || row.rows.iter().any(|r| r.len() != n) {
        return Err(format!("rows must form a square matrix, got {n} rows"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| row.rows[i][j]);
    let cov = CovarianceMatrix::new(m).map_err(|e| e.to_string())?;
    cov.validate_psd().map_err(|e| e.to_string())?;
    Ok(cov)
}
