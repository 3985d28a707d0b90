//! Command-line entry point: argument parsing, config loading, experiment
//! dispatch, and listing of the built-in problems.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use crate::distributions::{builtin_univariate, TrueDistribution};
use crate::harness::{load_config, run_and_emit, HarnessError, MethodName};
use crate::portfolio::builtin_covariances;
use crate::quadratic::builtin_costs;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser, PartialEq)]
#[command(
    name = "saabench",
    version,
    about = "Benchmark data-driven decision methods for stochastic optimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum CliCommand {
    /// Run the experiment described by a config file
    Run(RunArgs),
    /// Print the built-in cost functions, distributions, and covariances
    List,
    /// Check a config file and report every violation
    Validate {
        /// Path to the TOML experiment config
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args, PartialEq)]
pub struct RunArgs {
    /// Path to the TOML experiment config
    #[arg(long)]
    pub config: PathBuf,

    /// Override the master seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Override the output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Worker threads (0 = all cores)
    #[arg(long, env = "SAABENCH_WORKERS")]
    pub workers: Option<usize>,

    /// Comma-separated subset of methods to run
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,

    /// Use the sampling route for kernel/MLE/Bayes predictive decisions
    #[arg(long)]
    pub mc_predictive: bool,

    /// Evaluate on a large shared sample instead of exact expectations
    #[arg(long)]
    pub mc_eval: bool,
}

/// Parses argv (including the program name) into a command.
pub fn parse_args<I, T>(argv: I) -> Result<CliCommand, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv).map(|cli| cli.command)
}

/// Runs a parsed command to completion and maps every outcome to an exit
/// code.
pub fn execute(command: CliCommand) -> i32 {
    match command {
        CliCommand::List => {
            print_builtins();
            EXIT_OK
        }
        CliCommand::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "ok: {} family, {} replications, methods [{}]",
                    cfg.family.as_str(),
                    cfg.replications,
                    cfg.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
                );
                EXIT_OK
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_USAGE
            }
        },
        CliCommand::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> i32 {
    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(names) = args.methods {
        let mut methods = Vec::new();
        for name in &names {
            match MethodName::parse(name) {
                Some(m) if cfg.methods.contains(&m) => {
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
                Some(m) => {
                    eprintln!(
                        "--methods: {} is not enabled in the config's method list",
                        m.as_str()
                    );
                    return EXIT_USAGE;
                }
                None => {
                    eprintln!("--methods: unknown method {name:?}");
                    return EXIT_USAGE;
                }
            }
        }
        if methods.is_empty() {
            eprintln!("--methods selected nothing");
            return EXIT_USAGE;
        }
        cfg.methods = methods;
    }
    cfg.mc_predictive |= args.mc_predictive;
    cfg.mc_eval |= args.mc_eval;

    match run_and_emit(&cfg) {
        Ok(artifacts) => {
            println!(
                "wrote {} records to {}",
                artifacts.outcome.records.len(),
                artifacts.csv_path.display()
            );
            println!("metadata: {}", artifacts.meta_path.display());
            for p in &artifacts.plot_paths {
                println!("plot: {}", p.display());
            }
            if artifacts.outcome.excluded_total > 0 {
                println!(
                    "excluded method-replications: {}",
                    artifacts.outcome.excluded_total
                );
            }
            EXIT_OK
        }
        Err(HarnessError::Config(e)) => {
            eprintln!("{e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_RUNTIME
        }
    }
}

fn print_builtins() {
    println!("cost functions (c(x,y) = x^2 + a*x^2*y + b*x*y^2 + g*x*y):");
    for (i, c) in builtin_costs().iter().enumerate() {
        println!("  {:2}  a={:+.2}  b={:+.2}  g={:+.2}", i + 1, c.alpha, c.beta, c.gamma);
    }
    println!("\nunivariate distributions:");
    for (i, d) in builtin_univariate().iter().enumerate() {
        match d {
            TrueDistribution::ScaledBeta(b) => println!(
                "  {:2}  scaled beta on [-1,1]   alpha={} beta={}",
                i + 1,
                b.alpha(),
                b.beta()
            ),
            TrueDistribution::GaussianMixture2(m) => {
                let (mu1, mu2, s1, s2, rho) = m.params();
                println!(
                    "  {:2}  gaussian mixture        mu=({}, {}) sigma=({}, {}) rho={}",
                    i + 1,
                    mu1,
                    mu2,
                    s1,
                    s2,
                    rho
                );
            }
            TrueDistribution::MultivariateT(_) => unreachable!("builtins are univariate"),
        }
    }
    println!("\nportfolio covariance matrices (weekly-return scale, 5 assets):");
    for (i, c) in builtin_covariances().iter().enumerate() {
        println!("  {:2}", i + 1);
        for r in 0..c.n() {
            let row: Vec<String> =
                (0..c.n()).map(|j| format!("{:+.6e}", c.matrix()[(r, j)])).collect();
            println!("      [{}]", row.join(", "));
        }
    }
}

/// Full CLI flow for a raw argv; the binary's `main` delegates here.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(argv) {
        Ok(command) => execute(command),
        Err(e) => {
            // --help/--version are "errors" in clap that should exit 0.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_with_seed_override_parses() {
        let cmd =
            parse_args(["saabench", "run", "--config", "quadratic.toml", "--seed", "42"]).unwrap();
        let CliCommand::Run(args) = cmd else { panic!("expected run") };
        assert_eq!(args.config, PathBuf::from("quadratic.toml"));
        assert_eq!(args.seed, Some(42));
        assert_eq!(args.methods, None);
        assert!(!args.mc_predictive);
    }

    #[test]
    fn methods_flag_splits_on_commas() {
        let cmd = parse_args([
            "saabench",
            "run",
            "--config",
            "c.toml",
            "--methods",
            "saa,bagging",
        ])
        .unwrap();
        let CliCommand::Run(args) = cmd else { panic!() };
        assert_eq!(args.methods, Some(vec!["saa".into(), "bagging".into()]));
    }

    #[test]
    fn run_without_config_is_a_usage_error() {
        let err = parse_args(["saabench", "run"]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::MissingRequiredArgument);
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert!(parse_args(["saabench", "run", "--config", "c.toml", "--frobnicate"]).is_err());
        assert!(parse_args(["saabench", "teleport"]).is_err());
    }

    #[test]
    fn list_parses_bare() {
        assert_eq!(parse_args(["saabench", "list"]).unwrap(), CliCommand::List);
    }
}
