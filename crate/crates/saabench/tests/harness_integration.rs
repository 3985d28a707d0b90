//! End-to-end harness behavior: determinism, matched pairing, interval
//! scaling with K, and the frozen mini-experiment golden file.

use saabench::harness::{
    config::{resolve, RawConfig},
    records::render_csv,
    run_outcome, ExperimentConfig, Family, MethodName,
};

fn quick_quadratic(k: usize, workers: usize) -> ExperimentConfig {
    let raw: RawConfig = toml::from_str(&format!(
        r#"
        family = "quadratic"
        replications = {k}
        sample_sizes = [10, 20]
        distribution_ids = [1, 4]
        cost_ids = [1, 7]
        workers = {workers}
        [bayes]
        draws = 300
        burn_in = 100
        "#
    ))
    .unwrap();
    resolve(raw).unwrap()
}

#[test]
fn worker_count_does_not_change_bytes() {
    let mut one = quick_quadratic(24, 1);
    let mut four = quick_quadratic(24, 4);
    one.master_seed = 7;
    four.master_seed = 7;
    let a = render_csv(&run_outcome(&one).unwrap().records).unwrap();
    let b = render_csv(&run_outcome(&four).unwrap().records).unwrap();
    assert_eq!(a, b);
}

#[test]
fn method_list_order_does_not_change_method_records() {
    let mut forward = quick_quadratic(16, 0);
    forward.methods = vec![MethodName::Saa, MethodName::Kernel, MethodName::Bagging];
    let mut reverse = forward.clone();
    reverse.methods = vec![MethodName::Bagging, MethodName::Kernel, MethodName::Saa];

    let fw = run_outcome(&forward).unwrap().records;
    let rv = run_outcome(&reverse).unwrap().records;
    for rec in fw.iter().filter(|r| r.method == MethodName::Kernel) {
        let twin = rv
            .iter()
            .find(|r| {
                r.method == MethodName::Kernel
                    && r.problem_id == rec.problem_id
                    && r.distribution_id == rec.distribution_id
                    && r.n == rec.n
            })
            .unwrap();
        assert_eq!(rec.mean_improvement.to_bits(), twin.mean_improvement.to_bits());
        assert_eq!(rec.ci_low.to_bits(), twin.ci_low.to_bits());
    }
}

#[test]
fn saa_records_are_identically_zero_and_mc_eval_stays_matched() {
    let raw: RawConfig = toml::from_str(
        r#"
        family = "quadratic"
        replications = 30
        sample_sizes = [10]
        distribution_ids = [1]
        cost_ids = [1]
        methods = ["saa"]
        mc_eval = true
        eval_size = 500
        "#,
    )
    .unwrap();
    let cfg = resolve(raw).unwrap();
    for rec in run_outcome(&cfg).unwrap().records {
        assert_eq!(rec.mean_improvement, 0.0);
        assert_eq!((rec.ci_low, rec.ci_high), (0.0, 0.0));
        assert_eq!(rec.mean_cost_saa, rec.mean_cost_method);
    }
}

#[test]
fn interval_width_shrinks_with_k() {
    // Same master seed family; more replications must give a narrower
    // interval for the same cell.
    let narrow = |k: usize| {
        let raw: RawConfig = toml::from_str(&format!(
            r#"
            family = "quadratic"
            replications = {k}
            sample_sizes = [10]
            distribution_ids = [1]
            cost_ids = [1]
            methods = ["saa", "kernel"]
            "#
        ))
        .unwrap();
        let cfg = resolve(raw).unwrap();
        let recs = run_outcome(&cfg).unwrap().records;
        let r = recs.iter().find(|r| r.method == MethodName::Kernel).unwrap().clone();
        r.ci_high - r.ci_low
    };
    let w100 = narrow(100);
    let w1000 = narrow(1000);
    assert!(
        w1000 < w100,
        "interval width should shrink with K: {w1000} at K=1000 vs {w100} at K=100"
    );
}

#[test]
fn mc_predictive_route_tracks_analytic_route() {
    let base = {
        let mut cfg = quick_quadratic(50, 0);
        cfg.methods = vec![MethodName::Saa, MethodName::Kernel, MethodName::Mle];
        cfg
    };
    let mut mc = base.clone();
    mc.mc_predictive = true;

    let exact = run_outcome(&base).unwrap().records;
    let sampled = run_outcome(&mc).unwrap().records;
    for (a, b) in exact.iter().zip(&sampled) {
        assert_eq!(a.method, b.method);
        if a.method == MethodName::Saa {
            assert_eq!(b.mean_improvement, 0.0);
            continue;
        }
        // 1e5 predictive draws leave only small moment noise per
        // replication; the aggregated improvements stay close.
        assert!(
            (a.mean_improvement - b.mean_improvement).abs() < 0.02,
            "{:?} N={} exact {} vs mc {}",
            a.method,
            a.n,
            a.mean_improvement,
            b.mean_improvement
        );
    }
}

#[test]
fn portfolio_runs_end_to_end_with_exclusion_accounting() {
    let raw: RawConfig = toml::from_str(
        r#"
        family = "portfolio"
        replications = 25
        sample_sizes = [30]
        covariance_ids = [1, 3]
        methods = ["saa", "bagging", "kernel", "mle"]
        "#,
    )
    .unwrap();
    let cfg = resolve(raw).unwrap();
    let out = run_outcome(&cfg).unwrap();
    assert_eq!(out.records.len(), 2 * 4);
    for rec in &out.records {
        assert_eq!(rec.k + rec.excluded, 25);
        assert!(rec.ci_low <= rec.mean_improvement && rec.mean_improvement <= rec.ci_high);
        assert!(rec.mean_cost_saa.is_finite() && rec.mean_cost_method.is_finite());
        if rec.method == MethodName::Saa {
            assert_eq!(rec.mean_improvement, 0.0);
        }
    }
}

#[test]
fn golden_mini_experiment_is_byte_stable() {
    let raw: RawConfig = toml::from_str(
        r#"
        family = "quadratic"
        master_seed = 20260810
        replications = 5
        sample_sizes = [10]
        distribution_ids = [1, 4]
        cost_ids = [1, 7]
        [bayes]
        draws = 200
        burn_in = 50
        "#,
    )
    .unwrap();
    let cfg = resolve(raw).unwrap();
    let csv = render_csv(&run_outcome(&cfg).unwrap().records).unwrap();
    let golden = include_str!("golden/mini_quadratic.csv");
    assert_eq!(csv, golden, "mini experiment drifted from the committed golden file");
}

#[test]
fn default_configs_resolve() {
    assert_eq!(ExperimentConfig::default_for(Family::Quadratic).replications, 1000);
    assert_eq!(ExperimentConfig::default_for(Family::Portfolio).replications, 500);
}
