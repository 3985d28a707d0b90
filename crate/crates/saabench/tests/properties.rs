//! Property tests for the spec's structural invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use saabench::portfolio::{min_variance_weights, out_of_sample_variance, CovarianceMatrix};
use saabench::quadratic::{expected_cost, saa_minimize, sample_moments, DecisionBox, QuadraticCost};
use saabench::{MomentPair, Sample};

fn spd_matrix(entries: Vec<f64>) -> CovarianceMatrix {
    let g = DMatrix::from_vec(5, 5, entries);
    CovarianceMatrix::new(&g * g.transpose() + DMatrix::identity(5, 5) * 0.05).unwrap()
}

fn quad_form(v: &[f64], cov: &CovarianceMatrix) -> f64 {
    let x = DVector::from_row_slice(v);
    (x.transpose() * cov.matrix() * x)[(0, 0)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn min_variance_weights_sum_to_one_and_dominate(
        entries in prop::collection::vec(-2.0..2.0f64, 25),
        dirs in prop::collection::vec(prop::collection::vec(-1.0..2.0f64, 5), 50),
    ) {
        let cov = spd_matrix(entries);
        let w = min_variance_weights(&cov).unwrap();
        prop_assert!((w.sum() - 1.0).abs() < 1e-10);
        let best = out_of_sample_variance(&w, &cov);
        prop_assert!((best - quad_form(w.as_slice(), &cov)).abs() < 1e-15);
        for d in dirs {
            let total: f64 = d.iter().sum();
            if total.abs() < 1e-3 {
                continue;
            }
            let v: Vec<f64> = d.iter().map(|x| x / total).collect();
            prop_assert!(best <= quad_form(&v, &cov) + 1e-12);
        }
    }

    #[test]
    fn saa_decision_is_a_minimum_over_the_box(
        alpha in -0.8..0.8f64,
        beta in -4.0..4.0f64,
        gamma in -4.0..4.0f64,
        m1 in -0.9..0.9f64,
        extra in 0.0..1.0f64,
        probes in prop::collection::vec(-10.0..10.0f64, 32),
    ) {
        let cost = QuadraticCost::new(alpha, beta, gamma);
        let m = MomentPair::new(m1, m1 * m1 + extra);
        let bounds = DecisionBox::default();
        let x = saa_minimize(&cost, m, &bounds);
        let fx = expected_cost(&cost, x, m);
        for p in probes {
            prop_assert!(fx <= expected_cost(&cost, p, m) + 1e-9);
        }
    }

    #[test]
    fn sample_moments_are_permutation_invariant_bitwise(
        mut ys in prop::collection::vec(-1.0..1.0f64, 1..60),
        rotation in 0usize..60,
    ) {
        let base = sample_moments(&Sample::from_scalars(ys.clone())).unwrap();
        let r = rotation % ys.len();
        ys.rotate_left(r);
        ys.reverse();
        let permuted = sample_moments(&Sample::from_scalars(ys)).unwrap();
        prop_assert_eq!(base.m1.to_bits(), permuted.m1.to_bits());
        prop_assert_eq!(base.m2.to_bits(), permuted.m2.to_bits());
    }
}
