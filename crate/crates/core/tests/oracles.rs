use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use seirsl_core::abc::{simulate_reference, PriorSpec, Scenario};
use seirsl_core::synlik::{moments_from_replicates, synthetic_loglik};
use seirsl_core::{integrate_seir, NoiseModel, ParameterVector, SubsetMask, SummaryVector, TimeGrid};

fn max_state_error(a: &[[f64; 4]], b: &[[f64; 4]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| (0..4).map(move |k| (x[k] - y[k]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn rk4_converges_at_fourth_order() {
    let scenario = Scenario::baseline(NoiseModel::None);
    let run = |theta: &ParameterVector, substeps| {
        let grid = TimeGrid {
            substeps,
            ..TimeGrid::default()
        };
        integrate_seir(theta, &scenario.init, &grid).unwrap().states
    };
    for theta in [
        ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap(),
        ParameterVector::new(0.8, 0.5, 0.1).unwrap(),
    ] {
        let reference = run(&theta, 1280);
        let order =
            (max_state_error(&run(&theta, 2), &reference) / max_state_error(&run(&theta, 4), &reference)).log2();
        assert!(order >= 3.8, "measured order {order}");
    }
}

#[test]
fn reference_table_parameters_follow_the_uniform_prior() {
    let prior = PriorSpec::default();
    let n = 4000;
    let table = simulate_reference(&prior, n, &Scenario::baseline(NoiseModel::None), 3).unwrap();
    assert_eq!(table.params.len(), n);
    for j in 0..3 {
        let (a, b) = (prior.lower[j], prior.upper[j]);
        let x: Vec<f64> = table.params.iter().map(|p| p.to_array()[j]).collect();
        assert!(x.iter().all(|v| (a..=b).contains(v)));
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let width = b - a;
        // four standard errors of the uniform mean and variance
        assert!((mean - 0.5 * (a + b)).abs() < 4.0 * width / (12.0 * n as f64).sqrt());
        assert!((var - width * width / 12.0).abs() < 4.0 * width * width / (180.0 * n as f64).sqrt());
    }
}

fn dense_log_density(sigma: &DMatrix<f64>, diff: &DVector<f64>) -> f64 {
    let d = diff.len() as f64;
    let lu = sigma.clone().lu();
    let x = lu.solve(diff).unwrap();
    -0.5 * diff.dot(&x) - 0.5 * lu.determinant().ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthetic_loglik_matches_dense_solve(
        bits in 1u8..=255,
        mix in proptest::collection::vec(-0.3f64..0.3, 64),
        noise in proptest::collection::vec(-1.0f64..1.0, 8 * 40),
        offset in proptest::collection::vec(-2.0f64..2.0, 8),
    ) {
        let mask = SubsetMask::from_bits(bits).unwrap();
        let d = mask.len();
        let reps: Vec<Vec<f64>> = (0..40)
            .map(|r| {
                (0..d)
                    .map(|i| {
                        let row: f64 = (0..d)
                            .map(|k| (if i == k { 1.0 } else { 0.0 } + mix[i * 8 + k]) * noise[r * 8 + k])
                            .sum();
                        row + 5.0
                    })
                    .collect()
            })
            .collect();
        let model = moments_from_replicates(&reps, mask).unwrap();
        prop_assume!(model.jitter_applied == 0.0);
        let s: Vec<f64> = (0..d).map(|i| model.mu_hat[i] + offset[i]).collect();
        let ll = synthetic_loglik(&model, &SummaryVector::new(s.clone(), mask).unwrap()).unwrap();
        let sigma = DMatrix::from_row_slice(d, d, &model.sigma_hat);
        let diff = DVector::from_iterator(d, (0..d).map(|i| s[i] - model.mu_hat[i]));
        let oracle = dense_log_density(&sigma, &diff);
        let full = ll - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        prop_assert!((full - oracle).abs() <= 1e-10, "{} vs {}", full, oracle);
    }
}
