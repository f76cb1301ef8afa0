use consensus_core::analysis::{asym_limit_mse, gamma_exact, gamma_matrix, gamma_sampled, uncoded_sym_rate};
use consensus_core::erasure::{effective_update, sample_round, ErasureModel};
use consensus_core::graph::Graph;
use consensus_core::protocols::uncoded::uncoded_error_trajectory;
use consensus_core::rng::hash_counters;
use consensus_core::spectral::{consensus_matrix, spectral_summary};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sums(m: &DMatrix<f64>) -> (f64, f64) {
    let rows = m.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    let cols = m.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max);
    (rows, cols)
}

#[test]
fn two_nodes_at_half_step_have_rate_sqrt_p() {
    let g = Graph::path(2).unwrap();
    for p in [0.0, 0.25, 0.6] {
        let ga = gamma_exact(&g, 0.5, &ErasureModel::symmetric(p).unwrap()).unwrap();
        assert!((uncoded_sym_rate(&ga).unwrap() - p.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn symmetric_gamma_is_doubly_stochastic() {
    for g in [Graph::path(3).unwrap(), Graph::cycle(4).unwrap(), Graph::star(4).unwrap()] {
        let eps = spectral_summary(&g, None).unwrap().eps_star;
        let gm = gamma_matrix(&g, eps, &ErasureModel::symmetric(0.3).unwrap()).unwrap();
        let (r, c) = sums(&gm);
        assert!(r < 1e-12 && c < 1e-12);
        assert!((&gm - gm.transpose()).abs().max() < 1e-12);
    }
}

#[test]
fn asymmetric_gamma_preserves_the_all_ones_functional() {
    let g = Graph::path(3).unwrap();
    let gm = gamma_matrix(&g, 0.3, &ErasureModel::asymmetric(0.4).unwrap()).unwrap();
    let (_, c) = sums(&gm);
    assert!(c < 1e-12);
    let (r, _) = sums(&gm);
    assert!(r > 1e-3, "asymmetric erasures should break the other stochasticity");
}

/// `Γ` equals the average of `Wᵀ⊗Wᵀ` over all erasure patterns, built here
/// directly from sampled update matrices.
#[test]
fn sampled_gamma_agrees_with_exact() {
    let g = Graph::cycle(4).unwrap();
    for model in [ErasureModel::symmetric(0.3).unwrap(), ErasureModel::asymmetric(0.3).unwrap()] {
        let exact = gamma_matrix(&g, 0.25, &model).unwrap();
        let (mean, se) = gamma_sampled(&g, 0.25, &model, 20_000, 17);
        for i in 0..exact.nrows() {
            for j in 0..exact.ncols() {
                let tol = 4.0 * se[(i, j)] + 1e-12;
                assert!((mean[(i, j)] - exact[(i, j)]).abs() <= tol, "({i},{j}) {} vs {}", mean[(i, j)], exact[(i, j)]);
            }
        }
        // Independent construction from effective update matrices.
        let mut acc = DMatrix::zeros(16, 16);
        let k = 4000;
        for s in 0..k {
            let w = effective_update(&g, &sample_round(&model, &g, hash_counters(3, &[s]), 1, 0), 0.25);
            acc += w.transpose().kronecker(&w.transpose());
        }
        acc /= k as f64;
        assert!((acc - &exact).abs().max() < 0.05);
    }
}

#[test]
fn mse_trajectory_matches_monte_carlo() {
    let g = Graph::path(3).unwrap();
    let model = ErasureModel::asymmetric(0.3).unwrap();
    let ga = gamma_exact(&g, 0.3, &model).unwrap();
    let x0 = [1.0, -2.0, 0.5];
    let want = ga.mse_trajectory(&x0, 10).unwrap();
    let trials = 20_000;
    let mut sum = [0.0; 11];
    let mut sq = [0.0; 11];
    for s in 0..trials {
        for (k, e) in uncoded_error_trajectory(&g, 0.3, &model, hash_counters(5, &[s]), &x0, 10).into_iter().enumerate() {
            sum[k] += e;
            sq[k] += e * e;
        }
    }
    for k in 0..=10 {
        let mean = sum[k] / trials as f64;
        let se = ((sq[k] / trials as f64 - mean * mean).max(0.0) / trials as f64).sqrt();
        assert!((mean - want[k]).abs() <= 4.0 * se + 1e-12 * want[k], "k={k}: {mean} vs {}", want[k]);
    }
    assert!(asym_limit_mse(&ga, &x0).unwrap() > 0.0);
}

#[test]
fn rate_grows_with_erasure_probability_on_p3() {
    let g = Graph::path(3).unwrap();
    let rates: Vec<f64> = (0..=9)
        .map(|i| {
            let ga = gamma_exact(&g, 0.5, &ErasureModel::symmetric(i as f64 / 10.0).unwrap()).unwrap();
            uncoded_sym_rate(&ga).unwrap()
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
    let mu = spectral_summary(&g, Some(0.5)).unwrap().mu;
    assert!((rates[0] - mu).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consensus_matrix_is_symmetric_doubly_stochastic(n in 2usize..9, q in 0.3f64..1.0, seed in any::<u64>(), frac in 0.05f64..1.0) {
        let g = Graph::erdos_renyi(n, q, seed).unwrap();
        let eps = frac / g.max_degree() as f64;
        let w = consensus_matrix(&g, eps).unwrap();
        prop_assert!((&w - w.transpose()).abs().max() < 1e-15);
        let (r, c) = sums(&w);
        prop_assert!(r < 1e-12 && c < 1e-12);
        prop_assert!(w.iter().all(|&v| v >= 0.0));
    }
}
