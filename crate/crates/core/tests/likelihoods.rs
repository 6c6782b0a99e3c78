mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use sur_ess::graphs::{decompose, Adjacency, DecomposableGraph};
use sur_ess::likelihoods::{hrr_log_marginal, implied_covariance, sur_log_likelihood, CovarianceState, ResidualStructure};

use common::*;

/// `C = A⁻¹ diag(σ²) A⁻ᵀ` with `A = I − R`, built from the residual
/// regressions without using the library's covariance routine.
fn covariance_from_regressions(cov: &CovarianceState, structure: &ResidualStructure) -> DMatrix<f64> {
    let s = structure.s();
    let mut a = DMatrix::<f64>::identity(s, s);
    for k in 0..s {
        for (r, &l) in cov.rho[k].iter().zip(structure.parents(k)) {
            a[(k, l)] = -r;
        }
    }
    let ainv = a.try_inverse().unwrap();
    &ainv * DMatrix::from_diagonal(&DVector::from_vec(cov.sigma2.clone())) * ainv.transpose()
}

fn random_cov(structure: &ResidualStructure, rng: &mut impl Rng) -> CovarianceState {
    let s = structure.s();
    CovarianceState {
        sigma2: (0..s).map(|_| rng.random_range(0.2..3.0)).collect(),
        rho: (0..s).map(|k| structure.parents(k).iter().map(|_| rng.random_range(-1.2..1.2)).collect()).collect(),
        tau: 1.0,
    }
}

#[test]
fn dense_likelihood_is_matrix_normal() {
    let mut rng = rng(31);
    for _ in 0..100 {
        let s = rng.random_range(1..=5);
        let n = rng.random_range(1..=9);
        let structure = ResidualStructure::dense(s, s as f64 + 2.0);
        let cov = random_cov(&structure, &mut rng);
        let c = covariance_from_regressions(&cov, &structure);
        let u = normal_matrix(n, s, &mut rng);
        let ll = sur_log_likelihood(&u, &cov, &structure).unwrap();
        assert!((ll - matrix_normal_log_density(&u, &c)).abs() < 1e-8);
        assert!((implied_covariance(&cov, &structure).unwrap() - &c).amax() < 1e-9);
    }
}

#[test]
fn sparse_likelihood_has_graph_zeros_in_precision() {
    let mut rng = rng(32);
    for s in 2..=6 {
        for code in (0..1u64 << (s * (s - 1) / 2)).step_by(7) {
            let Ok(g) = decompose(&Adjacency::from_code(s, code).unwrap()) else { continue };
            let structure = ResidualStructure::sparse(&g, s as f64 + 2.0);
            let cov = random_cov(&structure, &mut rng);
            let c = covariance_from_regressions(&cov, &structure);
            let k = c.clone().try_inverse().unwrap();
            for i in 0..s {
                for j in 0..s {
                    if i != j && !g.has_edge(i, j) {
                        assert!(k[(i, j)].abs() < 1e-8 * k.amax(), "s={s} code={code} ({i},{j})");
                    }
                }
            }
            let u = normal_matrix(4, s, &mut rng);
            let ll = sur_log_likelihood(&u, &cov, &structure).unwrap();
            assert!((ll - matrix_normal_log_density(&u, &c)).abs() < 1e-8);
        }
    }
}

#[test]
fn sparse_empty_graph_is_independent_columns() {
    let mut rng = rng(33);
    let g = DecomposableGraph::empty(4).unwrap();
    let structure = ResidualStructure::sparse(&g, 7.0);
    let cov = random_cov(&structure, &mut rng);
    assert!(cov.rho.iter().all(|r| r.is_empty()));
    let u = normal_matrix(6, 4, &mut rng);
    let ll = sur_log_likelihood(&u, &cov, &structure).unwrap();
    let direct: f64 = (0..4)
        .flat_map(|k| (0..6).map(move |i| (i, k)))
        .map(|(i, k)| sur_ess::dist::ln_normal(u[(i, k)], 0.0, cov.sigma2[k]))
        .sum();
    assert!((ll - direct).abs() < 1e-10);
}

#[test]
fn mismatched_pattern_is_rejected() {
    let structure = ResidualStructure::dense(3, 5.0);
    let cov = CovarianceState { sigma2: vec![1.0; 3], rho: vec![vec![]; 3], tau: 1.0 };
    let u = DMatrix::zeros(2, 3);
    assert!(sur_log_likelihood(&u, &cov, &structure).is_err());
}

#[test]
fn empty_model_marginal_is_closed_form_student() {
    // With no predictors y ~ t_{2a}(0, b/a · I).
    let y: DVector<f64> = DVector::from_vec(vec![0.4, -1.1, 2.0]);
    let (a, b) = (1.7, 0.9);
    let lg = statrs::function::gamma::ln_gamma;
    let n = 3.0;
    let expected = lg(a + n / 2.0) - lg(a) - n / 2.0 * (2.0 * std::f64::consts::PI * b).ln()
        - (a + n / 2.0) * (1.0 + y.norm_squared() / (2.0 * b)).ln();
    let got = hrr_log_marginal(&y, &DMatrix::zeros(3, 0), 1.0, a, b).unwrap();
    assert!((got - expected).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hrr_marginal_matches_quadrature(seed in 0u64..10_000, n in 1usize..6, q in 0usize..3,
                                       w in 0.2f64..5.0, a in 0.5f64..3.0, b in 0.3f64..3.0) {
        let mut r = rng(seed);
        let x = normal_matrix(n, q, &mut r);
        let y = DVector::from_fn(n, |_, _| r.random_range(-1.5..1.5));
        let closed = hrr_log_marginal(&y, &x, w, a, b).unwrap();
        let quad = nig_log_marginal_quadrature(&y, &x, w, a, b);
        prop_assert!(((closed - quad).exp() - 1.0).abs() < 1e-6, "{} vs {}", closed, quad);
    }
}
