mod common;

use nalgebra::DMatrix;
use rand::Rng;

use sur_ess::graphs::{decompose, Adjacency, DecomposableGraph};
use sur_ess::linalg::select;
use sur_ess::simulate::{
    sample_gwishart_decomposable, sample_wishart, simulate_eqtl, simulate_quickstart, SimulationRecipe,
    QUICKSTART_SUPPORT,
};

use common::*;

fn scale_matrix(s: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = normal_matrix(s, s, rng);
    &a * a.transpose() / s as f64 + DMatrix::identity(s, s)
}

#[test]
fn wishart_mean_is_df_times_scale() {
    let mut rng = rng(41);
    let psi = scale_matrix(3, &mut rng);
    let draws = 20_000;
    let mut mean = DMatrix::zeros(3, 3);
    for _ in 0..draws {
        mean += sample_wishart(6.0, &psi, &mut rng).unwrap();
    }
    mean /= draws as f64;
    let rel = (&mean - &psi * 6.0).norm() / (&psi * 6.0).norm();
    assert!(rel < 0.02, "relative error {rel}");
}

#[test]
fn gwishart_clique_marginals_have_inverse_wishart_means() {
    let mut rng = rng(42);
    let delta = 8.0;
    let graph = DecomposableGraph::from_edges(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]).unwrap();
    let m = scale_matrix(5, &mut rng);
    let draws = 20_000;
    let mut sigma_mean = DMatrix::zeros(5, 5);
    for _ in 0..draws {
        let k = sample_gwishart_decomposable(&graph, delta, &m, &mut rng).unwrap();
        sigma_mean += k.try_inverse().unwrap();
    }
    sigma_mean /= draws as f64;
    for clique in graph.cliques() {
        let got = select(&sigma_mean, &clique, &clique);
        let expected = select(&m, &clique, &clique) / (delta - 2.0);
        let rel = (&got - &expected).norm() / expected.norm();
        assert!(rel < 0.03, "clique {clique:?}: relative error {rel}");
    }
}

#[test]
fn gwishart_on_complete_graph_is_wishart() {
    let mut rng = rng(43);
    let (s, delta) = (4, 3.0);
    let graph = DecomposableGraph::complete(s).unwrap();
    let m = scale_matrix(s, &mut rng);
    let expected = m.clone().try_inverse().unwrap() * (delta + s as f64 - 1.0);
    let draws = 20_000;
    let mut mean = DMatrix::zeros(s, s);
    for _ in 0..draws {
        mean += sample_gwishart_decomposable(&graph, delta, &m, &mut rng).unwrap();
    }
    mean /= draws as f64;
    assert!((&mean - &expected).norm() < 0.5, "Frobenius error {}", (&mean - &expected).norm());
}

#[test]
fn gwishart_draws_respect_the_graph() {
    let mut rng = rng(44);
    let mut graphs = 0;
    while graphs < 25 {
        let s = rng.random_range(2..=6);
        let code = rng.random_range(0..1u64 << (s * (s - 1) / 2));
        let Ok(graph) = decompose(&Adjacency::from_code(s, code).unwrap()) else { continue };
        graphs += 1;
        let m = scale_matrix(s, &mut rng);
        for _ in 0..400 {
            let k = sample_gwishart_decomposable(&graph, 3.0, &m, &mut rng).unwrap();
            assert!(k.clone().cholesky().is_some());
            for i in 0..s {
                for j in 0..s {
                    assert_eq!(k[(i, j)], k[(j, i)]);
                    if i != j && !graph.has_edge(i, j) {
                        assert_eq!(k[(i, j)], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn quickstart_is_reproducible_and_matches_its_support() {
    let a = simulate_quickstart(5);
    let b = simulate_quickstart(5);
    let c = simulate_quickstart(6);
    assert_eq!(a.dataset, b.dataset);
    assert_ne!(a.dataset.y(), c.dataset.y());
    assert_eq!((a.dataset.p(), a.dataset.s()), (15, 3));
    for j in 0..15 {
        for k in 0..3 {
            let on = QUICKSTART_SUPPORT.contains(&(j, k));
            assert_eq!(a.gamma_true.get(j, k), on);
            assert_eq!(a.b_true[(j, k)] != 0.0, on);
        }
    }
}

#[test]
fn eqtl_simulation_is_reproducible_and_hits_target_snr() {
    let recipe = SimulationRecipe::desk(3);
    let a = simulate_eqtl(&recipe).unwrap();
    let b = simulate_eqtl(&recipe).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.precision, b.precision);
    assert!((a.snr - 25.0).abs() < 1e-6 * 25.0, "snr {}", a.snr);
    // SNPs take values 0, 1, 2 and coefficients vanish off the support.
    assert!(a.dataset.x().iter().all(|&v| v == 0.0 || v == 1.0 || v == 2.0));
    for j in 0..recipe.p() {
        for k in 0..recipe.s() {
            if !recipe.gamma_true.get(j, k) {
                assert_eq!(a.b_true[(j, k)], 0.0);
            }
        }
    }
    for i in 0..5 {
        for j in 0..5 {
            if i != j && !a.graph_true.has_edge(i, j) {
                assert_eq!(a.precision[(i, j)], 0.0);
            }
        }
    }
    let paper = simulate_eqtl(&SimulationRecipe::paper_scale(1)).unwrap();
    assert_eq!((paper.dataset.n(), paper.dataset.p(), paper.dataset.s()), (100, 150, 10));
}
