mod common;

use proptest::prelude::*;
use rand::Rng;

use sur_ess::dist::{ln_beta_pdf, ln_inv_gamma, ln_normal, logit};
use sur_ess::graphs::DecomposableGraph;
use sur_ess::model::{GammaPrior, Hyperparameters, Indicators, MrfEdge};
use sur_ess::priors::{
    eta_posterior, log_prior_gamma, log_prior_gamma_delta, log_prior_graph, omega_posterior, w_posterior,
    SelectionPrior, SelectionState, HOTSPOT_CLAMP,
};

use common::*;

fn random_state(kind: GammaPrior, p: usize, s: usize, rng: &mut impl Rng) -> SelectionState {
    match kind {
        GammaPrior::Hierarchical => SelectionState::Hierarchical {
            omega: (0..p).map(|_| rng.random_range(0.01..0.99)).collect(),
        },
        GammaPrior::Hotspot => SelectionState::Hotspot {
            o: (0..s).map(|_| rng.random_range(0.01..0.99)).collect(),
            pi: (0..p).map(|_| rng.random_range(0.1..3.0)).collect(),
        },
        GammaPrior::Mrf => SelectionState::Mrf,
    }
}

/// Independent Bernoulli log prior or MRF energy written out from the
/// definitions.
fn direct_log_prior(g: &Indicators, state: &SelectionState, d: f64, e: f64, edges: &[MrfEdge]) -> f64 {
    let (p, s) = (g.p(), g.s());
    let bern = |on: bool, q: f64| if on { q.ln() } else { (1.0 - q).ln() };
    match state {
        SelectionState::Hierarchical { omega } => {
            (0..p).flat_map(|j| (0..s).map(move |k| (j, k))).map(|(j, k)| bern(g.get(j, k), omega[j])).sum()
        }
        SelectionState::Hotspot { o, pi } => (0..p)
            .flat_map(|j| (0..s).map(move |k| (j, k)))
            .map(|(j, k)| bern(g.get(j, k), (o[k] * pi[j]).min(HOTSPOT_CLAMP)))
            .sum(),
        SelectionState::Mrf => {
            let flat = g.as_flat();
            let on = flat.iter().filter(|&&v| v).count() as f64;
            let pairs: f64 = edges.iter().filter(|ed| flat[ed.i] && flat[ed.j]).map(|ed| ed.weight).sum();
            d * on + e * pairs
        }
    }
}

#[test]
fn delta_matches_difference_of_full_priors() {
    let mut rng = rng(21);
    let (p, s) = (5, 3);
    let mut edges = Vec::new();
    for i in 0..p * s {
        for j in i + 1..p * s {
            if rng.random::<f64>() < 0.2 {
                edges.push(MrfEdge { i, j, weight: rng.random_range(0.1..2.0) });
            }
        }
    }
    let mut h = Hyperparameters::defaults(p, s);
    h.mrf_d = -1.3;
    h.mrf_e = 0.7;
    for kind in [GammaPrior::Hierarchical, GammaPrior::Hotspot, GammaPrior::Mrf] {
        let prior = SelectionPrior::new(kind, &h, p, s, Some(&edges)).unwrap();
        for _ in 0..300 {
            let state = random_state(kind, p, s, &mut rng);
            let g = Indicators::from_fn(p, s, |_, _| rng.random::<bool>());
            let (j, k) = (rng.random_range(0..p), rng.random_range(0..s));
            let mut g2 = g.clone();
            g2.flip(j, k);
            let delta = log_prior_gamma_delta(&g, &state, &prior, j, k);
            let full = log_prior_gamma(&g2, &state, &prior).unwrap() - log_prior_gamma(&g, &state, &prior).unwrap();
            let direct = direct_log_prior(&g2, &state, h.mrf_d, h.mrf_e, &edges)
                - direct_log_prior(&g, &state, h.mrf_d, h.mrf_e, &edges);
            assert!((delta - full).abs() < 1e-10, "{kind:?}: {delta} vs {full}");
            assert!((delta - direct).abs() < 1e-10, "{kind:?}: {delta} vs {direct}");
        }
    }
}

#[test]
fn hotspot_probability_is_clamped_below_one() {
    let h = Hyperparameters::defaults(2, 2);
    let prior = SelectionPrior::new(GammaPrior::Hotspot, &h, 2, 2, None).unwrap();
    let state = SelectionState::Hotspot { o: vec![0.9, 0.9], pi: vec![5.0, 5.0] };
    let g = Indicators::zeros(2, 2);
    let lp = log_prior_gamma(&g, &state, &prior).unwrap();
    assert!(lp.is_finite());
    assert!((lp - 4.0 * (1.0 - HOTSPOT_CLAMP).ln()).abs() < 1e-6);
    assert_eq!(state.inclusion_probability(0, 0), Some(HOTSPOT_CLAMP));
}

#[test]
fn mrf_without_interactions_is_bernoulli() {
    let (p, s) = (3, 2);
    let edges = vec![MrfEdge { i: 0, j: 1, weight: 1.0 }, MrfEdge { i: 2, j: 5, weight: 1.0 }];
    let mut rng = rng(22);
    for q in [0.1, 0.35, 0.8] {
        let mut h = Hyperparameters::defaults(p, s);
        h.mrf_d = logit(q);
        h.mrf_e = 0.0;
        let prior = SelectionPrior::new(GammaPrior::Mrf, &h, p, s, Some(&edges)).unwrap();
        let base = log_prior_gamma(&Indicators::zeros(p, s), &SelectionState::Mrf, &prior).unwrap();
        for _ in 0..50 {
            let g = Indicators::from_fn(p, s, |_, _| rng.random::<bool>());
            let m = g.count() as f64;
            let lp = log_prior_gamma(&g, &SelectionState::Mrf, &prior).unwrap() - base;
            assert!((lp - m * (q.ln() - (1.0 - q).ln())).abs() < 1e-12);
        }
    }
}

#[test]
fn mrf_requires_an_edge_list() {
    let h = Hyperparameters::defaults(2, 2);
    assert!(SelectionPrior::new(GammaPrior::Mrf, &h, 2, 2, None).is_err());
    let bad = [MrfEdge { i: 0, j: 9, weight: 1.0 }];
    assert!(SelectionPrior::new(GammaPrior::Mrf, &h, 2, 2, Some(&bad)).is_err());
}

/// `log prior + log likelihood − log claimed posterior` is the same at every
/// parameter value exactly when the claimed posterior is the conditional.
fn assert_constant(values: &[f64]) {
    let first = values[0];
    for v in values {
        assert!((v - first).abs() < 1e-9, "{values:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn omega_conditional_is_conjugate(bits in prop::collection::vec(any::<bool>(), 4), a in 0.2f64..5.0, b in 0.2f64..5.0) {
        let g = Indicators::from_fn(1, 4, |_, k| bits[k]);
        let mut h = Hyperparameters::defaults(1, 4);
        h.a_omega = a;
        h.b_omega = b;
        let (pa, pb) = omega_posterior(&g, 0, &h);
        let diffs: Vec<f64> = [0.1f64, 0.3, 0.55, 0.9]
            .iter()
            .map(|&w| {
                let lik: f64 = bits.iter().map(|&on| if on { w.ln() } else { (1.0 - w).ln() }).sum();
                ln_beta_pdf(w, a, b) + lik - ln_beta_pdf(w, pa, pb)
            })
            .collect();
        assert_constant(&diffs);
    }

    #[test]
    fn w_conditional_is_conjugate(beta in prop::collection::vec(-3.0f64..3.0, 0..6), a in 0.5f64..5.0, b in 0.5f64..5.0) {
        let mut h = Hyperparameters::defaults(1, 1);
        h.a_w = a;
        h.b_w = b;
        let (pa, pb) = w_posterior(&beta, &h);
        let diffs: Vec<f64> = [0.2, 1.0, 2.5, 7.0]
            .iter()
            .map(|&w| {
                let lik: f64 = beta.iter().map(|&x| ln_normal(x, 0.0, w)).sum();
                ln_inv_gamma(w, a, b) + lik - ln_inv_gamma(w, pa, pb)
            })
            .collect();
        assert_constant(&diffs);
    }

    #[test]
    fn eta_conditional_is_conjugate(code in 0u64..1024) {
        let adj = sur_ess::graphs::Adjacency::from_code(5, code).unwrap();
        prop_assume!(sur_ess::graphs::is_decomposable(&adj));
        let g = DecomposableGraph::from_edges(5, &adj.edges()).unwrap();
        let h = Hyperparameters::defaults(1, 5);
        let (pa, pb) = eta_posterior(&g, &h);
        let diffs: Vec<f64> = [0.05, 0.3, 0.6, 0.95]
            .iter()
            .map(|&e| ln_beta_pdf(e, h.a_eta, h.b_eta) + log_prior_graph(&g, e) - ln_beta_pdf(e, pa, pb))
            .collect();
        assert_constant(&diffs);
    }
}
