//! Selection priors on Γ, the Bernoulli edge prior on the response graph and
//! the inverse-gamma shrinkage prior on the slab variance `w`.

use rand::Rng;

use crate::dist::{logistic, logit, sample_beta, sample_inv_gamma, standard_normal};
use crate::error::{Error, Result};
use crate::graphs::DecomposableGraph;
use crate::model::{GammaPrior, Hyperparameters, Indicators, MrfEdge};

/// Upper clamp for hotspot inclusion probabilities `o_k·π_j`.
pub const HOTSPOT_CLAMP: f64 = 1.0 - 1e-10;

/// Keeps Beta draws strictly inside (0, 1) so their logs stay finite.
const PROB_FLOOR: f64 = 1e-300;

/// Prior-specific parameters of Γ.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionState {
    Hierarchical { omega: Vec<f64> },
    Hotspot { o: Vec<f64>, pi: Vec<f64> },
    Mrf,
}

impl SelectionState {
    pub fn kind(&self) -> GammaPrior {
        match self {
            SelectionState::Hierarchical { .. } => GammaPrior::Hierarchical,
            SelectionState::Hotspot { .. } => GammaPrior::Hotspot,
            SelectionState::Mrf => GammaPrior::Mrf,
        }
    }

    /// Starting values at the prior means.
    pub fn initial(kind: GammaPrior, p: usize, s: usize, h: &Hyperparameters) -> Self {
        match kind {
            GammaPrior::Hierarchical => SelectionState::Hierarchical {
                omega: vec![h.a_omega / (h.a_omega + h.b_omega); p],
            },
            GammaPrior::Hotspot => SelectionState::Hotspot {
                o: vec![h.a_o / (h.a_o + h.b_o); s],
                pi: vec![1.0; p],
            },
            GammaPrior::Mrf => SelectionState::Mrf,
        }
    }

    /// Prior inclusion probability of `(j, k)`, where one is defined.
    pub fn inclusion_probability(&self, j: usize, k: usize) -> Option<f64> {
        match self {
            SelectionState::Hierarchical { omega } => Some(omega[j]),
            SelectionState::Hotspot { o, pi } => Some((o[k] * pi[j]).min(HOTSPOT_CLAMP)),
            SelectionState::Mrf => None,
        }
    }
}

/// The MRF interaction graph over flattened indicator indices `j + k·p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfGraph {
    edges: Vec<MrfEdge>,
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl MrfGraph {
    /// Normalises edges to `i < j`; repeated edges collapse into one and must
    /// carry the same weight.
    pub fn new(size: usize, edges: &[MrfEdge]) -> Result<Self> {
        let mut seen = std::collections::BTreeMap::new();
        for e in edges {
            let (i, j) = (e.i.min(e.j), e.i.max(e.j));
            if j >= size {
                return Err(Error::OutOfRange {
                    index: j,
                    limit: size,
                });
            }
            if i == j {
                return Err(Error::Config(format!("MRF edge ({i}, {j}) is a self-loop")));
            }
            match seen.insert((i, j), e.weight) {
                Some(w) if w != e.weight => {
                    return Err(Error::Config(format!(
                        "MRF edge ({i}, {j}) listed twice with different weights"
                    )))
                }
                _ => {}
            }
        }
        let mut neighbours = vec![Vec::new(); size];
        let edges: Vec<MrfEdge> = seen
            .into_iter()
            .map(|((i, j), weight)| {
                neighbours[i].push((j, weight));
                neighbours[j].push((i, weight));
                MrfEdge { i, j, weight }
            })
            .collect();
        Ok(Self { edges, neighbours })
    }

    pub fn edges(&self) -> &[MrfEdge] {
        &self.edges
    }

    pub fn neighbours(&self, idx: usize) -> &[(usize, f64)] {
        &self.neighbours[idx]
    }
}

/// Everything needed to evaluate the prior on Γ.
#[derive(Debug, Clone)]
pub struct SelectionPrior {
    pub kind: GammaPrior,
    pub d: f64,
    pub e: f64,
    pub mrf: Option<MrfGraph>,
}

impl SelectionPrior {
    pub fn new(
        kind: GammaPrior,
        h: &Hyperparameters,
        p: usize,
        s: usize,
        edges: Option<&[MrfEdge]>,
    ) -> Result<Self> {
        let mrf = match (kind, edges) {
            (GammaPrior::Mrf, Some(e)) => Some(MrfGraph::new(p * s, e)?),
            (GammaPrior::Mrf, None) => return Err(Error::MissingMrfGraph),
            _ => None,
        };
        Ok(Self {
            kind,
            d: h.mrf_d,
            e: h.mrf_e,
            mrf,
        })
    }
}

fn bernoulli_term(gamma: bool, prob: f64) -> f64 {
    if gamma {
        prob.ln()
    } else {
        (-prob).ln_1p()
    }
}

/// Unnormalised log prior of Γ.
pub fn log_prior_gamma(
    gamma: &Indicators,
    state: &SelectionState,
    prior: &SelectionPrior,
) -> Result<f64> {
    if state.kind() != prior.kind {
        return Err(Error::PriorMismatch);
    }
    let (p, s) = (gamma.p(), gamma.s());
    Ok(match state {
        SelectionState::Hierarchical { .. } | SelectionState::Hotspot { .. } => {
            let mut total = 0.0;
            for k in 0..s {
                for j in 0..p {
                    let prob = state.inclusion_probability(j, k).expect("Bernoulli-type prior");
                    total += bernoulli_term(gamma.get(j, k), prob);
                }
            }
            total
        }
        SelectionState::Mrf => {
            let mrf = prior.mrf.as_ref().ok_or(Error::MissingMrfGraph)?;
            let flat = gamma.as_flat();
            let linear = flat.iter().filter(|&&g| g).count() as f64;
            let quadratic: f64 = mrf
                .edges()
                .iter()
                .filter(|e| flat[e.i] && flat[e.j])
                .map(|e| e.weight)
                .sum();
            prior.d * linear + prior.e * quadratic
        }
    })
}

/// `log_prior_gamma(after) − log_prior_gamma(before)` for flipping `(j, k)`.
pub fn log_prior_gamma_delta(
    gamma: &Indicators,
    state: &SelectionState,
    prior: &SelectionPrior,
    j: usize,
    k: usize,
) -> f64 {
    let on = !gamma.get(j, k);
    let sign = if on { 1.0 } else { -1.0 };
    match state {
        SelectionState::Mrf => {
            let mrf = prior.mrf.as_ref().expect("MRF prior carries its graph");
            let flat = gamma.as_flat();
            let pull: f64 = mrf
                .neighbours(gamma.flat_index(j, k))
                .iter()
                .filter(|(n, _)| flat[*n])
                .map(|(_, w)| w)
                .sum();
            sign * (prior.d + prior.e * pull)
        }
        _ => {
            let prob = state.inclusion_probability(j, k).expect("Bernoulli-type prior");
            sign * (prob.ln() - (-prob).ln_1p())
        }
    }
}

/// Parameters of the conjugate Beta full conditional of `ω_j`.
pub fn omega_posterior(gamma: &Indicators, j: usize, h: &Hyperparameters) -> (f64, f64) {
    let m = gamma.row_count(j) as f64;
    (h.a_omega + m, h.b_omega + gamma.s() as f64 - m)
}

pub fn update_hierarchical_omega<R: Rng + ?Sized>(
    gamma: &Indicators,
    j: usize,
    h: &Hyperparameters,
    rng: &mut R,
) -> f64 {
    let (a, b) = omega_posterior(gamma, j, h);
    sample_beta(rng, a, b).clamp(PROB_FLOOR, 1.0 - f64::EPSILON)
}

/// Random-walk scale tuned towards a 0.44 acceptance rate in batches of 50.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveScale {
    pub scale: f64,
    accepted: u32,
    attempts: u32,
}

impl AdaptiveScale {
    pub const TARGET: f64 = 0.44;
    pub const BATCH: u32 = 50;

    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            accepted: 0,
            attempts: 0,
        }
    }

    pub fn record(&mut self, accepted: bool, adapt: bool) {
        if !adapt {
            return;
        }
        self.attempts += 1;
        self.accepted += accepted as u32;
        if self.attempts == Self::BATCH {
            let rate = self.accepted as f64 / self.attempts as f64;
            self.scale *= (rate - Self::TARGET).exp();
            self.accepted = 0;
            self.attempts = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotspotScales {
    pub o: AdaptiveScale,
    pub pi: AdaptiveScale,
}

impl Default for HotspotScales {
    fn default() -> Self {
        Self {
            o: AdaptiveScale::new(0.5),
            pi: AdaptiveScale::new(0.5),
        }
    }
}

fn column_terms(gamma: &Indicators, o_k: f64, pi: &[f64], k: usize) -> f64 {
    (0..gamma.p())
        .map(|j| bernoulli_term(gamma.get(j, k), (o_k * pi[j]).min(HOTSPOT_CLAMP)))
        .sum()
}

fn row_terms(gamma: &Indicators, o: &[f64], pi_j: f64, j: usize) -> f64 {
    (0..gamma.s())
        .map(|k| bernoulli_term(gamma.get(j, k), (o[k] * pi_j).min(HOTSPOT_CLAMP)))
        .sum()
}

/// Log target of `x = logit(o_k)` (Beta prior times Jacobian, plus column terms).
pub fn hotspot_o_log_target(gamma: &Indicators, pi: &[f64], k: usize, x: f64, h: &Hyperparameters) -> f64 {
    let o = logistic(x);
    h.a_o * o.ln() + h.b_o * (-o).ln_1p() + column_terms(gamma, o, pi, k)
}

/// Log target of `x = log π_j` (Gamma prior times Jacobian, plus row terms).
pub fn hotspot_pi_log_target(gamma: &Indicators, o: &[f64], j: usize, x: f64, h: &Hyperparameters) -> f64 {
    let pi = x.exp();
    h.a_pi * x - h.b_pi * pi + row_terms(gamma, o, pi, j)
}

/// One random-walk MH step for every `o_k` (logit scale) and every `π_j`
/// (log scale). Scales adapt only when `adapt` is set.
pub fn update_hotspot<R: Rng + ?Sized>(
    o: &mut [f64],
    pi: &mut [f64],
    gamma: &Indicators,
    h: &Hyperparameters,
    scales: &mut HotspotScales,
    adapt: bool,
    rng: &mut R,
) {
    for k in 0..o.len() {
        let x = logit(o[k]);
        let x_new = x + scales.o.scale * standard_normal(rng);
        let o_new = logistic(x_new);
        let ok = o_new > 0.0 && o_new < 1.0 && {
            let ratio = hotspot_o_log_target(gamma, pi, k, x_new, h)
                - hotspot_o_log_target(gamma, pi, k, x, h);
            crate::dist::metropolis_accept(rng, ratio)
        };
        if ok {
            o[k] = o_new;
        }
        scales.o.record(ok, adapt);
    }
    for j in 0..pi.len() {
        let x = pi[j].ln();
        let x_new = x + scales.pi.scale * standard_normal(rng);
        let ok = x_new.exp() > 0.0 && x_new.exp().is_finite() && {
            let ratio = hotspot_pi_log_target(gamma, o, j, x_new, h)
                - hotspot_pi_log_target(gamma, o, j, x, h);
            crate::dist::metropolis_accept(rng, ratio)
        };
        if ok {
            pi[j] = x_new.exp();
        }
        scales.pi.record(ok, adapt);
    }
}

fn pair_count(s: usize) -> f64 {
    (s * s.saturating_sub(1) / 2) as f64
}

/// Bernoulli(η) prior on each of the `s(s−1)/2` possible edges.
pub fn log_prior_graph(g: &DecomposableGraph, eta: f64) -> f64 {
    let e = g.edge_count() as f64;
    let pairs = pair_count(g.s());
    let mut out = 0.0;
    if e > 0.0 {
        out += e * eta.ln();
    }
    if pairs - e > 0.0 {
        out += (pairs - e) * (-eta).ln_1p();
    }
    out
}

pub fn eta_posterior(g: &DecomposableGraph, h: &Hyperparameters) -> (f64, f64) {
    let e = g.edge_count() as f64;
    (h.a_eta + e, h.b_eta + pair_count(g.s()) - e)
}

pub fn update_eta<R: Rng + ?Sized>(g: &DecomposableGraph, h: &Hyperparameters, rng: &mut R) -> f64 {
    let (a, b) = eta_posterior(g, h);
    sample_beta(rng, a, b).clamp(PROB_FLOOR, 1.0 - f64::EPSILON)
}

/// Inverse-gamma (shape, scale) full conditional of `w` given the selected
/// coefficients.
pub fn w_posterior(selected: &[f64], h: &Hyperparameters) -> (f64, f64) {
    let ss: f64 = selected.iter().map(|b| b * b).sum();
    (h.a_w + 0.5 * selected.len() as f64, h.b_w + 0.5 * ss)
}

pub fn update_w<R: Rng + ?Sized>(selected: &[f64], h: &Hyperparameters, rng: &mut R) -> f64 {
    let (a, b) = w_posterior(selected, h);
    sample_inv_gamma(rng, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn hyper() -> Hyperparameters {
        Hyperparameters::defaults(4, 3)
    }

    fn mrf_prior(edges: &[(usize, usize)]) -> SelectionPrior {
        let edges: Vec<_> = edges
            .iter()
            .map(|&(i, j)| MrfEdge { i, j, weight: 1.0 })
            .collect();
        SelectionPrior::new(GammaPrior::Mrf, &hyper(), 4, 3, Some(&edges)).unwrap()
    }

    #[test]
    fn mrf_examples() {
        let prior = mrf_prior(&[(0, 1)]);
        let mut g = Indicators::zeros(4, 3);
        assert_eq!(log_prior_gamma(&g, &SelectionState::Mrf, &prior).unwrap(), 0.0);
        g.set(3, 2, true);
        assert_eq!(log_prior_gamma(&g, &SelectionState::Mrf, &prior).unwrap(), -3.0);
        let mut g = Indicators::zeros(4, 3);
        g.set(0, 0, true);
        g.set(1, 0, true);
        let v = log_prior_gamma(&g, &SelectionState::Mrf, &prior).unwrap();
        assert!((v + 5.97).abs() < 1e-12);
        let g0 = Indicators::zeros(4, 3);
        assert_eq!(log_prior_gamma_delta(&g0, &SelectionState::Mrf, &prior, 2, 2), -3.0);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let prior = mrf_prior(&[]);
        let st = SelectionState::initial(GammaPrior::Hotspot, 4, 3, &hyper());
        assert!(matches!(
            log_prior_gamma(&Indicators::zeros(4, 3), &st, &prior),
            Err(Error::PriorMismatch)
        ));
    }

    #[test]
    fn conflicting_duplicate_edges_are_rejected() {
        let e = [
            MrfEdge { i: 0, j: 1, weight: 1.0 },
            MrfEdge { i: 1, j: 0, weight: 2.0 },
        ];
        assert!(MrfGraph::new(4, &e).is_err());
        let e = [
            MrfEdge { i: 0, j: 1, weight: 1.0 },
            MrfEdge { i: 1, j: 0, weight: 1.0 },
        ];
        assert_eq!(MrfGraph::new(4, &e).unwrap().edges().len(), 1);
    }

    #[test]
    fn conjugate_parameters() {
        let h = Hyperparameters {
            a_omega: 1.0,
            b_omega: 1.0,
            ..hyper()
        };
        let g = Indicators::ones(4, 3);
        assert_eq!(omega_posterior(&g, 0, &h), (4.0, 1.0));
        assert_eq!(omega_posterior(&Indicators::zeros(4, 3), 0, &h), (1.0, 4.0));
        assert_eq!(w_posterior(&[], &h), (h.a_w, h.b_w));
        assert_eq!(w_posterior(&[0.0], &h), (h.a_w + 0.5, h.b_w));
        let full = DecomposableGraph::complete(3).unwrap();
        assert_eq!(eta_posterior(&full, &h), (h.a_eta + 3.0, h.b_eta));
    }

    #[test]
    fn graph_prior_examples() {
        let e = DecomposableGraph::empty(3).unwrap();
        assert!((log_prior_graph(&e, 0.5) - 3.0 * 0.5f64.ln()).abs() < 1e-14);
        let c = DecomposableGraph::complete(4).unwrap();
        assert!((log_prior_graph(&c, 0.3) - 6.0 * 0.3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn omega_draws_have_beta_mean() {
        let h = Hyperparameters {
            a_omega: 1.0,
            b_omega: 1.0,
            ..hyper()
        };
        let g = Indicators::ones(4, 3);
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| update_hierarchical_omega(&g, 1, &h, &mut rng)).sum::<f64>() / n as f64;
        // Beta(4,1): mean 0.8, sd ≈ 0.163
        assert!((m - 0.8).abs() < 4.0 * 0.163 / (n as f64).sqrt());
    }

    #[test]
    fn hotspot_clamp_keeps_density_finite() {
        let st = SelectionState::Hotspot {
            o: vec![0.9; 3],
            pi: vec![50.0; 4],
        };
        let prior = SelectionPrior::new(GammaPrior::Hotspot, &hyper(), 4, 3, None).unwrap();
        assert!(st.inclusion_probability(0, 0).unwrap() < 1.0);
        let v = log_prior_gamma(&Indicators::zeros(4, 3), &st, &prior).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn adaptive_scale_moves_towards_target() {
        let mut a = AdaptiveScale::new(1.0);
        for _ in 0..50 {
            a.record(true, true);
        }
        assert!(a.scale > 1.0);
        let before = a.scale;
        for _ in 0..50 {
            a.record(false, false);
        }
        assert_eq!(a.scale, before);
    }
}
