use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::state::{active_design, write_column, ChainState, CovarianceModel, SamplerContext};
use crate::dist::{ln_inv_gamma, metropolis_accept, sample_beta, standard_normal};
use crate::error::Result;
use crate::graphs::propose_edge_flip;
use crate::likelihoods::{
    collapsed_residual_score, gather, hrr_sample_beta, innovation, sur_log_likelihood,
    update_sigma_rho, update_tau, CoefficientConditional, ResidualStructure,
};
use crate::linalg::select;
use crate::model::{GammaSampler, Indicators};
use crate::priors::{
    log_prior_gamma_delta, log_prior_graph, update_eta, update_hierarchical_omega, update_hotspot,
    update_w, AdaptiveScale, HotspotScales, SelectionState,
};
use crate::rng::RngStream;

/// A proposed change to one column of Γ.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnProposal {
    /// Rows to flip.
    pub flips: Vec<usize>,
    /// `log q(γ | γ′) − log q(γ′ | γ)`.
    pub log_proposal_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mc3Move {
    Add,
    Delete,
    Swap,
}

fn mc3_menu(selected: usize, p: usize) -> Vec<Mc3Move> {
    let mut menu = Vec::with_capacity(3);
    if selected < p {
        menu.push(Mc3Move::Add);
    }
    if selected > 0 {
        menu.push(Mc3Move::Delete);
    }
    if selected > 0 && selected < p {
        menu.push(Mc3Move::Swap);
    }
    menu
}

/// Add, delete or swap within one column, chosen uniformly from the moves
/// available; the menu-size asymmetry enters the proposal ratio.
pub fn propose_mc3<R: Rng + ?Sized>(column: &[bool], rng: &mut R) -> Option<ColumnProposal> {
    let p = column.len();
    let on: Vec<usize> = (0..p).filter(|&j| column[j]).collect();
    let off: Vec<usize> = (0..p).filter(|&j| !column[j]).collect();
    let c = on.len();
    let menu = mc3_menu(c, p);
    if menu.is_empty() {
        return None;
    }
    let m = menu.len() as f64;
    Some(match menu[rng.random_range(0..menu.len())] {
        Mc3Move::Add => {
            let j = off[rng.random_range(0..off.len())];
            let m_back = mc3_menu(c + 1, p).len() as f64;
            ColumnProposal {
                flips: vec![j],
                log_proposal_ratio: (m * (p - c) as f64).ln() - (m_back * (c + 1) as f64).ln(),
            }
        }
        Mc3Move::Delete => {
            let j = on[rng.random_range(0..on.len())];
            let m_back = mc3_menu(c - 1, p).len() as f64;
            ColumnProposal {
                flips: vec![j],
                log_proposal_ratio: (m * c as f64).ln() - (m_back * (p - c + 1) as f64).ln(),
            }
        }
        Mc3Move::Swap => {
            let a = on[rng.random_range(0..on.len())];
            let b = off[rng.random_range(0..off.len())];
            ColumnProposal {
                flips: vec![a, b],
                log_proposal_ratio: 0.0,
            }
        }
    })
}

/// Thompson-sampling flip proposals with Beta(0.5, 0.5) pseudo-counts of
/// historical acceptance per indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditStats {
    p: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BanditStats {
    pub fn new(p: usize, s: usize) -> Self {
        Self {
            p,
            alpha: vec![0.5; p * s],
            beta: vec![0.5; p * s],
        }
    }

    pub fn counts(&self, j: usize, k: usize) -> (f64, f64) {
        let i = j + k * self.p;
        (self.alpha[i], self.beta[i])
    }

    pub fn record(&mut self, j: usize, k: usize, accepted: bool) {
        let i = j + k * self.p;
        if accepted {
            self.alpha[i] += 1.0;
        } else {
            self.beta[i] += 1.0;
        }
    }

    /// Draws `θ_j` for every row of column `k` and flips row `j` with
    /// probability `θ_j / Σθ`. The reverse move uses the same draws, so the
    /// proposal is symmetric.
    pub fn propose<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> ColumnProposal {
        let theta: Vec<f64> = (0..self.p)
            .map(|j| {
                let (a, b) = self.counts(j, k);
                sample_beta(rng, a, b).max(f64::MIN_POSITIVE)
            })
            .collect();
        let total: f64 = theta.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = self.p - 1;
        for (j, &t) in theta.iter().enumerate() {
            if u < t {
                pick = j;
                break;
            }
            u -= t;
        }
        ColumnProposal {
            flips: vec![pick],
            log_proposal_ratio: 0.0,
        }
    }
}

/// Per-slot tuning that stays with a chain position when states are
/// exchanged.
#[derive(Debug, Clone)]
pub struct Tuning {
    pub bandit: Option<BanditStats>,
    pub hotspot: HotspotScales,
    pub tau: AdaptiveScale,
    pub w: AdaptiveScale,
}

impl Tuning {
    pub fn new(sampler: GammaSampler, p: usize, s: usize) -> Self {
        Self {
            bandit: (sampler == GammaSampler::Bandit).then(|| BanditStats::new(p, s)),
            hotspot: HotspotScales::default(),
            tau: AdaptiveScale::new(0.5),
            w: AdaptiveScale::new(0.5),
        }
    }
}

/// Counters of accepted moves, kept per chain slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub gamma_attempts: u64,
    pub gamma_accepts: u64,
    pub graph_attempts: u64,
    pub graph_accepts: u64,
}

/// One tempered chain: its state plus the slot-bound temperature, random
/// stream and tuning.
#[derive(Debug, Clone)]
pub struct Chain {
    pub state: ChainState,
    pub temperature: f64,
    pub rng: RngStream,
    pub tuning: Tuning,
    pub stats: MoveStats,
}

fn propose_column(chain: &mut Chain, k: usize) -> Option<ColumnProposal> {
    match &chain.tuning.bandit {
        Some(b) => Some(b.propose(k, &mut chain.rng)),
        None => propose_mc3(chain.state.gamma.column(k), &mut chain.rng),
    }
}

fn prior_delta(ctx: &SamplerContext, gamma: &Indicators, state: &SelectionState, k: usize, flips: &[usize]) -> (f64, Indicators) {
    let mut g = gamma.clone();
    let mut delta = 0.0;
    for &j in flips {
        delta += log_prior_gamma_delta(&g, state, &ctx.prior, j, k);
        g.flip(j, k);
    }
    (delta, g)
}

fn finish_gamma_move(chain: &mut Chain, k: usize, flips: &[usize], accepted: bool, adapt: bool) {
    chain.stats.gamma_attempts += 1;
    chain.stats.gamma_accepts += accepted as u64;
    if adapt {
        if let Some(b) = &mut chain.tuning.bandit {
            for &j in flips {
                b.record(j, k, accepted);
            }
        }
    }
}

/// Runs one full sweep of `chain`. `adapt` enables burn-in tuning.
pub fn sweep(chain: &mut Chain, ctx: &SamplerContext, adapt: bool) -> Result<()> {
    if ctx.is_hrr() {
        sweep_hrr(chain, ctx, adapt)
    } else {
        sweep_sur(chain, ctx, adapt)
    }
}

fn update_selection_params(chain: &mut Chain, ctx: &SamplerContext, adapt: bool) {
    let h = &ctx.hyper;
    let gamma = &chain.state.gamma;
    match &mut chain.state.selection {
        SelectionState::Hierarchical { omega } => {
            for (j, o) in omega.iter_mut().enumerate() {
                *o = update_hierarchical_omega(gamma, j, h, &mut chain.rng);
            }
        }
        SelectionState::Hotspot { o, pi } => {
            update_hotspot(o, pi, gamma, h, &mut chain.tuning.hotspot, adapt, &mut chain.rng);
        }
        SelectionState::Mrf => {}
    }
}

fn sweep_hrr(chain: &mut Chain, ctx: &SamplerContext, adapt: bool) -> Result<()> {
    let h = ctx.hyper;
    let lambda = 1.0 / chain.temperature;
    for k in 0..ctx.s() {
        let Some(proposal) = propose_column(chain, k) else {
            continue;
        };
        let st = &chain.state;
        let (delta, g_new) = prior_delta(ctx, &st.gamma, &st.selection, k, &proposal.flips);
        let active = ctx.cache.active(&g_new, k);
        let post = ctx.cache.hrr_posterior(&active, k, st.w, h.a_sigma, h.b_sigma)?;
        let CovarianceModel::Hrr { log_marginals, .. } = &st.covariance else {
            unreachable!("HRR sweep on a SUR state")
        };
        let log_ratio = lambda * (post.log_marginal - log_marginals[k]) + delta + proposal.log_proposal_ratio;
        let accepted = metropolis_accept(&mut chain.rng, log_ratio);
        if accepted {
            chain.state.gamma = g_new;
            if let CovarianceModel::Hrr { log_marginals, .. } = &mut chain.state.covariance {
                log_marginals[k] = post.log_marginal;
            }
        }
        finish_gamma_move(chain, k, &proposal.flips, accepted, adapt);
    }
    update_selection_params(chain, ctx, adapt);

    // w: random walk on log w against the product of marginals.
    let st = &chain.state;
    let x = st.w.ln();
    let x_new = x + chain.tuning.w.scale * standard_normal(&mut chain.rng);
    let w_new = x_new.exp();
    let mut accepted = false;
    if w_new > 0.0 && w_new.is_finite() {
        let mut fresh = Vec::with_capacity(ctx.s());
        for k in 0..ctx.s() {
            let active = ctx.cache.active(&st.gamma, k);
            fresh.push(ctx.cache.hrr_posterior(&active, k, w_new, h.a_sigma, h.b_sigma)?.log_marginal);
        }
        let old: f64 = st.log_likelihood_hrr();
        let new: f64 = fresh.iter().sum();
        let log_ratio = lambda * (new - old) + ln_inv_gamma(w_new, h.a_w, h.b_w) + x_new
            - ln_inv_gamma(st.w, h.a_w, h.b_w)
            - x;
        accepted = metropolis_accept(&mut chain.rng, log_ratio);
        if accepted {
            chain.state.w = w_new;
            if let CovarianceModel::Hrr { log_marginals, .. } = &mut chain.state.covariance {
                *log_marginals = fresh;
            }
        }
    }
    chain.tuning.w.record(accepted, adapt);
    chain.state.log_likelihood = chain.state.log_likelihood_hrr();
    Ok(())
}

impl ChainState {
    fn log_likelihood_hrr(&self) -> f64 {
        match &self.covariance {
            CovarianceModel::Hrr { log_marginals, .. } => log_marginals.iter().sum(),
            CovarianceModel::Sur { .. } => self.log_likelihood,
        }
    }
}

/// Draws HRR coefficients and residual variances from their posterior given
/// Γ and w (data weight 1); used when recording the main chain.
pub fn refresh_hrr_coefficients(chain: &mut Chain, ctx: &SamplerContext) -> Result<()> {
    let h = ctx.hyper;
    for k in 0..ctx.s() {
        let active = ctx.cache.active(&chain.state.gamma, k);
        let post = ctx.cache.hrr_posterior(&active, k, chain.state.w, h.a_sigma, h.b_sigma)?;
        let (b, s2) = hrr_sample_beta(&post, &mut chain.rng);
        write_column(&mut chain.state.beta, k, &active, &b);
        if let CovarianceModel::Hrr { sigma2, .. } = &mut chain.state.covariance {
            sigma2[k] = s2;
        }
    }
    Ok(())
}

/// The Gaussian pieces of `β_k`'s full conditional: weight `c` and working
/// response `z` such that the log likelihood in `β_k` is
/// `−(λc/2)‖z − Dβ_k‖²` up to constants.
fn coefficient_target(state: &ChainState, ctx: &SamplerContext, k: usize) -> (f64, DVector<f64>) {
    let CovarianceModel::Sur { cov, structure, .. } = &state.covariance else {
        unreachable!("SUR move on an HRR state")
    };
    let u = &state.residuals;
    let fitted_k = ctx.cache.y.column(k) - u.column(k);
    let r_k = innovation(u, cov, structure, k) + &fitted_k;
    let mut c = 1.0 / cov.sigma2[k];
    let mut num = r_k / cov.sigma2[k];
    for &(m, pos) in structure.children(k) {
        let rho = cov.rho[m][pos];
        let s_m = innovation(u, cov, structure, m) - &fitted_k * rho;
        c += rho * rho / cov.sigma2[m];
        num.axpy(-rho / cov.sigma2[m], &s_m, 1.0);
    }
    (c, num / c)
}

fn conditional_for(ctx: &SamplerContext, active: &[usize], dtz: &DVector<f64>, weight: f64, w: f64) -> Result<CoefficientConditional> {
    CoefficientConditional::new(&select(&ctx.cache.gram, active, active), &gather(dtz, active), weight, w)
}

fn sweep_sur(chain: &mut Chain, ctx: &SamplerContext, adapt: bool) -> Result<()> {
    let h = ctx.hyper;
    let lambda = 1.0 / chain.temperature;
    for k in 0..ctx.s() {
        let (c, z) = coefficient_target(&chain.state, ctx, k);
        let dtz = ctx.cache.design.transpose() * &z;
        let weight = lambda * c;
        let w = chain.state.w;
        let mut current = conditional_for(ctx, &ctx.cache.active(&chain.state.gamma, k), &dtz, weight, w)?;
        if let Some(proposal) = propose_column(chain, k) {
            let st = &chain.state;
            let (delta, g_new) = prior_delta(ctx, &st.gamma, &st.selection, k, &proposal.flips);
            let candidate = conditional_for(ctx, &ctx.cache.active(&g_new, k), &dtz, weight, w)?;
            let log_ratio = candidate.log_score - current.log_score + delta + proposal.log_proposal_ratio;
            let accepted = metropolis_accept(&mut chain.rng, log_ratio);
            if accepted {
                chain.state.gamma = g_new;
                current = candidate;
            }
            finish_gamma_move(chain, k, &proposal.flips, accepted, adapt);
        }
        let active = ctx.cache.active(&chain.state.gamma, k);
        let b = current.sample(&mut chain.rng);
        write_column(&mut chain.state.beta, k, &active, &b);
        let fitted = active_design(&ctx.cache, &active) * &b;
        let new_u = ctx.cache.y.column(k) - fitted;
        chain.state.residuals.column_mut(k).copy_from(&new_u);
    }

    let st = &mut chain.state;
    let CovarianceModel::Sur {
        cov,
        structure,
        graph,
        eta,
    } = &mut st.covariance
    else {
        unreachable!("SUR sweep on an HRR state")
    };
    update_sigma_rho(&st.residuals, structure, cov, lambda, &mut chain.rng)?;

    if let (Some(g), Some(e)) = (graph.as_mut(), eta.as_mut()) {
        let flip = propose_edge_flip(g, &mut chain.rng);
        if flip.edge.is_some() {
            let proposed = ResidualStructure::sparse(&flip.graph, h.nu);
            let old = collapsed_residual_score(&st.residuals, structure, cov.tau, lambda)? + log_prior_graph(g, *e);
            let new = collapsed_residual_score(&st.residuals, &proposed, cov.tau, lambda)?
                + log_prior_graph(&flip.graph, *e);
            let accepted = metropolis_accept(&mut chain.rng, new - old + flip.log_ratio);
            chain.stats.graph_attempts += 1;
            if accepted {
                chain.stats.graph_accepts += 1;
                *g = flip.graph;
                *structure = proposed;
                *cov = crate::likelihoods::CovarianceState::initial(structure, cov.tau);
                update_sigma_rho(&st.residuals, structure, cov, lambda, &mut chain.rng)?;
            }
        }
    }

    update_tau(cov, structure, &h, &mut chain.tuning.tau, adapt, &mut chain.rng);

    if let (Some(g), Some(e)) = (graph.as_ref(), eta.as_mut()) {
        *e = update_eta(g, &h, &mut chain.rng);
    }

    update_selection_params(chain, ctx, adapt);

    let st = &mut chain.state;
    let mut selected = Vec::new();
    for k in 0..ctx.s() {
        for a in ctx.cache.active(&st.gamma, k) {
            selected.push(st.beta[(a, k)]);
        }
    }
    st.w = update_w(&selected, &h, &mut chain.rng);

    let CovarianceModel::Sur { cov, structure, .. } = &st.covariance else {
        unreachable!()
    };
    st.log_likelihood = sur_log_likelihood(&st.residuals, cov, structure)?;
    Ok(())
}

/// Fitted values `D B` for a state.
pub fn fitted_values(state: &ChainState, ctx: &SamplerContext) -> DMatrix<f64> {
    &ctx.cache.design * &state.beta
}
