use nalgebra::{DMatrix, DVector};

use crate::dist::{ln_beta_pdf, ln_gamma_pdf, ln_inv_gamma, ln_normal};
use crate::error::{Error, Result};
use crate::graphs::DecomposableGraph;
use crate::likelihoods::{
    sur_log_likelihood, CovarianceState, DesignCache, ResidualStructure,
};
use crate::linalg::select;
use crate::model::{
    CovariancePrior, Dataset, Hyperparameters, Indicators, ModelSpec, ValidatedSpec,
};
use crate::priors::{log_prior_gamma, log_prior_graph, SelectionPrior, SelectionState};

/// Read-only data shared by every chain of a run.
#[derive(Debug, Clone)]
pub struct SamplerContext {
    pub cache: DesignCache,
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub prior: SelectionPrior,
}

impl SamplerContext {
    pub fn new(spec: &ValidatedSpec, data: &Dataset) -> Result<Self> {
        let prior = SelectionPrior::new(
            spec.spec.gamma_prior,
            &spec.hyper,
            data.p(),
            data.s(),
            spec.spec.mrf_edges.as_deref(),
        )?;
        Ok(Self {
            cache: DesignCache::new(data),
            spec: spec.spec.clone(),
            hyper: spec.hyper,
            prior,
        })
    }

    pub fn p(&self) -> usize {
        self.cache.p
    }

    pub fn s(&self) -> usize {
        self.cache.s()
    }

    pub fn is_hrr(&self) -> bool {
        self.spec.covariance_prior == CovariancePrior::Ig
    }

    /// Replaces the responses, keeping the design (used by simulation-based
    /// tests that regenerate data around a fixed chain).
    pub fn set_responses(&mut self, y: DMatrix<f64>) {
        self.cache.dty = self.cache.design.transpose() * &y;
        self.cache.yty = y.column_iter().map(|c| c.dot(&c)).collect();
        self.cache.y = y;
    }
}

/// Covariance-side state: per-response variances for HRR, or the residual
/// regression parameters for the SUR variants.
#[derive(Debug, Clone)]
pub enum CovarianceModel {
    Hrr {
        /// Conditional draws of the residual variances, refreshed when
        /// recording.
        sigma2: Vec<f64>,
        /// Cached per-response log marginal likelihoods.
        log_marginals: Vec<f64>,
    },
    Sur {
        cov: CovarianceState,
        structure: ResidualStructure,
        graph: Option<DecomposableGraph>,
        eta: Option<f64>,
    },
}

/// One chain's full parameter state. Coefficients are stored for the full
/// design `[X0, X]`, so `beta` has `p0 + p` rows.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub gamma: Indicators,
    pub selection: SelectionState,
    pub beta: DMatrix<f64>,
    pub w: f64,
    pub covariance: CovarianceModel,
    /// `Y − D B` (SUR variants only; empty for HRR).
    pub residuals: DMatrix<f64>,
    /// Untempered log likelihood: the Γ-marginal for HRR, the conditional
    /// likelihood for SUR.
    pub log_likelihood: f64,
}

pub(crate) fn initial_w(h: &Hyperparameters) -> f64 {
    if h.a_w > 1.0 {
        h.b_w / (h.a_w - 1.0)
    } else {
        h.b_w / (h.a_w + 1.0)
    }
}

impl ChainState {
    /// A state with the given indicators and every other parameter at its
    /// starting value.
    pub fn new(ctx: &SamplerContext, gamma: Indicators) -> Result<Self> {
        let h = &ctx.hyper;
        let (p, s) = (ctx.p(), ctx.s());
        if gamma.p() != p || gamma.s() != s {
            return Err(Error::Dimension("initial Γ has the wrong shape".into()));
        }
        let selection = SelectionState::initial(ctx.spec.gamma_prior, p, s, h);
        let beta = DMatrix::zeros(ctx.cache.p0 + p, s);
        let w = initial_w(h);
        let tau = h.a_tau / h.b_tau;
        let (covariance, residuals) = match ctx.spec.covariance_prior {
            CovariancePrior::Ig => (
                CovarianceModel::Hrr {
                    sigma2: vec![1.0; s],
                    log_marginals: vec![0.0; s],
                },
                DMatrix::zeros(0, 0),
            ),
            CovariancePrior::Iw => {
                let structure = ResidualStructure::dense(s, h.nu);
                (
                    CovarianceModel::Sur {
                        cov: CovarianceState::initial(&structure, tau),
                        structure,
                        graph: None,
                        eta: None,
                    },
                    ctx.cache.y.clone(),
                )
            }
            CovariancePrior::Hiw => {
                let graph = DecomposableGraph::empty(s)?;
                let structure = ResidualStructure::sparse(&graph, h.nu);
                (
                    CovarianceModel::Sur {
                        cov: CovarianceState::initial(&structure, tau),
                        structure,
                        graph: Some(graph),
                        eta: Some(h.a_eta / (h.a_eta + h.b_eta)),
                    },
                    ctx.cache.y.clone(),
                )
            }
        };
        let mut state = Self {
            gamma,
            selection,
            beta,
            w,
            covariance,
            residuals,
            log_likelihood: 0.0,
        };
        state.refresh(ctx)?;
        Ok(state)
    }

    pub fn graph(&self) -> Option<&DecomposableGraph> {
        match &self.covariance {
            CovarianceModel::Sur { graph, .. } => graph.as_ref(),
            CovarianceModel::Hrr { .. } => None,
        }
    }

    /// Recomputes residuals, cached marginals and the log likelihood from
    /// the primary parameters.
    pub fn refresh(&mut self, ctx: &SamplerContext) -> Result<()> {
        let h = &ctx.hyper;
        match &mut self.covariance {
            CovarianceModel::Hrr { log_marginals, .. } => {
                for (k, m) in log_marginals.iter_mut().enumerate() {
                    let active = ctx.cache.active(&self.gamma, k);
                    *m = ctx
                        .cache
                        .hrr_posterior(&active, k, self.w, h.a_sigma, h.b_sigma)?
                        .log_marginal;
                }
                self.log_likelihood = log_marginals.iter().sum();
            }
            CovarianceModel::Sur { cov, structure, .. } => {
                self.residuals = &ctx.cache.y - &ctx.cache.design * &self.beta;
                self.log_likelihood = sur_log_likelihood(&self.residuals, cov, structure)?;
            }
        }
        Ok(())
    }

    /// Recomputes the log likelihood without touching the caches.
    pub fn recompute_log_likelihood(&self, ctx: &SamplerContext) -> Result<f64> {
        let mut copy = self.clone();
        copy.refresh(ctx)?;
        Ok(copy.log_likelihood)
    }

    /// Number of selected predictors.
    pub fn model_size(&self) -> usize {
        self.gamma.count()
    }

    /// `log p(B | Γ, w)` for the explicit coefficients of the SUR variants.
    pub fn log_prior_beta(&self, ctx: &SamplerContext) -> f64 {
        let mut total = 0.0;
        for k in 0..ctx.s() {
            for a in ctx.cache.active(&self.gamma, k) {
                total += ln_normal(self.beta[(a, k)], 0.0, self.w);
            }
        }
        total
    }

    /// The terms of the tempered target that depend on `(Γ, B)`:
    /// `λ·log L + log p(Γ) + log p(B | Γ, w)`.
    pub fn coefficient_log_target(&self, ctx: &SamplerContext, lambda: f64) -> Result<f64> {
        let mut total = lambda * self.log_likelihood
            + log_prior_gamma(&self.gamma, &self.selection, &ctx.prior)?;
        if !ctx.is_hrr() {
            total += self.log_prior_beta(ctx);
        }
        Ok(total)
    }

    /// Untempered log joint density (up to constants of the Γ prior).
    pub fn log_posterior(&self, ctx: &SamplerContext) -> Result<f64> {
        let h = &ctx.hyper;
        let mut total = self.coefficient_log_target(ctx, 1.0)?;
        total += ln_inv_gamma(self.w, h.a_w, h.b_w);
        total += match &self.selection {
            SelectionState::Hierarchical { omega } => omega
                .iter()
                .map(|&o| ln_beta_pdf(o, h.a_omega, h.b_omega))
                .sum(),
            SelectionState::Hotspot { o, pi } => {
                o.iter().map(|&v| ln_beta_pdf(v, h.a_o, h.b_o)).sum::<f64>()
                    + pi.iter().map(|&v| ln_gamma_pdf(v, h.a_pi, h.b_pi)).sum::<f64>()
            }
            SelectionState::Mrf => 0.0,
        };
        if let CovarianceModel::Sur {
            cov,
            structure,
            graph,
            eta,
        } = &self.covariance
        {
            total += ln_gamma_pdf(cov.tau, h.a_tau, h.b_tau);
            for k in 0..structure.s() {
                total += ln_inv_gamma(cov.sigma2[k], structure.shape(k), 0.5 * cov.tau);
                for &r in &cov.rho[k] {
                    total += ln_normal(r, 0.0, cov.sigma2[k] / cov.tau);
                }
            }
            if let (Some(g), Some(e)) = (graph, eta) {
                total += log_prior_graph(g, *e) + ln_beta_pdf(*e, h.a_eta, h.b_eta);
            }
        }
        Ok(total)
    }

    /// Coefficients of the selectable predictors (p×s).
    pub fn beta_x(&self, p0: usize) -> DMatrix<f64> {
        self.beta.rows(p0, self.beta.nrows() - p0).into_owned()
    }
}

/// `Γ` from univariate screening: `γ_jk = 1` when the slope t-test of `y_k`
/// on `x_j` (with intercept) has p-value below `0.05/(p·s)`.
pub fn mle_screen(data: &Dataset) -> Indicators {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let (n, p, s) = (data.n(), data.p(), data.s());
    let threshold = 0.05 / (p * s) as f64;
    if n < 3 {
        return Indicators::zeros(p, s);
    }
    let dist = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("n > 2");
    Indicators::from_fn(p, s, |j, k| {
        let x = data.x().column(j);
        let y = data.y().column(k);
        let nf = n as f64;
        let (mx, my) = (x.sum() / nf, y.sum() / nf);
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - mx) * (b - my)).sum();
        let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        if sxx <= 0.0 || syy <= 0.0 {
            return false;
        }
        let slope = sxy / sxx;
        let rss = (syy - slope * sxy).max(0.0);
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        if se == 0.0 {
            return true;
        }
        let t = (slope / se).abs();
        2.0 * (1.0 - dist.cdf(t)) < threshold
    })
}

/// The selected design columns and coefficients of response `k`.
pub(crate) fn active_design(cache: &DesignCache, active: &[usize]) -> DMatrix<f64> {
    let rows: Vec<usize> = (0..cache.n()).collect();
    select(&cache.design, &rows, active)
}

pub(crate) fn write_column(beta: &mut DMatrix<f64>, k: usize, active: &[usize], values: &DVector<f64>) {
    beta.column_mut(k).fill(0.0);
    for (i, &a) in active.iter().enumerate() {
        beta[(a, k)] = values[i];
    }
}
