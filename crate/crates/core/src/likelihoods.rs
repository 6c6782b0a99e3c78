//! Conjugate algebra for both likelihood families.
//!
//! HRR integrates coefficients and variances out analytically
//! (Normal-Inverse-Gamma). The SUR variants write each response's residual
//! as a regression on the residuals of its parents in a fixed node order,
//! `u_k = Σ_l ρ_kl u_l + ε_k` with `ε_k ~ N(0, σ_k² I)`, which factorises the
//! likelihood over responses.
//!
//! Every conjugate update takes a data weight `λ = 1/t` so the same code
//! serves tempered chains.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::dist::{ln_gamma_pdf, ln_inv_gamma, ln_normal, sample_inv_gamma, standard_normal, LN_2PI};
use crate::error::{Error, Result};
use crate::graphs::DecomposableGraph;
use crate::linalg::{cholesky, log_det, select, select_vec};
use crate::model::{Dataset, Hyperparameters, Indicators};
use crate::priors::AdaptiveScale;

/// Normal-Inverse-Gamma posterior of `(β, σ²)` with prior
/// `β | σ² ~ N(0, σ²/prec · I)`, `σ² ~ IG(a, b)`.
#[derive(Debug, Clone)]
pub struct NigPosterior {
    pub mu_star: DVector<f64>,
    pub a_star: f64,
    pub b_star: f64,
    /// Log marginal density of the (weighted) data.
    pub log_marginal: f64,
    chol: Cholesky<f64, Dyn>,
}

impl NigPosterior {
    /// `V* = P⁻¹`, the posterior coefficient-covariance scale.
    pub fn v_star(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn dim(&self) -> usize {
        self.mu_star.len()
    }

    /// `X_i V* X_iᵀ` for a row of the selected design.
    pub fn quadratic_form(&self, row: &DVector<f64>) -> f64 {
        if row.is_empty() {
            return 0.0;
        }
        let l = self.chol.l();
        let v = l
            .solve_lower_triangular(row)
            .expect("triangular factor has a positive diagonal");
        v.norm_squared()
    }
}

/// NIG update from sufficient statistics `ZᵀZ`, `Zᵀy`, `yᵀy` and `n`.
#[allow(clippy::too_many_arguments)]
pub fn nig_from_moments(
    gram: &DMatrix<f64>,
    zty: &DVector<f64>,
    yty: f64,
    n: usize,
    prec: f64,
    a: f64,
    b: f64,
    lambda: f64,
) -> Result<NigPosterior> {
    let q = zty.len();
    let mut pm = gram * lambda;
    for i in 0..q {
        pm[(i, i)] += prec;
    }
    let chol = cholesky(&pm)?;
    let h = zty * lambda;
    let mu_star = chol.solve(&h);
    let quad = mu_star.dot(&h);
    let half_n = 0.5 * lambda * n as f64;
    let a_star = a + half_n;
    let b_star = (b + 0.5 * (lambda * yty - quad)).max(b * f64::EPSILON);
    let log_marginal = -half_n * LN_2PI - 0.5 * log_det(&chol)
        + 0.5 * q as f64 * prec.ln()
        + a * b.ln()
        - a_star * b_star.ln()
        + ln_gamma(a_star)
        - ln_gamma(a);
    if !log_marginal.is_finite() {
        return Err(Error::Numeric("non-finite NIG marginal likelihood".into()));
    }
    Ok(NigPosterior {
        mu_star,
        a_star,
        b_star,
        log_marginal,
        chol,
    })
}

/// Posterior of `(β, σ²)` for `y = X_γ β + e` under the slab prior
/// `β | σ² ~ N(0, σ² w I)` and `σ² ~ IG(a_sigma, b_sigma)`.
pub fn nig_posterior(
    y: &DVector<f64>,
    xg: &DMatrix<f64>,
    w: f64,
    a_sigma: f64,
    b_sigma: f64,
) -> Result<NigPosterior> {
    if xg.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows but y has {}",
            xg.nrows(),
            y.len()
        )));
    }
    let gram = xg.transpose() * xg;
    let zty = xg.transpose() * y;
    nig_from_moments(&gram, &zty, y.dot(y), y.len(), 1.0 / w, a_sigma, b_sigma, 1.0)
}

pub fn hrr_log_marginal(
    y: &DVector<f64>,
    xg: &DMatrix<f64>,
    w: f64,
    a_sigma: f64,
    b_sigma: f64,
) -> Result<f64> {
    Ok(nig_posterior(y, xg, w, a_sigma, b_sigma)?.log_marginal)
}

/// `σ² ~ IG(a*, b*)`, then `β | σ² ~ N(μ*, σ² V*)`.
pub fn hrr_sample_beta<R: Rng + ?Sized>(post: &NigPosterior, rng: &mut R) -> (DVector<f64>, f64) {
    let sigma2 = sample_inv_gamma(rng, post.a_star, post.b_star);
    let q = post.dim();
    if q == 0 {
        return (DVector::zeros(0), sigma2);
    }
    let z = DVector::from_fn(q, |_, _| standard_normal(rng));
    let noise = post
        .chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .expect("triangular factor has a positive diagonal");
    (&post.mu_star + noise * sigma2.sqrt(), sigma2)
}

/// Cross-products of the full design `D = [X0, X]` reused by every chain.
#[derive(Debug, Clone)]
pub struct DesignCache {
    pub design: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub dty: DMatrix<f64>,
    pub yty: Vec<f64>,
    pub p0: usize,
    pub p: usize,
}

impl DesignCache {
    pub fn new(data: &Dataset) -> Self {
        let design = data.full_design();
        let gram = design.transpose() * &design;
        let dty = design.transpose() * data.y();
        let yty = data.y().column_iter().map(|c| c.dot(&c)).collect();
        Self {
            design,
            y: data.y().clone(),
            gram,
            dty,
            yty,
            p0: data.p0(),
            p: data.p(),
        }
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn s(&self) -> usize {
        self.y.ncols()
    }

    /// Design columns in play for response `k`: all of `X0`, then the
    /// selected columns of `X`.
    pub fn active(&self, gamma: &Indicators, k: usize) -> Vec<usize> {
        let mut a: Vec<usize> = (0..self.p0).collect();
        a.extend(gamma.selected(k).into_iter().map(|j| j + self.p0));
        a
    }

    /// HRR posterior for response `k` given its active set.
    pub fn hrr_posterior(
        &self,
        active: &[usize],
        k: usize,
        w: f64,
        a_sigma: f64,
        b_sigma: f64,
    ) -> Result<NigPosterior> {
        let gram = select(&self.gram, active, active);
        let zty = DVector::from_fn(active.len(), |i, _| self.dty[(active[i], k)]);
        nig_from_moments(&gram, &zty, self.yty[k], self.n(), 1.0 / w, a_sigma, b_sigma, 1.0)
    }
}

/// Gaussian full conditional of one response's active coefficients,
/// `N(P⁻¹h, P⁻¹)` with `P = weight·DᵀD + I/w` and `h = weight·Dᵀz`.
#[derive(Debug, Clone)]
pub struct CoefficientConditional {
    pub mean: DVector<f64>,
    /// `½hᵀP⁻¹h − ½log|P| − (q/2)log w`: the coefficient-integrated
    /// log likelihood up to terms that do not depend on the active set.
    pub log_score: f64,
    chol: Cholesky<f64, Dyn>,
}

impl CoefficientConditional {
    pub fn new(gram_a: &DMatrix<f64>, dtz_a: &DVector<f64>, weight: f64, w: f64) -> Result<Self> {
        let q = dtz_a.len();
        let mut pm = gram_a * weight;
        for i in 0..q {
            pm[(i, i)] += 1.0 / w;
        }
        let chol = cholesky(&pm)?;
        let h = dtz_a * weight;
        let mean = chol.solve(&h);
        let log_score = 0.5 * mean.dot(&h) - 0.5 * log_det(&chol) - 0.5 * q as f64 * w.ln();
        Ok(Self {
            mean,
            log_score,
            chol,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let q = self.mean.len();
        if q == 0 {
            return DVector::zeros(0);
        }
        let z = DVector::from_fn(q, |_, _| standard_normal(rng));
        let noise = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular factor has a positive diagonal");
        &self.mean + noise
    }
}

/// Node order, parent sets and inverse-gamma prior shapes of the residual
/// regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStructure {
    order: Vec<usize>,
    parents: Vec<Vec<usize>>,
    shapes: Vec<f64>,
    children: Vec<Vec<(usize, usize)>>,
    sparse: bool,
}

impl ResidualStructure {
    fn build(order: Vec<usize>, parents: Vec<Vec<usize>>, shapes: Vec<f64>, sparse: bool) -> Self {
        let s = order.len();
        let mut children = vec![Vec::new(); s];
        for m in 0..s {
            for (pos, &k) in parents[m].iter().enumerate() {
                children[k].push((m, pos));
            }
        }
        Self {
            order,
            parents,
            shapes,
            children,
            sparse,
        }
    }

    /// Inverse-Wishart factorisation: response `k` (1-based position) regresses
    /// on all earlier responses, with σ² shape `(ν − s + 2k − 1)/2`.
    pub fn dense(s: usize, nu: f64) -> Self {
        let order: Vec<usize> = (0..s).collect();
        let parents = (0..s).map(|k| (0..k).collect()).collect();
        let shapes = (0..s)
            .map(|k| 0.5 * (nu - s as f64 + 2.0 * (k + 1) as f64 - 1.0))
            .collect();
        Self::build(order, parents, shapes, false)
    }

    /// Hyper-inverse-Wishart factorisation over a decomposable graph: node at
    /// position `t` of residual `R_q` has σ² shape `(ν − s + t + |S_q|)/2`.
    pub fn sparse(graph: &DecomposableGraph, nu: f64) -> Self {
        let s = graph.s();
        let parents = (0..s).map(|v| graph.parents(v).to_vec()).collect();
        let shapes = (0..s)
            .map(|v| {
                let pos = graph.position(v);
                0.5 * (nu - s as f64 + pos.t as f64 + pos.separator_size as f64)
            })
            .collect();
        Self::build(graph.order().to_vec(), parents, shapes, true)
    }

    pub fn s(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parents(&self, k: usize) -> &[usize] {
        &self.parents[k]
    }

    /// `(m, position of k in parents(m))` for every response regressing on `k`.
    pub fn children(&self, k: usize) -> &[(usize, usize)] {
        &self.children[k]
    }

    pub fn shape(&self, k: usize) -> f64 {
        self.shapes[k]
    }

    pub fn is_sparse(&self) -> bool {
        self.sparse
    }
}

/// Residual variances, residual-regression coefficients (aligned with
/// `ResidualStructure::parents`) and the common scale τ.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub sigma2: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub tau: f64,
}

impl CovarianceState {
    pub fn initial(structure: &ResidualStructure, tau: f64) -> Self {
        let s = structure.s();
        Self {
            sigma2: vec![1.0; s],
            rho: (0..s).map(|k| vec![0.0; structure.parents(k).len()]).collect(),
            tau,
        }
    }

    pub fn check(&self, structure: &ResidualStructure) -> Result<()> {
        let s = structure.s();
        if self.sigma2.len() != s || self.rho.len() != s {
            return Err(Error::PatternMismatch);
        }
        for k in 0..s {
            if self.rho[k].len() != structure.parents(k).len() {
                return Err(Error::PatternMismatch);
            }
        }
        Ok(())
    }
}

/// `ε_k = u_k − Σ_l ρ_kl u_l` for one response.
pub fn innovation(u: &DMatrix<f64>, cov: &CovarianceState, structure: &ResidualStructure, k: usize) -> DVector<f64> {
    let mut e = u.column(k).into_owned();
    for (r, &l) in cov.rho[k].iter().zip(structure.parents(k)) {
        e.axpy(-r, &u.column(l), 1.0);
    }
    e
}

fn ln_normal_sum(e: &DVector<f64>, var: f64) -> f64 {
    let n = e.len() as f64;
    -0.5 * (n * (LN_2PI + var.ln()) + e.norm_squared() / var)
}

/// `Σ_k Σ_i log N(ε_ik; 0, σ_k²)` for residuals `U = Y − D B`.
pub fn sur_log_likelihood(
    u: &DMatrix<f64>,
    cov: &CovarianceState,
    structure: &ResidualStructure,
) -> Result<f64> {
    cov.check(structure)?;
    if u.ncols() != structure.s() {
        return Err(Error::Dimension("residual matrix width differs from s".into()));
    }
    Ok(structure
        .order()
        .iter()
        .map(|&k| ln_normal_sum(&innovation(u, cov, structure, k), cov.sigma2[k]))
        .sum())
}

/// Per-observation log densities `log N(ε_ik; 0, σ_k²)`.
pub fn sur_pointwise(
    u: &DMatrix<f64>,
    cov: &CovarianceState,
    structure: &ResidualStructure,
) -> DMatrix<f64> {
    let (n, s) = (u.nrows(), u.ncols());
    let mut out = DMatrix::zeros(n, s);
    for k in 0..s {
        let e = innovation(u, cov, structure, k);
        for i in 0..n {
            out[(i, k)] = ln_normal(e[i], 0.0, cov.sigma2[k]);
        }
    }
    out
}

/// The covariance `C = (I − R)⁻¹ diag(σ²) (I − R)⁻ᵀ` implied by the
/// residual regressions.
pub fn implied_covariance(cov: &CovarianceState, structure: &ResidualStructure) -> Result<DMatrix<f64>> {
    cov.check(structure)?;
    let s = structure.s();
    let mut a = DMatrix::<f64>::identity(s, s);
    for k in 0..s {
        for (r, &l) in cov.rho[k].iter().zip(structure.parents(k)) {
            a[(k, l)] -= r;
        }
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Numeric("residual regression system is singular".into()))?;
    let d = DMatrix::from_diagonal(&DVector::from_vec(cov.sigma2.clone()));
    Ok(&inv * d * inv.transpose())
}

fn regression_posterior(
    u: &DMatrix<f64>,
    structure: &ResidualStructure,
    k: usize,
    tau: f64,
    lambda: f64,
) -> Result<NigPosterior> {
    let pa = structure.parents(k);
    let q = pa.len();
    let uk = u.column(k);
    let mut gram = DMatrix::zeros(q, q);
    let mut zty = DVector::zeros(q);
    for a in 0..q {
        let ua = u.column(pa[a]);
        zty[a] = ua.dot(&uk);
        for b in a..q {
            let v = ua.dot(&u.column(pa[b]));
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    nig_from_moments(
        &gram,
        &zty,
        uk.dot(&uk),
        u.nrows(),
        tau,
        structure.shape(k),
        0.5 * tau,
        lambda,
    )
}

/// Draws every `(σ_k², ρ_k)` from its Normal-Inverse-Gamma full conditional
/// given the residuals.
pub fn update_sigma_rho<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    structure: &ResidualStructure,
    cov: &mut CovarianceState,
    lambda: f64,
    rng: &mut R,
) -> Result<()> {
    for &k in structure.order() {
        let post = regression_posterior(u, structure, k, cov.tau, lambda)?;
        let (rho, sigma2) = hrr_sample_beta(&post, rng);
        cov.sigma2[k] = sigma2;
        cov.rho[k] = rho.iter().copied().collect();
    }
    Ok(())
}

/// `Σ_k log ∫∫ N(u_k; U_pa ρ, σ²)^λ p(ρ, σ² | τ) dρ dσ²`: the covariance-
/// integrated score used to compare response graphs.
pub fn collapsed_residual_score(
    u: &DMatrix<f64>,
    structure: &ResidualStructure,
    tau: f64,
    lambda: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for &k in structure.order() {
        total += regression_posterior(u, structure, k, tau, lambda)?.log_marginal;
    }
    Ok(total)
}

/// Log density of `log τ` given the covariance parameters (Gamma prior,
/// σ² and ρ priors, Jacobian).
pub fn tau_log_target(
    log_tau: f64,
    cov: &CovarianceState,
    structure: &ResidualStructure,
    h: &Hyperparameters,
) -> f64 {
    let tau = log_tau.exp();
    let mut total = ln_gamma_pdf(tau, h.a_tau, h.b_tau) + log_tau;
    for k in 0..structure.s() {
        let s2 = cov.sigma2[k];
        total += ln_inv_gamma(s2, structure.shape(k), 0.5 * tau);
        for &r in &cov.rho[k] {
            total += ln_normal(r, 0.0, s2 / tau);
        }
    }
    total
}

/// Random-walk MH on `log τ`; returns whether the move was accepted.
pub fn update_tau<R: Rng + ?Sized>(
    cov: &mut CovarianceState,
    structure: &ResidualStructure,
    h: &Hyperparameters,
    scale: &mut AdaptiveScale,
    adapt: bool,
    rng: &mut R,
) -> bool {
    let x = cov.tau.ln();
    let x_new = x + scale.scale * standard_normal(rng);
    let ratio = tau_log_target(x_new, cov, structure, h) - tau_log_target(x, cov, structure, h);
    let ok = x_new.exp() > 0.0 && x_new.exp().is_finite() && crate::dist::metropolis_accept(rng, ratio);
    if ok {
        cov.tau = x_new.exp();
    }
    scale.record(ok, adapt);
    ok
}

/// Selects rows of a column vector; re-exported for the sampler.
pub(crate) fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    select_vec(v, idx)
}
