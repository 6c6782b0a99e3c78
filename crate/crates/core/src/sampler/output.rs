use nalgebra::{DMatrix, DVector};

use super::moves::Chain;
use super::state::{active_design, write_column, CovarianceModel, SamplerContext};
use crate::dist::ln_student_t;
use crate::error::Result;
use crate::likelihoods::{hrr_sample_beta, sur_pointwise};
use crate::model::{CovariancePrior, Hyperparameters, Indicators, ModelSpec};

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Streaming statistics of per-draw, per-cell log densities `log f(y_ik | θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseAccumulator {
    rows: usize,
    cols: usize,
    draws: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    lse_pos: Vec<f64>,
    lse_neg: Vec<f64>,
    /// Shift and shifted power sums of the importance weights `1/f`.
    shift: Vec<f64>,
    power: Vec<[f64; 4]>,
}

/// Pointwise predictive summaries computed from an accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseSummary {
    /// `log mean_t f` per cell.
    pub lpd: DMatrix<f64>,
    /// Importance-sampled leave-one-out `log f(y_ik | y_−ik)` per cell.
    pub loo: DMatrix<f64>,
    /// Posterior variance of `log f` per cell.
    pub variance: DMatrix<f64>,
    /// Largest empirical kurtosis of the importance weights.
    pub max_weight_kurtosis: f64,
}

impl PointwiseAccumulator {
    pub const KURTOSIS_WARNING: f64 = 10.0;

    pub fn new(rows: usize, cols: usize) -> Self {
        let m = rows * cols;
        Self {
            rows,
            cols,
            draws: 0,
            mean: vec![0.0; m],
            m2: vec![0.0; m],
            lse_pos: vec![f64::NEG_INFINITY; m],
            lse_neg: vec![f64::NEG_INFINITY; m],
            shift: vec![f64::NEG_INFINITY; m],
            power: vec![[0.0; 4]; m],
        }
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn push(&mut self, log_f: &DMatrix<f64>) {
        assert_eq!(log_f.shape(), (self.rows, self.cols), "record shape");
        self.draws += 1;
        let t = self.draws as f64;
        for (i, &x) in log_f.iter().enumerate() {
            let d = x - self.mean[i];
            self.mean[i] += d / t;
            self.m2[i] += d * (x - self.mean[i]);
            self.lse_pos[i] = log_add_exp(self.lse_pos[i], x);
            self.lse_neg[i] = log_add_exp(self.lse_neg[i], -x);
            let v = -x;
            if v > self.shift[i] {
                if self.shift[i] > f64::NEG_INFINITY {
                    let gap = self.shift[i] - v;
                    for (k, s) in self.power[i].iter_mut().enumerate() {
                        *s *= ((k + 1) as f64 * gap).exp();
                    }
                }
                self.shift[i] = v;
            }
            let r = (v - self.shift[i]).exp();
            let mut rk = 1.0;
            for s in self.power[i].iter_mut() {
                rk *= r;
                *s += rk;
            }
        }
    }

    pub fn summary(&self) -> PointwiseSummary {
        let t = self.draws as f64;
        let lt = t.ln();
        let (r, c) = (self.rows, self.cols);
        let lpd = DMatrix::from_fn(r, c, |i, k| self.lse_pos[i + k * r] - lt);
        let loo = DMatrix::from_fn(r, c, |i, k| lt - self.lse_neg[i + k * r]);
        let variance = DMatrix::from_fn(r, c, |i, k| {
            if self.draws > 1 {
                self.m2[i + k * r] / (t - 1.0)
            } else {
                0.0
            }
        });
        let mut max_k: f64 = 0.0;
        for p in &self.power {
            let [e1, e2, e3, e4] = p.map(|s| s / t);
            let var = e2 - e1 * e1;
            if var > 1e-12 * e2 {
                let m4 = e4 - 4.0 * e1 * e3 + 6.0 * e1 * e1 * e2 - 3.0 * e1.powi(4);
                max_k = max_k.max(m4 / (var * var));
            }
        }
        PointwiseSummary {
            lpd,
            loo,
            variance,
            max_weight_kurtosis: max_k,
        }
    }
}

/// Optional per-draw snapshots of the main chain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoredDraws {
    pub gamma: Vec<Indicators>,
    pub beta: Vec<DMatrix<f64>>,
    pub log_density: Vec<DMatrix<f64>>,
}

/// Running sums over post-burn-in main-chain draws plus whole-run traces.
#[derive(Debug, Clone)]
pub struct McmcOutput {
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub p0: usize,
    pub recorded: usize,
    pub gamma_sum: DMatrix<f64>,
    pub beta_sum: DMatrix<f64>,
    pub beta0_sum: DMatrix<f64>,
    pub graph_sum: DMatrix<f64>,
    pub log_posterior: Vec<f64>,
    pub model_size: Vec<usize>,
    pub temperature_trace: Vec<f64>,
    pub pointwise: PointwiseAccumulator,
    pub exchange_attempts: u64,
    pub exchange_accepts: u64,
    pub crossover_attempts: u64,
    pub crossover_accepts: u64,
    pub gamma_attempts: u64,
    pub gamma_accepts: u64,
    pub draws: Option<StoredDraws>,
}

impl McmcOutput {
    pub fn new(ctx: &SamplerContext, keep_draws: bool) -> Self {
        let (n, p, s, p0) = (ctx.cache.n(), ctx.p(), ctx.s(), ctx.cache.p0);
        Self {
            spec: ctx.spec.clone(),
            hyper: ctx.hyper,
            n,
            p,
            s,
            p0,
            recorded: 0,
            gamma_sum: DMatrix::zeros(p, s),
            beta_sum: DMatrix::zeros(p, s),
            beta0_sum: DMatrix::zeros(p0, s),
            graph_sum: DMatrix::zeros(s, s),
            log_posterior: Vec::with_capacity(ctx.spec.n_iter),
            model_size: Vec::with_capacity(ctx.spec.n_iter),
            temperature_trace: Vec::with_capacity(ctx.spec.n_iter),
            pointwise: PointwiseAccumulator::new(n, s),
            exchange_attempts: 0,
            exchange_accepts: 0,
            crossover_attempts: 0,
            crossover_accepts: 0,
            gamma_attempts: 0,
            gamma_accepts: 0,
            draws: keep_draws.then(StoredDraws::default),
        }
    }

    /// Records the main chain's current draw (post-burn-in iterations only).
    /// For HRR the coefficients are first drawn from their conditional
    /// posterior given Γ and w, and the per-cell records are the Student-t
    /// posterior predictive densities.
    pub fn record(&mut self, main: &mut Chain, ctx: &SamplerContext) -> Result<()> {
        let h = ctx.hyper;
        let (n, s, p0) = (self.n, self.s, self.p0);
        let mut log_f = DMatrix::zeros(n, s);
        match ctx.spec.covariance_prior {
            CovariancePrior::Ig => {
                for k in 0..s {
                    let active = ctx.cache.active(&main.state.gamma, k);
                    let post = ctx.cache.hrr_posterior(&active, k, main.state.w, h.a_sigma, h.b_sigma)?;
                    let (b, s2) = hrr_sample_beta(&post, &mut main.rng);
                    write_column(&mut main.state.beta, k, &active, &b);
                    if let CovarianceModel::Hrr { sigma2, .. } = &mut main.state.covariance {
                        sigma2[k] = s2;
                    }
                    let da = active_design(&ctx.cache, &active);
                    let loc = &da * &post.mu_star;
                    let df = 2.0 * post.a_star;
                    for i in 0..n {
                        let row: DVector<f64> = da.row(i).transpose();
                        let scale2 = post.b_star / post.a_star * (1.0 + post.quadratic_form(&row));
                        log_f[(i, k)] = ln_student_t(ctx.cache.y[(i, k)], df, loc[i], scale2.sqrt());
                    }
                }
            }
            _ => {
                if let CovarianceModel::Sur { cov, structure, .. } = &main.state.covariance {
                    log_f = sur_pointwise(&main.state.residuals, cov, structure);
                }
            }
        }
        let st = &main.state;
        self.recorded += 1;
        self.gamma_sum += st.gamma.to_matrix();
        self.beta_sum += st.beta.rows(p0, self.p);
        self.beta0_sum += st.beta.rows(0, p0);
        match ctx.spec.covariance_prior {
            CovariancePrior::Ig => {}
            CovariancePrior::Iw => {
                self.graph_sum += DMatrix::from_fn(s, s, |i, j| if i == j { 0.0 } else { 1.0 })
            }
            CovariancePrior::Hiw => {
                if let Some(g) = st.graph() {
                    self.graph_sum += g.adjacency().to_matrix();
                }
            }
        }
        self.pointwise.push(&log_f);
        if let Some(d) = &mut self.draws {
            d.gamma.push(st.gamma.clone());
            d.beta.push(st.beta.clone());
            d.log_density.push(log_f);
        }
        Ok(())
    }
}
