//! Posterior summaries and predictive accuracy.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{CovariancePrior, Indicators};
use crate::sampler::{McmcOutput, PointwiseAccumulator, PointwiseSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaType {
    /// Posterior mean over all draws (zeros included).
    #[default]
    Marginal,
    /// Posterior mean over draws with `γ_jk = 1`.
    Conditional,
}

/// Expected log pointwise predictive density estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elpd {
    pub loo: f64,
    pub waic: f64,
    /// `Σ log mean_t f`.
    pub lpd: f64,
    /// Empirical kurtosis of the importance weights exceeded the warning level.
    pub unstable_weights: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub beta_hat: DMatrix<f64>,
    pub beta_hat_conditional: DMatrix<f64>,
    pub beta0_hat: DMatrix<f64>,
    pub gamma_hat: DMatrix<f64>,
    pub g_hat: DMatrix<f64>,
    pub elpd: Elpd,
    /// Per (observation, response) conditional predictive ordinates.
    pub cpo: DMatrix<f64>,
    /// Row sums of `log CPO`.
    pub log_cpo_rows: Vec<f64>,
    pub threshold: f64,
    pub beta_type: BetaType,
    pub selected: Indicators,
}

impl PosteriorSummary {
    pub fn coefficients(&self) -> &DMatrix<f64> {
        match self.beta_type {
            BetaType::Marginal => &self.beta_hat,
            BetaType::Conditional => &self.beta_hat_conditional,
        }
    }
}

fn elpd_from(ps: &PointwiseSummary, importance_loo: bool) -> Elpd {
    let lpd = ps.lpd.sum();
    let waic = lpd - ps.variance.sum();
    Elpd {
        loo: if importance_loo { ps.loo.sum() } else { lpd },
        waic,
        lpd,
        unstable_weights: ps.max_weight_kurtosis > PointwiseAccumulator::KURTOSIS_WARNING,
    }
}

fn accumulate(records: &[DMatrix<f64>]) -> Result<PointwiseAccumulator> {
    let first = records.first().ok_or(Error::EmptyWindow)?;
    let mut acc = PointwiseAccumulator::new(first.nrows(), first.ncols());
    for r in records {
        if r.shape() != first.shape() {
            return Err(Error::Dimension("log-density records differ in shape".into()));
        }
        acc.push(r);
    }
    Ok(acc)
}

/// Importance-sampled LOO and WAIC from per-draw log-density records
/// (`records[t][(i, k)] = log f(y_ik | θ^t)`).
pub fn is_elpd(records: &[DMatrix<f64>]) -> Result<Elpd> {
    Ok(elpd_from(&accumulate(records)?.summary(), true))
}

/// Harmonic-mean conditional predictive ordinates.
pub fn cpo(records: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    Ok(accumulate(records)?.summary().loo.map(f64::exp))
}

/// HRR predictive accuracy from the recorded Student-t posterior predictive
/// densities: `(lpd, waic)`.
pub fn hrr_elpd(output: &McmcOutput) -> Result<(f64, f64)> {
    if output.spec.covariance_prior != CovariancePrior::Ig {
        return Err(Error::Config("hrr_elpd requires the IG covariance prior".into()));
    }
    if output.recorded == 0 {
        return Err(Error::EmptyWindow);
    }
    let e = elpd_from(&output.pointwise.summary(), false);
    Ok((e.lpd, e.waic))
}

pub fn summarize(output: &McmcOutput, threshold: f64, beta_type: BetaType) -> Result<PosteriorSummary> {
    if output.recorded == 0 {
        return Err(Error::EmptyWindow);
    }
    let t = output.recorded as f64;
    let gamma_hat = &output.gamma_sum / t;
    let beta_hat = &output.beta_sum / t;
    let beta_hat_conditional = DMatrix::from_fn(output.p, output.s, |j, k| {
        let g = output.gamma_sum[(j, k)];
        if g > 0.0 {
            output.beta_sum[(j, k)] / g
        } else {
            0.0
        }
    });
    let ps = output.pointwise.summary();
    let elpd = elpd_from(&ps, output.spec.covariance_prior != CovariancePrior::Ig);
    let cpo = ps.loo.map(f64::exp);
    let log_cpo_rows = ps.loo.row_iter().map(|r| r.sum()).collect();
    let selected = Indicators::from_fn(output.p, output.s, |j, k| gamma_hat[(j, k)] > threshold);
    Ok(PosteriorSummary {
        beta_hat,
        beta_hat_conditional,
        beta0_hat: &output.beta0_sum / t,
        gamma_hat,
        g_hat: &output.graph_sum / t,
        elpd,
        cpo,
        log_cpo_rows,
        threshold,
        beta_type,
        selected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    Response,
    Coefficients,
    NonzeroIndices,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Matrix(DMatrix<f64>),
    /// `(predictor, response)` pairs with mPIP above the threshold.
    Indices(Vec<(usize, usize)>),
}

pub fn predict(
    summary: &PosteriorSummary,
    x_new: &DMatrix<f64>,
    x0_new: Option<&DMatrix<f64>>,
    mode: PredictMode,
) -> Result<Prediction> {
    let b = summary.coefficients();
    match mode {
        PredictMode::Coefficients => Ok(Prediction::Matrix(b.clone())),
        PredictMode::NonzeroIndices => {
            let (p, s) = summary.gamma_hat.shape();
            let mut idx = Vec::new();
            for k in 0..s {
                for j in 0..p {
                    if summary.gamma_hat[(j, k)] > summary.threshold {
                        idx.push((j, k));
                    }
                }
            }
            Ok(Prediction::Indices(idx))
        }
        PredictMode::Response => {
            if x_new.ncols() != b.nrows() {
                return Err(Error::Dimension(format!(
                    "X has {} columns, model expects {}",
                    x_new.ncols(),
                    b.nrows()
                )));
            }
            let mut y = x_new * b;
            let p0 = summary.beta0_hat.nrows();
            match x0_new {
                Some(x0) if x0.ncols() == p0 && x0.nrows() == x_new.nrows() => y += x0 * &summary.beta0_hat,
                None if p0 == 0 => {}
                _ => {
                    return Err(Error::Dimension(format!(
                        "X0 must have {} columns and {} rows",
                        p0,
                        x_new.nrows()
                    )))
                }
            }
            Ok(Prediction::Matrix(y))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_draw_elpd_is_the_log_density() {
        let r = DMatrix::from_row_slice(2, 1, &[-0.3, -2.0]);
        let e = is_elpd(std::slice::from_ref(&r)).unwrap();
        assert!((e.loo + 2.3).abs() < 1e-14);
        assert!((e.waic + 2.3).abs() < 1e-14);
        let c = cpo(&[r]).unwrap();
        assert!((c[(0, 0)] - (-0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn constant_draws_give_equal_estimates() {
        let r = DMatrix::from_row_slice(3, 1, &[-1.0, -0.5, -4.0]);
        let e = is_elpd(&vec![r; 7]).unwrap();
        assert!((e.loo + 5.5).abs() < 1e-12);
        assert!((e.waic + 5.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_densities_shifts_loo() {
        let records: Vec<DMatrix<f64>> = (0..20)
            .map(|t| DMatrix::from_fn(4, 2, |i, k| -(((t * 7 + i * 3 + k) % 11) as f64) / 3.0))
            .collect();
        let c: f64 = 0.37;
        let shifted: Vec<_> = records.iter().map(|r| r.add_scalar(c.ln())).collect();
        let a = is_elpd(&records).unwrap();
        let b = is_elpd(&shifted).unwrap();
        assert!((b.loo - a.loo - 8.0 * c.ln()).abs() < 1e-10);
        assert!(a.waic <= a.lpd);
    }

    #[test]
    fn outlier_has_minimal_cpo() {
        let records: Vec<DMatrix<f64>> = (0..50)
            .map(|t| {
                let mu = 0.1 * ((t % 5) as f64 - 2.0);
                DMatrix::from_fn(5, 1, |i, _| {
                    let y = if i == 3 { 10.0 } else { 0.2 * i as f64 - 0.4 };
                    crate::dist::ln_normal(y, mu, 1.0)
                })
            })
            .collect();
        let c = cpo(&records).unwrap();
        assert_eq!(c.column(0).argmin().0, 3);
    }
}
