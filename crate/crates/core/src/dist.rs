//! Small density and sampling helpers. Gamma densities use the shape-rate
//! parameterisation throughout; inverse-gamma is parameterised by shape and
//! scale (`x⁻¹ ~ Gamma(shape, rate = scale)`).

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn ln_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta_fn(a, b)
}

/// Student-t log density with `df` degrees of freedom, location and scale.
pub fn ln_student_t(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters validated upstream")
        .sample(rng)
}

pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / sample_gamma(rng, shape, scale)
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b)
        .expect("beta parameters validated upstream")
        .sample(rng)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Metropolis accept/reject on a log acceptance ratio. A non-negative ratio
/// is accepted without consuming randomness.
pub fn metropolis_accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn densities_match_known_values() {
        assert!((ln_normal(0.0, 0.0, 1.0) + 0.5 * LN_2PI).abs() < 1e-15);
        // IG(1,1) at 1: e^{-1}
        assert!((ln_inv_gamma(1.0, 1.0, 1.0) + 1.0).abs() < 1e-14);
        // Gamma(1, 2) at x: 2 e^{-2x}
        assert!((ln_gamma_pdf(0.5, 1.0, 2.0) - (2.0f64.ln() - 1.0)).abs() < 1e-14);
        // Beta(1,1) is uniform
        assert!(ln_beta_pdf(0.3, 1.0, 1.0).abs() < 1e-14);
        // t with df=1 is Cauchy
        let c = -(std::f64::consts::PI).ln() - (1.0f64 + 4.0).ln();
        assert!((ln_student_t(2.0, 1.0, 0.0, 1.0) - c).abs() < 1e-13);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = RngStream::new(3, 0);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| sample_inv_gamma(&mut rng, 4.0, 3.0)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn logistic_inverts_logit() {
        for x in [1e-6, 0.2, 0.5, 0.9] {
            assert!((logistic(logit(x)) - x).abs() < 1e-14);
        }
    }
}
