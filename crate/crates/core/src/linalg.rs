use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTERS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorisation with diagonal jitter escalation. The jitter is
/// scaled by the mean diagonal so it is meaningful for any units.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let scale = if n == 0 {
        1.0
    } else {
        (m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(1e-300)
    };
    for jitter in JITTERS {
        let mut j = m.clone();
        for i in 0..n {
            j[(i, i)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok(c);
        }
    }
    Err(Error::Numeric(format!(
        "Cholesky factorisation of a {n}×{n} matrix failed after jitter escalation"
    )))
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Draw from N(P⁻¹h, scale·P⁻¹) given the Cholesky factor of P.
pub fn sample_gaussian_canonical(
    chol: &Cholesky<f64, Dyn>,
    h: &DVector<f64>,
    scale: f64,
    z: &DVector<f64>,
) -> DVector<f64> {
    let mean = chol.solve(h);
    // L Lᵀ = P, so x = L⁻ᵀ z has covariance P⁻¹.
    let l = chol.l();
    let x = l
        .transpose()
        .solve_upper_triangular(z)
        .expect("triangular factor has a positive diagonal");
    mean + x * scale.sqrt()
}

/// Sub-matrix of `m` on the given rows and columns.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let c = cholesky(&m).unwrap();
        assert!(log_det(&c).is_finite());
    }

    #[test]
    fn indefinite_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky(&m), Err(Error::Numeric(_))));
    }

    #[test]
    fn log_det_matches_determinant() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let c = cholesky(&m).unwrap();
        assert!((log_det(&c) - 11f64.ln()).abs() < 1e-14);
    }
}
