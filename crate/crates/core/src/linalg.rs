//! Dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Condition number of `XᵀX` above which a warning is logged.
pub const CONDITION_WARNING: f64 = 1e12;

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// `name` is reported in the error when factorization fails.
pub fn cholesky(m: &DMatrix<f64>, name: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(name));
    }
    let sym = symmetrize(m);
    Cholesky::new(sym).ok_or(Error::NotPositiveDefinite(name))
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, name)?.inverse()))
}

/// `log |m|` of an SPD matrix.
pub fn spd_log_det(m: &DMatrix<f64>, name: &'static str) -> Result<f64> {
    let chol = cholesky(m, name)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Least-squares pieces computed from a thin QR factorization of a tall
/// design matrix.
#[derive(Debug, Clone)]
pub struct QrLeastSquares {
    pub coefficients: DVector<f64>,
    /// `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`.
    pub gram_inverse: DMatrix<f64>,
    pub residual_ss: f64,
    pub condition: f64,
}

/// Solve `min ‖y − Xb‖` by QR. Fails when `X` lacks full column rank.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<QrLeastSquares> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows, response has {} entries",
            y.len()
        )));
    }
    if n < p || p == 0 {
        return Err(Error::RankDeficient { rank: n.min(p), cols: p });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let sv = r.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let tol = smax * (n.max(p) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < p || smin <= 0.0 {
        return Err(Error::RankDeficient { rank, cols: p });
    }
    let condition = (smax / smin).powi(2);
    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { rank, cols: p })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient { rank, cols: p })?;
    let gram_inverse = symmetrize(&(&r_inv * r_inv.transpose()));
    let resid = y - x * &coefficients;
    Ok(QrLeastSquares {
        coefficients,
        gram_inverse,
        residual_ss: resid.norm_squared(),
        condition,
    })
}

/// Minimum-norm least-squares coefficients; never fails on rank deficiency.
pub fn pseudo_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    if x.nrows() == 0 {
        return DVector::zeros(p);
    }
    let svd = x.clone().svd(true, true);
    let eps = svd.singular_values.max() * (x.nrows().max(p) as f64) * f64::EPSILON;
    svd.solve(y, eps).unwrap_or_else(|_| DVector::zeros(p))
}

/// Serde adapters storing matrices as row lists and vectors as plain lists.
pub mod serde_dense {
    use nalgebra::{DMatrix, DVector};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return None;
        }
        Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
            matrix_to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            matrix_from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
            Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }
}
