//! OLS fit and unit-information hyperparameters shared by all three models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{GroupedDataset, StackedView};
use crate::linalg::{cholesky, qr_least_squares, serde_dense, CONDITION_WARNING};
use crate::{Error, Result};

/// Ordinary least squares on the stacked data.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta_hat: DVector<f64>,
    /// `‖y − Xβ̂‖² / (N − p)`.
    pub sigma2_hat: f64,
    pub dof: usize,
    /// `(XᵀX)⁻¹` from the QR factor.
    pub gram_inverse: DMatrix<f64>,
    pub residual_ss: f64,
}

pub fn ols_fit(stacked: &StackedView) -> Result<OlsFit> {
    let (n, p) = stacked.x.shape();
    if n <= p {
        return Err(Error::TooFewObservations { n, p });
    }
    let ls = qr_least_squares(&stacked.x, &stacked.y)?;
    if ls.condition > CONDITION_WARNING {
        log::warn!(
            "XᵀX is ill-conditioned (condition number {:.3e}); prior covariance may be unreliable",
            ls.condition
        );
    }
    let dof = n - p;
    Ok(OlsFit {
        sigma2_hat: ls.residual_ss / dof as f64,
        beta_hat: ls.coefficients,
        dof,
        gram_inverse: ls.gram_inverse,
        residual_ss: ls.residual_ss,
    })
}

/// Which model the hyperparameters are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lrm,
    Hlrm,
    Chlrm,
}

/// Every prior constant of the three models.
///
/// The pooled model uses `mu0`/`lambda0` as the mean and covariance of `β`
/// and `(nu0, sigma2_0)` for `σ² ~ IG(ν₀/2, ν₀σ₀²/2)`. The hierarchical
/// models additionally use `Σ ~ IW(n0, S0)` (with `E[Σ] = S0/(n0−p−1)`),
/// `ξ² ~ G(a0, b0)` and, for clustering, `ω ~ Dir(alpha0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(with = "serde_dense::vector")]
    pub mu0: DVector<f64>,
    #[serde(with = "serde_dense::matrix")]
    pub lambda0: DMatrix<f64>,
    pub n0: f64,
    #[serde(with = "serde_dense::matrix")]
    pub s0: DMatrix<f64>,
    pub nu0: f64,
    pub a0: f64,
    pub b0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    pub g: f64,
    pub sigma2_0: f64,
}

impl Hyperparams {
    pub fn p(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        for (name, m) in [("Lambda0", &self.lambda0), ("S0", &self.s0)] {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        cholesky(&self.lambda0, "Lambda0")?;
        cholesky(&self.s0, "S0")?;
        for (name, v) in [
            ("nu0", self.nu0),
            ("a0", self.a0),
            ("b0", self.b0),
            ("sigma2_0", self.sigma2_0),
            ("g", self.g),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.n0 > p as f64 - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "n0 must exceed p - 1 = {}, got {}",
                p as f64 - 1.0,
                self.n0
            )));
        }
        if let Some(alpha) = &self.alpha0 {
            if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(Error::InvalidParameter("alpha0 entries must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Unit-information hyperparameters: `g = N`, `ν₀ = 1`, `μ₀ = β̂`,
/// `σ₀² = σ̂²` (floored at `1e−8·var(y)`), `Λ₀ = g σ₀² (XᵀX)⁻¹`, `n₀ = p+2`,
/// `S₀ = Λ₀`, `a₀ = 1`, `b₀ = 1/σ₀²` and, for the clustering model,
/// `α₀ = (1/K, …, 1/K)`.
///
/// The hierarchical constants are filled for every kind so one record can
/// drive any sampler; the pooled model ignores them.
pub fn elicit(
    ds: &GroupedDataset,
    ols: &OlsFit,
    kind: ModelKind,
    clusters: Option<usize>,
) -> Result<Hyperparams> {
    let p = ds.p();
    let n = ds.n_total();
    let y = ds.stacked_response();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var_y = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let sigma2_0 = ols.sigma2_hat.max(1e-8 * var_y);
    if !(sigma2_0 > 0.0) {
        return Err(Error::InvalidParameter(
            "response has zero variance; cannot elicit a prior scale".into(),
        ));
    }
    let g = n as f64;
    let lambda0 = &ols.gram_inverse * (g * sigma2_0);
    let alpha0 = match kind {
        ModelKind::Chlrm => {
            let k = clusters.unwrap_or(ds.m());
            if k == 0 {
                return Err(Error::InvalidParameter("K must be at least 1".into()));
            }
            Some(vec![1.0 / k as f64; k])
        }
        _ => None,
    };
    let hyper = Hyperparams {
        mu0: ols.beta_hat.clone(),
        s0: lambda0.clone(),
        lambda0,
        n0: p as f64 + 2.0,
        nu0: 1.0,
        a0: 1.0,
        b0: 1.0 / sigma2_0,
        alpha0,
        g,
        sigma2_0,
    };
    hyper.validate()?;
    Ok(hyper)
}
