//! Sampling and log-density kernels.
//!
//! Gamma and Inverse-Gamma are parameterized by **shape and rate**
//! everywhere in this crate: `G(a, b)` has density `bᵃ/Γ(a) x^{a−1} e^{−bx}`
//! and mean `a / b`; `X ~ IG(a, b)` iff `1/X ~ G(a, b)`. Many libraries
//! default to scale; do not pass a scale here.
//!
//! `IW(ν, S)` denotes the Inverse-Wishart with density proportional to
//! `|W|^{−(ν+p+1)/2} exp(−½ tr(S W⁻¹))`, so `E[W] = S / (ν − p − 1)`.
//!
//! # Random streams
//!
//! Every kernel takes a caller-owned `Rng`. The samplers use [`ChainRng`]
//! (ChaCha8) seeded with [`seeded_rng`], which maps a `u64` seed to a fixed,
//! platform-independent stream of words. Identical seed and call sequence
//! give identical draws.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{cholesky, spd_log_det, symmetrize};
use crate::{Error, Result};

/// The generator used for every chain.
pub type ChainRng = ChaCha8Rng;

/// Deterministic seed-to-stream mapping (`ChaCha8Rng::seed_from_u64`).
pub fn seeded_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var)
}

/// `ln Σ exp(v)`, shifted by the maximum so large magnitudes neither
/// overflow nor underflow. Returns `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn standard_normal_vector<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(p, |_, _| StandardNormal.sample(rng))
}

/// Draw from `N_p(mean, cov)` as `mean + L z` with `cov = LLᵀ`.
pub fn mvn_sample<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_dims(mean, cov)?;
    let chol = cholesky(cov, "covariance")?;
    let z = standard_normal_vector(mean.len(), rng);
    Ok(mean + chol.l() * z)
}

/// Log density of `N_p(mean, cov)` at `x`.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    check_dims(mean, cov)?;
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "point has length {}, mean has length {}",
            x.len(),
            mean.len()
        )));
    }
    let chol = cholesky(cov, "covariance")?;
    let diff = x - mean;
    let quad = diff.dot(&chol.solve(&diff));
    let log_det = spd_log_det(cov, "covariance")?;
    let d = x.len() as f64;
    Ok(-0.5 * (d * LN_2PI + log_det + quad))
}

fn check_dims(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, covariance is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(())
}

/// Gaussian in canonical (information) form: precision `Q` and shift
/// `h = Q μ`. Full conditionals of regression coefficients are assembled in
/// this form and sampled without ever inverting a covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGaussian {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl CanonicalGaussian {
    pub fn new(precision: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        check_dims(&shift, &precision)?;
        Ok(Self { precision, shift })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(cholesky(&self.precision, "posterior precision")?.solve(&self.shift))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(symmetrize(
            &cholesky(&self.precision, "posterior precision")?.inverse(),
        ))
    }

    /// `μ + L⁻ᵀ z` where `Q = LLᵀ`, so the noise has covariance `Q⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let chol = cholesky(&self.precision, "posterior precision")?;
        let mean = chol.solve(&self.shift);
        let z = standard_normal_vector(self.dim(), rng);
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or(Error::NotPositiveDefinite("posterior precision"))?;
        Ok(mean + noise)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `G(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaDist {
    pub shape: f64,
    pub rate: f64,
}

impl GammaDist {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        positive("gamma shape", shape)?;
        positive("gamma rate", rate)?;
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        unit_gamma(self.shape, rng) / self.rate
    }
}

/// `IG(shape, rate)`: reciprocal of a `G(shape, rate)` draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaDist {
    pub shape: f64,
    pub rate: f64,
}

impl InvGammaDist {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        positive("inverse-gamma shape", shape)?;
        positive("inverse-gamma rate", rate)?;
        Ok(Self { shape, rate })
    }

    /// Finite only for `shape > 1`.
    pub fn mean(&self) -> f64 {
        self.rate / (self.shape - 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.rate / unit_gamma(self.shape, rng)
    }
}

fn unit_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    // shape validated by callers, scale 1 is always valid
    rand_distr::Gamma::new(shape, 1.0)
        .expect("validated gamma shape")
        .sample(rng)
}

/// `ln X` for `X ~ G(shape, 1)`, accurate for tiny shapes where `X` itself
/// underflows: `G(a) = G(a + 1) · U^{1/a}`.
fn log_unit_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        unit_gamma(shape, rng).ln()
    } else {
        let u: f64 = rng.random::<f64>();
        // avoid ln(0)
        let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
        unit_gamma(shape + 1.0, rng).ln() + u.ln() / shape
    }
}

pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(GammaDist::new(shape, rate)?.sample(rng))
}

pub fn inv_gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(InvGammaDist::new(shape, rate)?.sample(rng))
}

/// `IW(df, scale)` with `E[W] = scale / (df − p − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvWishartDist {
    pub df: f64,
    pub scale: DMatrix<f64>,
}

impl InvWishartDist {
    pub fn new(df: f64, scale: DMatrix<f64>) -> Result<Self> {
        let p = scale.nrows();
        if !scale.is_square() {
            return Err(Error::DimensionMismatch("inverse-Wishart scale is not square".into()));
        }
        if !(df > p as f64 - 1.0) || !df.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "inverse-Wishart df must exceed p - 1 = {}, got {df}",
                p as f64 - 1.0
            )));
        }
        cholesky(&scale, "inverse-Wishart scale")?;
        Ok(Self { df, scale })
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    /// Finite only for `df > p + 1`.
    pub fn mean(&self) -> DMatrix<f64> {
        &self.scale / (self.df - self.dim() as f64 - 1.0)
    }

    /// Bartlett draw `W ~ Wishart(df, scale⁻¹)`, returned inverted.
    ///
    /// With `scale⁻¹ = LLᵀ` and `A` lower triangular (`A_ii² ~ χ²(df − i)`,
    /// zero-based `i`, standard normal below the diagonal), `W = (LA)(LA)ᵀ`
    /// and the draw is `W⁻¹ = (LA)⁻ᵀ (LA)⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let p = self.dim();
        let scale_chol = cholesky(&self.scale, "inverse-Wishart scale")?;
        // p is small: factor the explicit inverse
        let scale_inv = symmetrize(&scale_chol.inverse());
        let l = cholesky(&scale_inv, "inverse-Wishart scale")?.l();
        let mut a = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            let chi2 = 2.0 * unit_gamma((self.df - i as f64) / 2.0, rng);
            a[(i, i)] = chi2.sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let la = l * a;
        let la_inv = la
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .ok_or(Error::NotPositiveDefinite("Bartlett factor"))?;
        let draw = symmetrize(&(la_inv.transpose() * la_inv));
        if draw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inverse-Wishart draw"));
        }
        Ok(draw)
    }
}

pub fn inv_wishart_sample<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    InvWishartDist::new(df, scale.clone())?.sample(rng)
}

/// `Dir(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletDist {
    pub alpha: Vec<f64>,
}

impl DirichletDist {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidParameter("Dirichlet needs at least one component".into()));
        }
        for &a in &alpha {
            positive("Dirichlet concentration", a)?;
        }
        Ok(Self { alpha })
    }

    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / total).collect()
    }

    /// Normalized Gamma draws, formed in log space so concentrations far
    /// below one do not collapse every component to zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let logs: Vec<f64> = self.alpha.iter().map(|&a| log_unit_gamma(a, rng)).collect();
        let norm = log_sum_exp(&logs);
        let mut w: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }
}

pub fn dirichlet_sample<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    Ok(DirichletDist::new(alpha.to_vec())?.sample(rng))
}

/// Draw a zero-based index with probability proportional to
/// `exp(log_weights[k])`. Weights are normalized by subtracting the maximum;
/// `-inf` entries are never selected.
pub fn categorical_sample<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFinite("categorical log-weights"));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let mut cumulative = 0.0;
    let mut cdf = Vec::with_capacity(log_weights.len());
    for w in log_weights {
        cumulative += (w - max).exp();
        cdf.push(cumulative);
    }
    let u = rng.random::<f64>() * cumulative;
    let idx = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
    // never land on a zero-weight trailing entry through rounding
    Ok(if log_weights[idx] == f64::NEG_INFINITY {
        log_weights
            .iter()
            .rposition(|w| *w > f64::NEG_INFINITY)
            .unwrap_or(idx)
    } else {
        idx
    })
}

/// `Beta(a, b)`.
pub fn beta_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    positive("beta a", a)?;
    positive("beta b", b)?;
    let dist = rand_distr::Beta::new(a, b)
        .map_err(|e| Error::InvalidParameter(format!("beta distribution: {e}")))?;
    loop {
        let x: f64 = dist.sample(rng);
        if x > 0.0 && x < 1.0 {
            return Ok(x);
        }
    }
}
