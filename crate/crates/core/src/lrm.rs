//! Pooled Normal linear regression: semi-conjugate Gibbs sampler and the
//! direct sampler under the g-prior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{GroupedDataset, SuffStats};
use crate::distributions::{CanonicalGaussian, InvGammaDist};
use crate::draws::{dataset_loglik, ModelState, PosteriorDraws, RunMeta, Sampler, Schedule, StateDims};
use crate::elicitation::Hyperparams;
use crate::linalg::{cholesky, qr_least_squares, spd_inverse};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LrmState {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

impl ModelState for LrmState {
    fn coefficients(&self, _group: usize) -> &DVector<f64> {
        &self.beta
    }

    fn variance(&self, _group: usize) -> f64 {
        self.sigma2
    }

    fn flat_len(dims: &StateDims) -> usize {
        dims.p + 1
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.beta.iter());
        out.push(self.sigma2);
    }

    fn read_flat(dims: &StateDims, values: &[f64]) -> Result<Self> {
        if values.len() != Self::flat_len(dims) {
            return Err(Error::Format("pooled state has the wrong width".into()));
        }
        Ok(Self {
            beta: DVector::from_column_slice(&values[..dims.p]),
            sigma2: values[dims.p],
        })
    }

    fn summary_names(_dims: &StateDims, coefficient_names: &[String], _group_ids: &[String]) -> Vec<String> {
        let mut names: Vec<String> = coefficient_names.iter().map(|c| format!("beta[{c}]")).collect();
        names.push("sigma2".into());
        names
    }

    fn summary_values(&self, out: &mut Vec<f64>) {
        self.write_flat(out);
    }

    fn plug_in(states: &[Self]) -> Option<Self> {
        let first = states.first()?;
        let p = first.beta.len();
        let beta = DVector::from_fn(p, |i, _| {
            crate::draws::order_invariant_mean(&states.iter().map(|s| s.beta[i]).collect::<Vec<_>>())
        });
        let sigma2 = crate::draws::order_invariant_mean(&states.iter().map(|s| s.sigma2).collect::<Vec<_>>());
        Some(Self { beta, sigma2 })
    }
}

/// Gaussian prior `N(mean, cov)` held as precision and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl GaussianPrior {
    pub fn from_covariance(mean: DVector<f64>, cov: &DMatrix<f64>, name: &'static str) -> Result<Self> {
        let precision = spd_inverse(cov, name)?;
        let shift = &precision * &mean;
        Ok(Self { mean, precision, shift })
    }
}

/// Conjugate update of a Gaussian prior (precision `Q₀`, shift `Q₀μ₀`) by
/// regression data observed with variance `σ²`:
/// precision `Q₀ + σ⁻²XᵀX`, shift `Q₀μ₀ + σ⁻²Xᵀy`.
pub fn regression_conditional(
    prior_precision: &DMatrix<f64>,
    prior_shift: &DVector<f64>,
    stats: &SuffStats,
    sigma2: f64,
) -> CanonicalGaussian {
    let inv = 1.0 / sigma2;
    CanonicalGaussian {
        precision: prior_precision + &stats.xtx * inv,
        shift: prior_shift + &stats.xty * inv,
    }
}

/// `β | y, X, σ² ~ N_p((Σ₀⁻¹ + σ⁻²XᵀX)⁻¹(Σ₀⁻¹β₀ + σ⁻²Xᵀy), (Σ₀⁻¹ + σ⁻²XᵀX)⁻¹)`.
pub fn fcd_beta(stats: &SuffStats, sigma2: f64, prior: &GaussianPrior) -> CanonicalGaussian {
    regression_conditional(&prior.precision, &prior.shift, stats, sigma2)
}

/// `σ² | y, X, β ~ IG((ν₀ + N)/2, (ν₀σ₀² + RSS)/2)`.
pub fn fcd_sigma2(residual_ss: f64, n: usize, nu0: f64, sigma2_0: f64) -> Result<InvGammaDist> {
    InvGammaDist::new((nu0 + n as f64) / 2.0, (nu0 * sigma2_0 + residual_ss) / 2.0)
}

fn pooled_stats(ds: &GroupedDataset) -> SuffStats {
    let mut stats = SuffStats::zeros(ds.p());
    for g in ds.groups() {
        stats.add_assign(&g.suff_stats());
    }
    stats
}

fn pooled_rss(ds: &GroupedDataset, beta: &DVector<f64>) -> f64 {
    ds.groups().iter().map(|g| g.residual_ss(beta)).sum()
}

/// Semi-conjugate Gibbs sampler, started at `β = μ₀`, `σ² = σ₀²` (the OLS
/// estimates under the default elicitation).
pub fn gibbs_lrm<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    hyper: &Hyperparams,
    schedule: Schedule,
    seed: u64,
    rng: &mut R,
) -> Result<PosteriorDraws<LrmState>> {
    let init = LrmState {
        beta: hyper.mu0.clone(),
        sigma2: hyper.sigma2_0,
    };
    gibbs_lrm_from(ds, hyper, schedule, seed, init, rng)
}

/// [`gibbs_lrm`] from an explicit initial state.
pub fn gibbs_lrm_from<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    hyper: &Hyperparams,
    schedule: Schedule,
    seed: u64,
    init: LrmState,
    rng: &mut R,
) -> Result<PosteriorDraws<LrmState>> {
    schedule.validate()?;
    hyper.validate()?;
    let prior = GaussianPrior::from_covariance(hyper.mu0.clone(), &hyper.lambda0, "Sigma0")?;
    let stats = pooled_stats(ds);
    let n = ds.n_total();
    let mut state = init;
    let mut draws = PosteriorDraws::new(RunMeta {
        sampler: Sampler::Lrm,
        seed,
        schedule,
    });
    for sweep in 1..=schedule.iterations {
        state.beta = fcd_beta(&stats, state.sigma2, &prior).sample(rng)?;
        let rss = pooled_rss(ds, &state.beta);
        state.sigma2 = fcd_sigma2(rss, n, hyper.nu0, hyper.sigma2_0)?.sample(rng);
        if schedule.keeps(sweep) {
            let ll = dataset_loglik(ds, &state);
            draws.push(state.clone(), ll);
        }
    }
    Ok(draws)
}

/// `yᵀ(I − g/(g+1) X(XᵀX)⁻¹Xᵀ)y`, computed as `yᵀy − g/(g+1) yᵀXβ̂` without
/// forming the hat matrix.
pub fn gprior_quadratic_form(y: &DVector<f64>, x: &DMatrix<f64>, g: f64) -> Result<f64> {
    let ls = qr_least_squares(x, y)?;
    let fitted = x * &ls.coefficients;
    Ok(y.norm_squared() - g / (g + 1.0) * y.dot(&fitted))
}

/// I.i.d. draws from the posterior under the g-prior
/// `β | σ² ~ N(0, gσ²(XᵀX)⁻¹)`, `σ² ~ IG(ν₀/2, ν₀σ₀²/2)`:
///
/// 1. `σ² ~ IG((ν₀+N)/2, (ν₀σ₀² + yᵀ(I − g/(g+1)H)y)/2)`;
/// 2. `β ~ N(g/(g+1) β̂, g/(g+1) σ² (XᵀX)⁻¹)`.
pub fn direct_sample_gprior<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    g: f64,
    nu0: f64,
    sigma2_0: f64,
    n_draws: usize,
    seed: u64,
    rng: &mut R,
) -> Result<PosteriorDraws<LrmState>> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
    }
    let stacked = ds.stack();
    let ls = qr_least_squares(&stacked.x, &stacked.y)?;
    let shrink = g / (g + 1.0);
    let quad = stacked.y.norm_squared() - shrink * stacked.y.dot(&(&stacked.x * &ls.coefficients));
    let sigma_post = InvGammaDist::new(
        (nu0 + ds.n_total() as f64) / 2.0,
        (nu0 * sigma2_0 + quad.max(0.0)) / 2.0,
    )?;
    let mean = &ls.coefficients * shrink;
    let l = cholesky(&ls.gram_inverse, "(XᵀX)⁻¹")?.l();
    let p = ds.p();
    let mut draws = PosteriorDraws::new(RunMeta {
        sampler: Sampler::LrmGprior,
        seed,
        schedule: Schedule::new(n_draws, 0, 1)?,
    });
    for _ in 0..n_draws {
        let sigma2 = sigma_post.sample(rng);
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let beta = &mean + &l * z * (shrink * sigma2).sqrt();
        let state = LrmState { beta, sigma2 };
        let ll = dataset_loglik(ds, &state);
        draws.push(state, ll);
    }
    Ok(draws)
}
