//! Hierarchical Normal linear regression: group coefficients
//! `β_j ~ N(β, Σ)`, group variances `σ_j² ~ IG(ν₀/2, ν₀ξ²/2)`, and
//! hyperpriors `β ~ N(μ₀, Λ₀)`, `Σ ~ IW(n₀, S₀)`, `ξ² ~ G(a₀, b₀)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{GroupedDataset, SuffStats};
use crate::distributions::{CanonicalGaussian, GammaDist, InvGammaDist, InvWishartDist};
use crate::draws::{
    dataset_loglik, order_invariant_mean, ModelState, PosteriorDraws, RunMeta, Sampler, Schedule, StateDims,
};
use crate::elicitation::Hyperparams;
use crate::linalg::spd_inverse;
use crate::lrm::{regression_conditional, GaussianPrior};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HlrmState {
    pub beta_groups: Vec<DVector<f64>>,
    pub sigma2_groups: Vec<f64>,
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub xi2: f64,
}

impl ModelState for HlrmState {
    fn coefficients(&self, group: usize) -> &DVector<f64> {
        &self.beta_groups[group]
    }

    fn variance(&self, group: usize) -> f64 {
        self.sigma2_groups[group]
    }

    fn flat_len(dims: &StateDims) -> usize {
        dims.m * dims.p + dims.m + dims.p + dims.p * dims.p + 1
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        for b in &self.beta_groups {
            out.extend(b.iter());
        }
        out.extend(&self.sigma2_groups);
        out.extend(self.beta.iter());
        out.extend(self.sigma.iter());
        out.push(self.xi2);
    }

    fn read_flat(dims: &StateDims, values: &[f64]) -> Result<Self> {
        if values.len() != Self::flat_len(dims) {
            return Err(Error::Format("hierarchical state has the wrong width".into()));
        }
        let (p, m) = (dims.p, dims.m);
        let mut rest = values;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        let beta_groups = (0..m).map(|_| DVector::from_column_slice(take(p))).collect();
        let sigma2_groups = take(m).to_vec();
        let beta = DVector::from_column_slice(take(p));
        let sigma = DMatrix::from_column_slice(p, p, take(p * p));
        let xi2 = take(1)[0];
        Ok(Self {
            beta_groups,
            sigma2_groups,
            beta,
            sigma,
            xi2,
        })
    }

    fn summary_names(dims: &StateDims, coefficient_names: &[String], group_ids: &[String]) -> Vec<String> {
        let mut names = Vec::new();
        for g in group_ids {
            names.extend(coefficient_names.iter().map(|c| format!("beta[{g}][{c}]")));
        }
        names.extend(group_ids.iter().map(|g| format!("sigma2[{g}]")));
        names.extend(coefficient_names.iter().map(|c| format!("beta[{c}]")));
        for j in 0..dims.p {
            for i in 0..dims.p {
                names.push(format!("Sigma[{},{}]", i + 1, j + 1));
            }
        }
        names.push("xi2".into());
        names
    }

    fn summary_values(&self, out: &mut Vec<f64>) {
        self.write_flat(out);
    }

    fn plug_in(states: &[Self]) -> Option<Self> {
        let first = states.first()?;
        let mut flat = Vec::new();
        let rows: Vec<Vec<f64>> = states
            .iter()
            .map(|s| {
                flat.clear();
                s.write_flat(&mut flat);
                flat.clone()
            })
            .collect();
        let width = rows[0].len();
        let mean: Vec<f64> = (0..width)
            .map(|c| order_invariant_mean(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
            .collect();
        let dims = StateDims {
            p: first.beta.len(),
            m: first.beta_groups.len(),
            k: 0,
        };
        Self::read_flat(&dims, &mean).ok()
    }
}

/// `β_j | rest ~ N((Σ⁻¹ + σ_j⁻²X_jᵀX_j)⁻¹(Σ⁻¹β + σ_j⁻²X_jᵀy_j), (Σ⁻¹ + σ_j⁻²X_jᵀX_j)⁻¹)`.
///
/// An empty group gives back `N(β, Σ)`.
pub fn fcd_beta_group(
    stats: &SuffStats,
    sigma2: f64,
    beta: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
) -> CanonicalGaussian {
    regression_conditional(sigma_inv, &(sigma_inv * beta), stats, sigma2)
}

/// `β | rest ~ N((Λ₀⁻¹ + mΣ⁻¹)⁻¹(Λ₀⁻¹μ₀ + Σ⁻¹Σ_j β_j), (Λ₀⁻¹ + mΣ⁻¹)⁻¹)`,
/// where the sum runs over `members`.
pub fn fcd_beta_pop<'a>(
    members: impl IntoIterator<Item = &'a DVector<f64>>,
    prior: &GaussianPrior,
    sigma_inv: &DMatrix<f64>,
) -> CanonicalGaussian {
    let p = prior.mean.len();
    let mut sum = DVector::zeros(p);
    let mut count = 0usize;
    for b in members {
        sum += b;
        count += 1;
    }
    CanonicalGaussian {
        precision: &prior.precision + sigma_inv * count as f64,
        shift: &prior.shift + sigma_inv * sum,
    }
}

/// `Σ | rest ~ IW(n₀ + m, S₀ + Σ_j (β_j − β)(β_j − β)ᵀ)`.
pub fn fcd_sigma<'a>(
    members: impl IntoIterator<Item = &'a DVector<f64>>,
    beta: &DVector<f64>,
    n0: f64,
    s0: &DMatrix<f64>,
) -> Result<InvWishartDist> {
    let mut scale = s0.clone();
    let mut count = 0usize;
    for b in members {
        let d = b - beta;
        scale += &d * d.transpose();
        count += 1;
    }
    InvWishartDist::new(n0 + count as f64, scale)
}

/// `σ_j² | rest ~ IG((ν₀ + n_j)/2, (ν₀ξ² + RSS_j)/2)`.
pub fn fcd_sigma2_group(residual_ss: f64, n: usize, nu0: f64, xi2: f64) -> Result<InvGammaDist> {
    InvGammaDist::new((nu0 + n as f64) / 2.0, (nu0 * xi2 + residual_ss) / 2.0)
}

/// `ξ² | rest ~ G(a₀ + mν₀/2, b₀ + (ν₀/2) Σ_j σ_j⁻²)`.
pub fn fcd_xi2<'a>(
    sigma2s: impl IntoIterator<Item = &'a f64>,
    a0: f64,
    b0: f64,
    nu0: f64,
) -> Result<GammaDist> {
    let mut inv_sum = 0.0;
    let mut count = 0usize;
    for s in sigma2s {
        inv_sum += 1.0 / s;
        count += 1;
    }
    GammaDist::new(a0 + count as f64 * nu0 / 2.0, b0 + nu0 / 2.0 * inv_sum)
}

/// `E[Σ]` under the prior when it exists, otherwise `S₀` itself.
pub(crate) fn initial_sigma(hyper: &Hyperparams) -> DMatrix<f64> {
    let p = hyper.p() as f64;
    if hyper.n0 > p + 1.0 {
        &hyper.s0 / (hyper.n0 - p - 1.0)
    } else {
        hyper.s0.clone()
    }
}

/// Default starting point: every `β_j` and `β` at `μ₀`, every `σ_j²` and
/// `ξ²` at `σ₀²`, and `Σ` at its prior mean.
pub fn initial_state(ds: &GroupedDataset, hyper: &Hyperparams) -> HlrmState {
    HlrmState {
        beta_groups: vec![hyper.mu0.clone(); ds.m()],
        sigma2_groups: vec![hyper.sigma2_0; ds.m()],
        beta: hyper.mu0.clone(),
        sigma: initial_sigma(hyper),
        xi2: hyper.sigma2_0,
    }
}

pub fn gibbs_hlrm<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    hyper: &Hyperparams,
    schedule: Schedule,
    seed: u64,
    rng: &mut R,
) -> Result<PosteriorDraws<HlrmState>> {
    gibbs_hlrm_from(ds, hyper, schedule, seed, initial_state(ds, hyper), rng)
}

/// Gibbs sweeps in the order `β_j`, `β`, `Σ`, `σ_j²`, `ξ²`.
pub fn gibbs_hlrm_from<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    hyper: &Hyperparams,
    schedule: Schedule,
    seed: u64,
    init: HlrmState,
    rng: &mut R,
) -> Result<PosteriorDraws<HlrmState>> {
    schedule.validate()?;
    hyper.validate()?;
    if init.beta_groups.len() != ds.m() || init.sigma2_groups.len() != ds.m() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} groups, dataset has {}",
            init.beta_groups.len(),
            ds.m()
        )));
    }
    let prior = GaussianPrior::from_covariance(hyper.mu0.clone(), &hyper.lambda0, "Lambda0")?;
    let stats: Vec<SuffStats> = ds.groups().iter().map(|g| g.suff_stats()).collect();
    let mut s = init;
    let mut draws = PosteriorDraws::new(RunMeta {
        sampler: Sampler::Hlrm,
        seed,
        schedule,
    });
    for sweep in 1..=schedule.iterations {
        let sigma_inv = spd_inverse(&s.sigma, "Sigma")?;
        for (j, st) in stats.iter().enumerate() {
            s.beta_groups[j] = fcd_beta_group(st, s.sigma2_groups[j], &s.beta, &sigma_inv).sample(rng)?;
        }
        s.beta = fcd_beta_pop(&s.beta_groups, &prior, &sigma_inv).sample(rng)?;
        s.sigma = fcd_sigma(&s.beta_groups, &s.beta, hyper.n0, &hyper.s0)?.sample(rng)?;
        for (j, g) in ds.groups().iter().enumerate() {
            let rss = g.residual_ss(&s.beta_groups[j]);
            s.sigma2_groups[j] = fcd_sigma2_group(rss, g.len(), hyper.nu0, s.xi2)?.sample(rng);
        }
        s.xi2 = fcd_xi2(&s.sigma2_groups, hyper.a0, hyper.b0, hyper.nu0)?.sample(rng);
        if schedule.keeps(sweep) {
            let ll = dataset_loglik(ds, &s);
            draws.push(s.clone(), ll);
        }
    }
    Ok(draws)
}
