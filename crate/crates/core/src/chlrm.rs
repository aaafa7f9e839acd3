//! Clustering hierarchical regression: a finite mixture of `K` regression
//! lines over groups. Group `j` belongs to cluster `γ_j ~ Cat(ω)` with
//! `ω ~ Dir(α₀)`; cluster parameters follow the hierarchical priors of
//! [`crate::hlrm`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{Group, GroupedDataset, SuffStats};
use crate::distributions::{
    categorical_sample, CanonicalGaussian, DirichletDist, GammaDist, InvGammaDist, InvWishartDist,
};
use crate::draws::{dataset_loglik, ModelState, PosteriorDraws, RunMeta, Sampler, Schedule, StateDims};
use crate::elicitation::Hyperparams;
use crate::hlrm::{fcd_beta_group, fcd_beta_pop, fcd_sigma, fcd_sigma2_group, fcd_xi2, initial_sigma};
use crate::linalg::{pseudo_least_squares, spd_inverse};
use crate::lrm::GaussianPrior;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChlrmState {
    /// Zero-based cluster of each group.
    pub gamma: Vec<usize>,
    pub omega: Vec<f64>,
    pub beta_clusters: Vec<DVector<f64>>,
    pub sigma2_clusters: Vec<f64>,
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub xi2: f64,
}

impl ChlrmState {
    pub fn k(&self) -> usize {
        self.omega.len()
    }

    /// Groups per cluster.
    pub fn counts(&self) -> Vec<usize> {
        group_counts(&self.gamma, self.k())
    }

    /// Number of non-empty clusters `K*`.
    pub fn k_star(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }
}

pub fn group_counts(gamma: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &g in gamma {
        counts[g] += 1;
    }
    counts
}

impl ModelState for ChlrmState {
    fn coefficients(&self, group: usize) -> &DVector<f64> {
        &self.beta_clusters[self.gamma[group]]
    }

    fn variance(&self, group: usize) -> f64 {
        self.sigma2_clusters[self.gamma[group]]
    }

    fn flat_len(dims: &StateDims) -> usize {
        dims.m + dims.k + dims.k * dims.p + dims.k + dims.p + dims.p * dims.p + 1
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.gamma.iter().map(|&g| g as f64));
        out.extend(&self.omega);
        for b in &self.beta_clusters {
            out.extend(b.iter());
        }
        out.extend(&self.sigma2_clusters);
        out.extend(self.beta.iter());
        out.extend(self.sigma.iter());
        out.push(self.xi2);
    }

    fn read_flat(dims: &StateDims, values: &[f64]) -> Result<Self> {
        if values.len() != Self::flat_len(dims) {
            return Err(Error::Format("clustering state has the wrong width".into()));
        }
        let (p, m, k) = (dims.p, dims.m, dims.k);
        let mut rest = values;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        let gamma: Vec<usize> = take(m).iter().map(|&g| g as usize).collect();
        if gamma.iter().any(|&g| g >= k) {
            return Err(Error::Format("cluster label out of range".into()));
        }
        let omega = take(k).to_vec();
        let beta_clusters = (0..k).map(|_| DVector::from_column_slice(take(p))).collect();
        let sigma2_clusters = take(k).to_vec();
        let beta = DVector::from_column_slice(take(p));
        let sigma = DMatrix::from_column_slice(p, p, take(p * p));
        let xi2 = take(1)[0];
        Ok(Self {
            gamma,
            omega,
            beta_clusters,
            sigma2_clusters,
            beta,
            sigma,
            xi2,
        })
    }

    /// Cluster-labelled parameters are not identified, so only the
    /// population-level quantities and `K*` are summarized.
    fn summary_names(dims: &StateDims, coefficient_names: &[String], _group_ids: &[String]) -> Vec<String> {
        let mut names: Vec<String> = coefficient_names.iter().map(|c| format!("beta[{c}]")).collect();
        for j in 0..dims.p {
            for i in 0..dims.p {
                names.push(format!("Sigma[{},{}]", i + 1, j + 1));
            }
        }
        names.push("xi2".into());
        names.push("K*".into());
        names
    }

    fn summary_values(&self, out: &mut Vec<f64>) {
        out.extend(self.beta.iter());
        out.extend(self.sigma.iter());
        out.push(self.xi2);
        out.push(self.k_star() as f64);
    }

    fn plug_in(_states: &[Self]) -> Option<Self> {
        None
    }
}

/// `log ω_k + Σ_i log N(y_{i,j} | x_{i,j}ᵀβ_k, σ_k²)` for every `k`.
pub fn fcd_gamma_log_weights(
    group: &Group,
    omega: &[f64],
    beta_clusters: &[DVector<f64>],
    sigma2_clusters: &[f64],
) -> Vec<f64> {
    let n = group.len() as f64;
    omega
        .iter()
        .zip(beta_clusters.iter().zip(sigma2_clusters))
        .map(|(w, (b, s2))| {
            let ll = if group.is_empty() {
                0.0
            } else {
                -0.5 * n * (std::f64::consts::TAU * s2).ln() - group.residual_ss(b) / (2.0 * s2)
            };
            w.ln() + ll
        })
        .collect()
}

/// Draw `γ_j` with `Pr(γ_j = k | rest) ∝ ω_k Π_i N(y_{i,j} | x_{i,j}ᵀβ_k, σ_k²)`.
pub fn fcd_gamma<R: Rng + ?Sized>(
    group: &Group,
    omega: &[f64],
    beta_clusters: &[DVector<f64>],
    sigma2_clusters: &[f64],
    rng: &mut R,
) -> Result<usize> {
    categorical_sample(&fcd_gamma_log_weights(group, omega, beta_clusters, sigma2_clusters), rng)
}

/// `ω | rest ~ Dir(α₀₁ + n₁, …, α₀K + n_K)` with `n_k` counting groups.
pub fn fcd_omega(gamma: &[usize], alpha0: &[f64]) -> Result<DirichletDist> {
    let counts = group_counts(gamma, alpha0.len());
    DirichletDist::new(alpha0.iter().zip(&counts).map(|(a, &c)| a + c as f64).collect())
}

/// Stacked sufficient statistics of the groups assigned to cluster `k`.
pub fn cluster_stats(k: usize, gamma: &[usize], group_stats: &[SuffStats]) -> SuffStats {
    let p = group_stats.first().map_or(0, |s| s.xty.len());
    let mut out = SuffStats::zeros(p);
    for (s, _) in group_stats.iter().zip(gamma).filter(|(_, &g)| g == k) {
        out.add_assign(s);
    }
    out
}

/// `β_k | rest`: the group update on the rows of all member groups. An empty
/// cluster gives back `N(β, Σ)`.
pub fn fcd_beta_cluster(
    stats: &SuffStats,
    sigma2: f64,
    beta: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
) -> CanonicalGaussian {
    fcd_beta_group(stats, sigma2, beta, sigma_inv)
}

fn active<'a, T>(items: &'a [T], counts: &'a [usize]) -> impl Iterator<Item = &'a T> + 'a {
    items.iter().zip(counts).filter(|(_, &c)| c > 0).map(|(v, _)| v)
}

/// `β | rest ~ N((Λ₀⁻¹ + K*Σ⁻¹)⁻¹(Λ₀⁻¹μ₀ + Σ⁻¹Σ_{k: n_k>0} β_k), …)`.
pub fn fcd_beta_pop_clustered(
    beta_clusters: &[DVector<f64>],
    counts: &[usize],
    prior: &GaussianPrior,
    sigma_inv: &DMatrix<f64>,
) -> CanonicalGaussian {
    fcd_beta_pop(active(beta_clusters, counts), prior, sigma_inv)
}

/// `Σ | rest ~ IW(n₀ + K*, S₀ + Σ_{k: n_k>0} (β_k − β)(β_k − β)ᵀ)`.
pub fn fcd_sigma_clustered(
    beta_clusters: &[DVector<f64>],
    counts: &[usize],
    beta: &DVector<f64>,
    n0: f64,
    s0: &DMatrix<f64>,
) -> Result<InvWishartDist> {
    fcd_sigma(active(beta_clusters, counts), beta, n0, s0)
}

/// `σ_k² | rest ~ IG((ν₀ + n_k)/2, (ν₀ξ² + RSS_k)/2)` where `n_k` counts the
/// observations of the member groups; `IG(ν₀/2, ν₀ξ²/2)` when empty.
pub fn fcd_sigma2_cluster(residual_ss: f64, n_obs: usize, nu0: f64, xi2: f64) -> Result<InvGammaDist> {
    fcd_sigma2_group(residual_ss, n_obs, nu0, xi2)
}

/// `ξ² | rest ~ G(a₀ + K*ν₀/2, b₀ + (ν₀/2) Σ_{k: n_k>0} σ_k⁻²)`.
pub fn fcd_xi2_clustered(sigma2_clusters: &[f64], counts: &[usize], a0: f64, b0: f64, nu0: f64) -> Result<GammaDist> {
    fcd_xi2(active(sigma2_clusters, counts), a0, b0, nu0)
}

/// Starting partition: every group alone when `K ≥ m`, otherwise groups
/// ranked by their own least-squares slope (last coefficient) and cut into
/// `K` bins of near-equal size.
pub fn initial_partition(ds: &GroupedDataset, k: usize) -> Vec<usize> {
    let m = ds.m();
    if k >= m {
        return (0..m).collect();
    }
    let p = ds.p();
    let slopes: Vec<f64> = ds
        .groups()
        .iter()
        .map(|g| pseudo_least_squares(&g.x, &g.y)[p - 1])
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| slopes[a].total_cmp(&slopes[b]).then(a.cmp(&b)));
    let mut gamma = vec![0; m];
    for (rank, &j) in order.iter().enumerate() {
        gamma[j] = rank * k / m;
    }
    gamma
}

/// Default starting state: [`initial_partition`], each `β_k` at the
/// least-squares fit of its member rows (`μ₀` when it has none), `σ_k²` and
/// `ξ²` at `σ₀²`, `ω` at its prior mean, `β = μ₀`, `Σ` at its prior mean.
pub fn initial_state(ds: &GroupedDataset, hyper: &Hyperparams) -> Result<ChlrmState> {
    let alpha0 = hyper
        .alpha0
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("clustering model needs alpha0".into()))?;
    let k = alpha0.len();
    let gamma = initial_partition(ds, k);
    let beta_clusters = (0..k)
        .map(|c| {
            let members: Vec<&Group> = ds
                .groups()
                .iter()
                .zip(&gamma)
                .filter(|(_, &g)| g == c)
                .map(|(grp, _)| grp)
                .collect();
            let n: usize = members.iter().map(|g| g.len()).sum();
            if n == 0 {
                return hyper.mu0.clone();
            }
            let mut x = DMatrix::zeros(n, ds.p());
            let mut y = DVector::zeros(n);
            let mut r = 0;
            for g in members {
                x.rows_mut(r, g.len()).copy_from(&g.x);
                y.rows_mut(r, g.len()).copy_from(&g.y);
                r += g.len();
            }
            pseudo_least_squares(&x, &y)
        })
        .collect();
    let total: f64 = alpha0.iter().sum();
    Ok(ChlrmState {
        gamma,
        omega: alpha0.iter().map(|a| a / total).collect(),
        beta_clusters,
        sigma2_clusters: vec![hyper.sigma2_0; k],
        beta: hyper.mu0.clone(),
        sigma: initial_sigma(hyper),
        xi2: hyper.sigma2_0,
    })
}

/// Run with `K = alpha0.len()` from [`initial_state`].
pub fn gibbs_chlrm<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    hyper: &Hyperparams,
    schedule: Schedule,
    seed: u64,
    rng: &mut R,
) -> Result<PosteriorDraws<ChlrmState>> {
    gibbs_chlrm_from(ds, hyper, schedule, seed, initial_state(ds, hyper)?, rng)
}

/// Gibbs sweeps in the order `γ`, `ω`, `β_k`, `β`, `Σ`, `σ_k²`, `ξ²`.
pub fn gibbs_chlrm_from<R: Rng + ?Sized>(
    ds: &GroupedDataset,
    hyper: &Hyperparams,
    schedule: Schedule,
    seed: u64,
    init: ChlrmState,
    rng: &mut R,
) -> Result<PosteriorDraws<ChlrmState>> {
    schedule.validate()?;
    hyper.validate()?;
    let alpha0 = hyper
        .alpha0
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("clustering model needs alpha0".into()))?;
    let k = alpha0.len();
    if init.gamma.len() != ds.m()
        || init.k() != k
        || init.beta_clusters.len() != k
        || init.sigma2_clusters.len() != k
        || init.gamma.iter().any(|&g| g >= k)
    {
        return Err(Error::DimensionMismatch(format!(
            "initial state does not match {} groups and K = {k}",
            ds.m()
        )));
    }
    let prior = GaussianPrior::from_covariance(hyper.mu0.clone(), &hyper.lambda0, "Lambda0")?;
    let group_stats: Vec<SuffStats> = ds.groups().iter().map(|g| g.suff_stats()).collect();
    let mut s = init;
    let mut draws = PosteriorDraws::new(RunMeta {
        sampler: Sampler::Chlrm,
        seed,
        schedule,
    });
    for sweep in 1..=schedule.iterations {
        for (j, g) in ds.groups().iter().enumerate() {
            s.gamma[j] = fcd_gamma(g, &s.omega, &s.beta_clusters, &s.sigma2_clusters, rng)?;
        }
        s.omega = fcd_omega(&s.gamma, alpha0)?.sample(rng);
        let counts = group_counts(&s.gamma, k);
        let sigma_inv = spd_inverse(&s.sigma, "Sigma")?;
        for c in 0..k {
            let st = cluster_stats(c, &s.gamma, &group_stats);
            s.beta_clusters[c] = fcd_beta_cluster(&st, s.sigma2_clusters[c], &s.beta, &sigma_inv).sample(rng)?;
        }
        s.beta = fcd_beta_pop_clustered(&s.beta_clusters, &counts, &prior, &sigma_inv).sample(rng)?;
        s.sigma = fcd_sigma_clustered(&s.beta_clusters, &counts, &s.beta, hyper.n0, &hyper.s0)?.sample(rng)?;
        for c in 0..k {
            let mut rss = 0.0;
            let mut n_obs = 0;
            for (g, _) in ds.groups().iter().zip(&s.gamma).filter(|(_, &gc)| gc == c) {
                rss += g.residual_ss(&s.beta_clusters[c]);
                n_obs += g.len();
            }
            s.sigma2_clusters[c] = fcd_sigma2_cluster(rss, n_obs, hyper.nu0, s.xi2)?.sample(rng);
        }
        s.xi2 = fcd_xi2_clustered(&s.sigma2_clusters, &counts, hyper.a0, hyper.b0, hyper.nu0)?.sample(rng);
        if schedule.keeps(sweep) {
            let ll = dataset_loglik(ds, &s);
            draws.push(s.clone(), ll);
        }
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::seeded_rng;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn one_obs(y: f64) -> Group {
        Group {
            id: "g".into(),
            y: dvector![y],
            x: dmatrix![1.0],
        }
    }

    #[test]
    fn gamma_hand_log_odds() {
        let g = one_obs(0.0);
        let betas = [dvector![0.0], dvector![10.0]];
        let w = fcd_gamma_log_weights(&g, &[0.5, 0.5], &betas, &[1.0, 1.0]);
        assert_abs_diff_eq!(w[0] - w[1], 50.0, epsilon = 1e-12);
        let mut rng = seeded_rng(1);
        assert!((0..100_000).all(|_| fcd_gamma(&g, &[0.5, 0.5], &betas, &[1.0, 1.0], &mut rng).unwrap() == 0));
    }

    #[test]
    fn zero_weight_cluster_never_chosen() {
        let g = one_obs(10.0);
        let betas = [dvector![0.0], dvector![10.0]];
        let mut rng = seeded_rng(2);
        assert!((0..1000).all(|_| fcd_gamma(&g, &[1.0, 0.0], &betas, &[1.0, 1.0], &mut rng).unwrap() == 0));
    }

    #[test]
    fn identical_clusters_follow_omega() {
        let g = one_obs(0.3);
        let betas = [dvector![1.0], dvector![1.0]];
        let mut rng = seeded_rng(3);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| fcd_gamma(&g, &[0.3, 0.7], &betas, &[2.0, 2.0], &mut rng).unwrap() == 0)
            .count();
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 3.0 * se);
    }

    #[test]
    fn omega_conditional() {
        let d = fcd_omega(&[0, 0], &[0.5, 0.5]).unwrap();
        assert_eq!(d.alpha, vec![2.5, 0.5]);
        let mut rng = seeded_rng(4);
        let n = 100_000;
        let first: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)[0]).collect();
        let mean = first.iter().sum::<f64>() / n as f64;
        // Beta(2.5, 0.5) variance
        let var = 2.5 * 0.5 / (3.0f64.powi(2) * 4.0);
        assert!((mean - 5.0 / 6.0).abs() < 3.0 * (var / n as f64).sqrt());
        let d = fcd_omega(&[1, 1, 1, 1], &[0.2, 0.3, 0.4]).unwrap();
        assert_eq!(d.alpha, vec![0.2, 4.3, 0.4]);
    }

    #[test]
    fn cluster_conditional_matches_merged_group() {
        let a = Group { id: "a".into(), y: dvector![1.0, 2.0], x: dmatrix![1.0, 0.0; 1.0, 1.0] };
        let b = Group { id: "b".into(), y: dvector![4.0], x: dmatrix![1.0, 3.0] };
        let merged = Group {
            id: "ab".into(),
            y: dvector![1.0, 2.0, 4.0],
            x: dmatrix![1.0, 0.0; 1.0, 1.0; 1.0, 3.0],
        };
        let stats = [a.suff_stats(), b.suff_stats()];
        let st = cluster_stats(0, &[0, 0], &stats);
        let si = DMatrix::identity(2, 2);
        let beta = dvector![0.5, 0.5];
        let lhs = fcd_beta_cluster(&st, 1.5, &beta, &si);
        let rhs = fcd_beta_cluster(&merged.suff_stats(), 1.5, &beta, &si);
        assert!((lhs.precision - rhs.precision).amax() < 1e-12);
        assert!((lhs.shift - rhs.shift).amax() < 1e-12);
    }

    #[test]
    fn cluster_conditional_hand_update() {
        let st = one_obs(2.0).suff_stats();
        let post = fcd_beta_cluster(&st, 1.0, &dvector![0.0], &dmatrix![1.0]);
        assert_abs_diff_eq!(post.mean().unwrap()[0], 1.0);
        assert_abs_diff_eq!(post.covariance().unwrap()[(0, 0)], 0.5);
        let empty = cluster_stats(1, &[0], &[st]);
        let post = fcd_beta_cluster(&empty, 1.0, &dvector![3.0], &dmatrix![2.0]);
        assert_abs_diff_eq!(post.mean().unwrap()[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.covariance().unwrap()[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn population_uses_active_clusters_only() {
        let prior = GaussianPrior::from_covariance(dvector![0.0], &dmatrix![1.0], "Lambda0").unwrap();
        let betas = [dvector![3.0], dvector![100.0]];
        let post = fcd_beta_pop_clustered(&betas, &[4, 0], &prior, &dmatrix![1.0]);
        assert_abs_diff_eq!(post.mean().unwrap()[0], 1.5);
        assert_abs_diff_eq!(post.covariance().unwrap()[(0, 0)], 0.5);
        let d = fcd_sigma_clustered(&betas, &[4, 0], &dvector![2.0], 3.0, &dmatrix![1.0]).unwrap();
        assert_eq!((d.df, d.scale[(0, 0)]), (4.0, 2.0));
        let x = fcd_xi2_clustered(&[1.0, 2.0, 5.0], &[1, 2, 0], 1.0, 1.0, 1.0).unwrap();
        assert_eq!((x.shape, x.rate), (2.0, 1.75));
    }

    #[test]
    fn variance_conditional_counts_observations() {
        let d = fcd_sigma2_cluster(0.0, 0, 1.0, 1.0).unwrap();
        assert_eq!((d.shape, d.rate), (0.5, 0.5));
        let d = fcd_sigma2_cluster(2.0, 2, 1.0, 1.0).unwrap();
        assert_eq!((d.shape, d.rate), (1.5, 1.5));
        // two halves of a cluster: shape and rate increments add up
        let whole = fcd_sigma2_cluster(5.0, 7, 1.0, 1.0).unwrap();
        let a = fcd_sigma2_cluster(2.0, 3, 1.0, 1.0).unwrap();
        let b = fcd_sigma2_cluster(3.0, 4, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.shape + b.shape - 0.5, whole.shape);
        assert_abs_diff_eq!(a.rate + b.rate - 0.5, whole.rate);
    }

    #[test]
    fn flat_round_trip() {
        let s = ChlrmState {
            gamma: vec![0, 2, 2],
            omega: vec![0.2, 0.3, 0.5],
            beta_clusters: vec![dvector![1.0], dvector![2.0], dvector![3.0]],
            sigma2_clusters: vec![1.0, 2.0, 3.0],
            beta: dvector![0.5],
            sigma: dmatrix![1.5],
            xi2: 0.7,
        };
        let dims = StateDims { p: 1, m: 3, k: 3 };
        let mut flat = Vec::new();
        s.write_flat(&mut flat);
        assert_eq!(ChlrmState::read_flat(&dims, &flat).unwrap(), s);
        assert_eq!(s.k_star(), 2);
        assert_eq!(s.coefficients(1)[0], 3.0);
    }

    #[test]
    fn sweep_invariants_hold() {
        let ds = crate::synth::plant_analogue().0;
        let ols = crate::elicitation::ols_fit(&ds.stack()).unwrap();
        let h = crate::elicitation::elicit(&ds, &ols, crate::elicitation::ModelKind::Chlrm, None).unwrap();
        let d = gibbs_chlrm(&ds, &h, Schedule::new(200, 0, 1).unwrap(), 0, &mut seeded_rng(9)).unwrap();
        for s in &d.states {
            assert_eq!(s.counts().iter().sum::<usize>(), ds.m());
            assert!(s.k_star() >= 1);
            assert!((s.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.sigma2_clusters.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn initial_partition_bins_by_slope() {
        let ds = crate::synth::plant_analogue().0;
        assert_eq!(initial_partition(&ds, 24), (0..24).collect::<Vec<_>>());
        let g = initial_partition(&ds, 3);
        assert_eq!(group_counts(&g, 3), vec![8, 8, 8]);
    }
}
