//! Label-invariant summaries of sampled partitions: the distribution of the
//! number of occupied clusters, the co-clustering (incidence) matrix, a
//! Binder-loss point estimate and per-cluster regression refits.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chlrm::ChlrmState;
use crate::data::{GroupedDataset, SuffStats};
use crate::elicitation::Hyperparams;
use crate::linalg::qr_least_squares;
use crate::lrm::{regression_conditional, GaussianPrior};
use crate::{Error, Result};

/// Cluster assignments of every kept draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDraws {
    pub gammas: Vec<Vec<usize>>,
    pub k: usize,
}

impl PartitionDraws {
    pub fn new(gammas: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let m = gammas.first().map_or(0, Vec::len);
        if gammas.iter().any(|g| g.len() != m || g.iter().any(|&c| c >= k)) {
            return Err(Error::DimensionMismatch("partition draws have inconsistent shape".into()));
        }
        Ok(Self { gammas, k })
    }

    pub fn from_states(states: &[ChlrmState]) -> Result<Self> {
        let k = states.first().map_or(0, ChlrmState::k);
        Self::new(states.iter().map(|s| s.gamma.clone()).collect(), k)
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn m(&self) -> usize {
        self.gammas.first().map_or(0, Vec::len)
    }

    /// Number of occupied clusters in each draw.
    pub fn k_stars(&self) -> Vec<usize> {
        self.gammas.iter().map(|g| occupied(g)).collect()
    }
}

fn occupied(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// `Pr(K* = k)` for `k = 1..=K`, entry `k − 1`.
pub fn k_star_posterior(draws: &PartitionDraws) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut counts = vec![0usize; draws.k.max(1)];
    for ks in draws.k_stars() {
        counts[ks - 1] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / draws.len() as f64).collect())
}

/// Most probable `K*`; the smallest one on ties.
pub fn k_star_mode(posterior: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in posterior.iter().enumerate() {
        if p > posterior[best] {
            best = i;
        }
    }
    best + 1
}

/// `a_{j,j'} = Pr(γ_j = γ_{j'} | y)` by draw frequency. Symmetric with unit
/// diagonal.
pub fn incidence(draws: &PartitionDraws) -> Result<DMatrix<f64>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let m = draws.m();
    let mut counts = vec![0usize; m * m];
    for g in &draws.gammas {
        for j in 0..m {
            for l in (j + 1)..m {
                if g[j] == g[l] {
                    counts[j * m + l] += 1;
                }
            }
        }
    }
    let b = draws.len() as f64;
    Ok(DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, c) = if i < j { (i, j) } else { (j, i) };
            counts[a * m + c] as f64 / b
        }
    }))
}

/// Expected pairwise loss of `labels`:
/// `Σ_{j<j'} c·a_{jj'}·1(apart) + (1 − c)(1 − a_{jj'})·1(together)`.
pub fn binder_loss(labels: &[usize], incidence: &DMatrix<f64>, cost_ratio: f64) -> f64 {
    let m = labels.len();
    let mut loss = 0.0;
    for j in 0..m {
        for l in (j + 1)..m {
            let a = incidence[(j, l)];
            loss += if labels[j] == labels[l] {
                (1.0 - cost_ratio) * (1.0 - a)
            } else {
                cost_ratio * a
            };
        }
    }
    loss
}

/// Relabel so clusters are numbered `1, 2, …` in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() + 1;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionEstimate {
    /// One-based canonical labels.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Kept draw the estimate was taken from.
    pub draw_index: usize,
    pub loss: f64,
}

impl PartitionEstimate {
    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    /// Group indices ordered so that clusters are contiguous.
    pub fn display_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.labels.len()).collect();
        order.sort_by_key(|&j| (self.labels[j], j));
        order
    }
}

/// The sampled partition with least [`binder_loss`]; the earliest draw wins
/// ties.
pub fn point_partition(incidence: &DMatrix<f64>, draws: &PartitionDraws, cost_ratio: f64) -> Result<PartitionEstimate> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if !(cost_ratio > 0.0 && cost_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("cost ratio must lie in (0, 1), got {cost_ratio}")));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut scored: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (i, g) in draws.gammas.iter().enumerate() {
        let canon = canonical_labels(g);
        let loss = *scored
            .entry(canon)
            .or_insert_with_key(|c| binder_loss(c, incidence, cost_ratio));
        if best.is_none_or(|(_, l)| loss < l) {
            best = Some((i, loss));
        }
    }
    let (draw_index, loss) = best.expect("nonempty draws");
    let labels = canonical_labels(&draws.gammas[draw_index]);
    let k = labels.iter().copied().max().unwrap_or(0);
    let mut sizes = vec![0; k];
    for &l in &labels {
        sizes[l - 1] += 1;
    }
    Ok(PartitionEstimate {
        labels,
        sizes,
        draw_index,
        loss,
    })
}

/// Regression line fitted to the pooled rows of one estimated cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefitLine {
    pub cluster: usize,
    pub groups: Vec<String>,
    pub n: usize,
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
}

/// Conjugate posterior mean of each estimated cluster's coefficients under
/// `N(μ₀, Λ₀)`, with `σ²` fixed at the cluster's least-squares residual
/// variance (or `σ₀²` when the cluster has at most `p` rows).
pub fn refit_lines(ds: &GroupedDataset, estimate: &PartitionEstimate, hyper: &Hyperparams) -> Result<Vec<RefitLine>> {
    let prior = GaussianPrior::from_covariance(hyper.mu0.clone(), &hyper.lambda0, "Lambda0")?;
    let p = ds.p();
    let ids = ds.group_ids();
    (1..=estimate.clusters())
        .map(|c| {
            let members: Vec<usize> = (0..ds.m()).filter(|&j| estimate.labels[j] == c).collect();
            let mut stats = SuffStats::zeros(p);
            for &j in &members {
                stats.add_assign(&ds.group(j).suff_stats());
            }
            let n = stats.n;
            let sigma2 = if n > p {
                let mut x = DMatrix::zeros(n, p);
                let mut y = DVector::zeros(n);
                let mut r = 0;
                for &j in &members {
                    let g = ds.group(j);
                    x.rows_mut(r, g.len()).copy_from(&g.x);
                    y.rows_mut(r, g.len()).copy_from(&g.y);
                    r += g.len();
                }
                match qr_least_squares(&x, &y) {
                    Ok(ls) if ls.residual_ss > 0.0 => ls.residual_ss / (n - p) as f64,
                    _ => hyper.sigma2_0,
                }
            } else {
                hyper.sigma2_0
            };
            let mean = regression_conditional(&prior.precision, &prior.shift, &stats, sigma2).mean()?;
            Ok(RefitLine {
                cluster: c,
                groups: members.iter().map(|&j| ids[j].clone()).collect(),
                n,
                coefficients: mean.iter().copied().collect(),
                sigma2,
            })
        })
        .collect()
}

pub fn write_incidence_csv<W: Write>(incidence: &DMatrix<f64>, ids: &[String], order: &[usize], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["group".to_string()];
    header.extend(order.iter().map(|&j| ids[j].clone()));
    out.write_record(&header)?;
    for &i in order {
        let mut row = vec![ids[i].clone()];
        row.extend(order.iter().map(|&j| incidence[(i, j)].to_string()));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<incidence>", e))
}

pub fn write_k_star_csv<W: Write>(posterior: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k_star", "probability"])?;
    for (i, p) in posterior.iter().enumerate() {
        out.write_record([(i + 1).to_string(), p.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<k_star>", e))
}

pub fn write_refit_csv<W: Write>(lines: &[RefitLine], coefficient_names: &[String], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["cluster".to_string(), "n".into(), "groups".into()];
    header.extend(coefficient_names.iter().cloned());
    header.push("sigma2".into());
    out.write_record(&header)?;
    for l in lines {
        let mut row = vec![l.cluster.to_string(), l.n.to_string(), l.groups.join(";")];
        row.extend(l.coefficients.iter().map(f64::to_string));
        row.push(l.sigma2.to_string());
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<refit>", e))
}

/// `{group id: cluster}` map of the point estimate.
pub fn partition_map(ids: &[String], estimate: &PartitionEstimate) -> BTreeMap<String, usize> {
    ids.iter().cloned().zip(estimate.labels.iter().copied()).collect()
}
