//! Posterior predictive checks and information criteria.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::distributions::seeded_rng;
use crate::draws::{order_invariant_mean, ModelState, PointwiseLogLik, PosteriorDraws};
use crate::summary::{quantile_sorted, std_dev};
use crate::{Error, Result};

/// Test statistics used in the predictive checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
    Iqr,
    Sd,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Mean, Statistic::Median, Statistic::Iqr, Statistic::Sd];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::Iqr => "iqr",
            Statistic::Sd => "sd",
        }
    }

    pub fn compute(&self, values: &[f64]) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        self.compute_sorted(&sorted)
    }

    fn compute_sorted(&self, sorted: &[f64]) -> f64 {
        match self {
            Statistic::Mean => sorted.iter().sum::<f64>() / sorted.len() as f64,
            Statistic::Median => quantile_sorted(sorted, 0.5),
            Statistic::Iqr => quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25),
            Statistic::Sd => std_dev(sorted),
        }
    }
}

/// One replicated response vector (stacked, group-major) drawn from the
/// likelihood at `state`.
pub fn replicate_state<S: ModelState, R: Rng + ?Sized>(state: &S, ds: &GroupedDataset, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(ds.n_total());
    for (j, g) in ds.groups().iter().enumerate() {
        let sd = state.variance(j).sqrt();
        let fitted = &g.x * state.coefficients(j);
        for f in fitted.iter() {
            let z: f64 = StandardNormal.sample(rng);
            out.push(f + sd * z);
        }
    }
    out
}

/// One replicated dataset per draw.
pub fn replicate<S: ModelState, R: Rng + ?Sized>(states: &[S], ds: &GroupedDataset, rng: &mut R) -> Vec<Vec<f64>> {
    states.iter().map(|s| replicate_state(s, ds, rng)).collect()
}

/// `Pr(t(y_rep) > t(y))` estimated by counting, ties counted as one half.
pub fn ppp_from_stats(replicated: &[f64], observed: f64) -> f64 {
    let score: f64 = replicated
        .iter()
        .map(|&r| {
            if r > observed {
                1.0
            } else if r == observed {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    score / replicated.len() as f64
}

/// Mean over replicates and observations of `(y_rep − y)²`.
pub fn mse_replicated(replicates: &[Vec<f64>], y: &[f64]) -> f64 {
    let per_draw: Vec<f64> = replicates
        .iter()
        .map(|r| r.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
        .collect();
    order_invariant_mean(&per_draw)
}

/// `(DIC, p_DIC)` with `p_DIC = 2(log p(y|Θ̂) − mean log p(y|Θ))` and
/// `DIC = −2 log p(y|Θ̂) + 2 p_DIC`.
pub fn dic(loglik_hat: f64, per_draw: &[f64]) -> Result<(f64, f64)> {
    if per_draw.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let p_dic = 2.0 * (loglik_hat - order_invariant_mean(per_draw));
    Ok((-2.0 * loglik_hat + 2.0 * p_dic, p_dic))
}

/// `log(mean(exp(v)))`, shifted by the maximum and summed in sorted order.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let max = v.last().copied().unwrap_or(f64::NEG_INFINITY);
    if !max.is_finite() {
        return max;
    }
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// `(WAIC, p_WAIC)` with `lppd = Σ_i log mean_b p(y_i|Θ⁽ᵇ⁾)`,
/// `p_WAIC = 2 Σ_i (log mean_b p − mean_b log p)` and `WAIC = −2 lppd + 2 p_WAIC`.
pub fn waic(pointwise: &PointwiseLogLik) -> Result<(f64, f64)> {
    if pointwise.n_draws == 0 {
        return Err(Error::EmptyDraws);
    }
    let mut lppd = 0.0;
    let mut p = 0.0;
    for i in 0..pointwise.n_obs {
        let obs = pointwise.observation(i);
        let lme = log_mean_exp(obs);
        lppd += lme;
        // nonnegative by Jensen; clamp rounding noise
        p += 2.0 * (lme - order_invariant_mean(obs)).max(0.0);
    }
    Ok((-2.0 * lppd + 2.0 * p, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPpp {
    pub group: String,
    pub ppp: BTreeMap<Statistic, f64>,
}

/// Fit and adequacy measures of one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub model: String,
    pub draws: usize,
    pub mse: f64,
    pub ppp_global: BTreeMap<Statistic, f64>,
    pub ppp_local: Vec<LocalPpp>,
    pub dic: f64,
    pub p_dic: f64,
    pub waic: f64,
    pub p_waic: f64,
}

/// Log-likelihood at the DIC plug-in: the posterior mean state when the
/// model defines one, else the highest-likelihood kept draw.
pub fn plug_in_loglik<S: ModelState>(draws: &PosteriorDraws<S>, ds: &GroupedDataset) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    match S::plug_in(&draws.states) {
        Some(s) => Ok(crate::draws::dataset_loglik(ds, &s)),
        None => Ok(draws.loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    }
}

/// Run every check on a draw set. Replicates come from a generator seeded
/// with `seed`, one dataset per draw in draw order.
pub fn check<S: ModelState>(
    model: &str,
    draws: &PosteriorDraws<S>,
    ds: &GroupedDataset,
    seed: u64,
) -> Result<CheckReport> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let y = ds.stacked_response();
    let offsets: Vec<(usize, usize)> = {
        let mut start = 0;
        ds.groups()
            .iter()
            .map(|g| {
                let r = (start, start + g.len());
                start += g.len();
                r
            })
            .collect()
    };
    let observed_global: Vec<f64> = Statistic::ALL.iter().map(|s| s.compute(&y)).collect();
    let observed_local: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&(a, b)| Statistic::ALL.iter().map(|s| s.compute(&y[a..b])).collect())
        .collect();
    let mut global_score = [0.0f64; 4];
    let mut local_score = vec![[0.0f64; 4]; ds.m()];
    let mut sq_err = Vec::with_capacity(draws.len());
    let mut rng = seeded_rng(seed);
    let score = |r: f64, o: f64| {
        if r > o {
            1.0
        } else if r == o {
            0.5
        } else {
            0.0
        }
    };
    for state in &draws.states {
        let rep = replicate_state(state, ds, &mut rng);
        sq_err.push(rep.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64);
        for (k, s) in Statistic::ALL.iter().enumerate() {
            global_score[k] += score(s.compute(&rep), observed_global[k]);
        }
        for (j, &(a, b)) in offsets.iter().enumerate() {
            if a == b {
                continue;
            }
            let mut part = rep[a..b].to_vec();
            part.sort_by(f64::total_cmp);
            for (k, s) in Statistic::ALL.iter().enumerate() {
                local_score[j][k] += score(s.compute_sorted(&part), observed_local[j][k]);
            }
        }
    }
    let b = draws.len() as f64;
    let ppp_global = Statistic::ALL.iter().zip(global_score).map(|(s, v)| (*s, v / b)).collect();
    let ppp_local = ds
        .group_ids()
        .into_iter()
        .zip(&local_score)
        .map(|(group, sc)| LocalPpp {
            group,
            ppp: Statistic::ALL.iter().zip(sc).map(|(s, v)| (*s, v / b)).collect(),
        })
        .collect();
    let (dic_value, p_dic) = dic(plug_in_loglik(draws, ds)?, &draws.loglik)?;
    let (waic_value, p_waic) = waic(&draws.pointwise_loglik(ds))?;
    Ok(CheckReport {
        model: model.to_string(),
        draws: draws.len(),
        mse: order_invariant_mean(&sq_err),
        ppp_global,
        ppp_local,
        dic: dic_value,
        p_dic,
        waic: waic_value,
        p_waic,
    })
}

impl CheckReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_local_ppp_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["group".to_string()];
        header.extend(Statistic::ALL.iter().map(|s| s.name().to_string()));
        out.write_record(&header)?;
        for l in &self.ppp_local {
            let mut row = vec![l.group.clone()];
            row.extend(Statistic::ALL.iter().map(|s| l.ppp[s].to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<ppp>", e))
    }
}

/// Side-by-side table of several runs: model, MSE, p_DIC, DIC, p_WAIC, WAIC.
pub fn comparison_table(reports: &[CheckReport]) -> String {
    let mut s = format!(
        "{:<12} {:>12} {:>10} {:>12} {:>10} {:>12}\n",
        "Model", "MSE", "p_DIC", "DIC", "p_WAIC", "WAIC"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<12} {:>12.3} {:>10.3} {:>12.3} {:>10.3} {:>12.3}\n",
            r.model, r.mse, r.p_dic, r.dic, r.p_waic, r.waic
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppp_counting() {
        assert!((ppp_from_stats(&[1.0, 2.0, 3.0], 2.5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ppp_from_stats(&[1.0, 2.0, 3.0], 0.0), 1.0);
        assert_eq!(ppp_from_stats(&[2.0, 2.0], 2.0), 0.5);
    }

    #[test]
    fn mse_arithmetic() {
        assert_eq!(mse_replicated(&[vec![2.0, 0.0]], &[1.0, 1.0]), 1.0);
        assert_eq!(mse_replicated(&[vec![1.0, 1.0]], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn dic_hand_example() {
        let (d, p) = dic(-1.5, &[-1.0, -3.0]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!((d - 5.0).abs() < 1e-12);
        let (d, p) = dic(-4.0, &[-4.0, -4.0]).unwrap();
        assert_eq!((d, p), (8.0, 0.0));
    }

    #[test]
    fn waic_hand_example() {
        let pw = PointwiseLogLik { n_obs: 1, n_draws: 2, values: vec![-1.0, -3.0] };
        let (w, p) = waic(&pw).unwrap();
        let lppd = ((f64::exp(-1.0) + f64::exp(-3.0)) / 2.0).ln();
        assert!((lppd + 1.566219).abs() < 1e-6);
        assert!((p - 2.0 * (lppd + 2.0)).abs() < 1e-12);
        assert!((p - 0.867562).abs() < 1e-4);
        assert!((w - 4.867562).abs() < 1e-4);
        let same = PointwiseLogLik { n_obs: 2, n_draws: 3, values: vec![-2.0; 6] };
        assert_eq!(waic(&same).unwrap().1, 0.0);
    }

    #[test]
    fn log_mean_exp_is_overflow_safe() {
        let v = [-1e6, -1e6 - 1.0];
        let expected = -1e6 + ((1.0 + (-1.0f64).exp()) / 2.0).ln();
        assert!((log_mean_exp(&v) - expected).abs() < 1e-9);
        assert!(log_mean_exp(&[800.0, 800.0]).is_finite());
    }

    #[test]
    fn statistics() {
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_eq!(Statistic::Mean.compute(&v), 4.0);
        assert_eq!(Statistic::Median.compute(&v), 3.0);
        assert_eq!(Statistic::Iqr.compute(&v), 2.0);
    }
}
