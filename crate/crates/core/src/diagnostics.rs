//! Chain diagnostics: log-likelihood traces, autocorrelation, split-half
//! stationarity and batch-means Monte Carlo error.

use std::io::Write;

use serde::Serialize;

use crate::{Error, Result};

/// Write `draw,loglik` rows for plotting.
pub fn write_trace_csv<W: Write>(loglik: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["draw", "loglik"])?;
    for (i, v) in loglik.iter().enumerate() {
        out.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<trace>", e))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelations at lags `0..=max_lag` (biased estimator, divisor
/// `n` at every lag). A constant series yields `1` then zeros.
pub fn acf(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mu = mean(series);
    let centered: Vec<f64> = series.iter().map(|v| v - mu).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    let mut out = vec![1.0];
    for lag in 1..=max_lag.min(n - 1) {
        if c0 == 0.0 {
            out.push(0.0);
            continue;
        }
        let c: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
        out.push(c / c0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitHalf {
    pub first_mean: f64,
    pub second_mean: f64,
    /// SD of the whole series.
    pub sd: f64,
    pub passes: bool,
}

/// Compare the means of the two halves of a series: passes when they differ
/// by at most one standard deviation of the whole series.
pub fn split_half(series: &[f64]) -> Result<SplitHalf> {
    if series.len() < 2 {
        return Err(Error::EmptyDraws);
    }
    let half = series.len() / 2;
    let first_mean = mean(&series[..half]);
    let second_mean = mean(&series[half..]);
    let sd = crate::summary::std_dev(series);
    Ok(SplitHalf {
        first_mean,
        second_mean,
        sd,
        passes: (first_mean - second_mean).abs() <= sd,
    })
}

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// (`⌊√n⌋` batches), which accounts for autocorrelation.
pub fn batch_means_se(series: &[f64]) -> f64 {
    let n = series.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return f64::NAN;
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&series[b * size..(b + 1) * size])).collect();
    crate::summary::std_dev(&means) / (batches as f64).sqrt()
}

/// Effective sample size implied by [`batch_means_se`].
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let se = batch_means_se(series);
    let sd = crate::summary::std_dev(series);
    if !(se > 0.0) {
        return series.len() as f64;
    }
    (sd / se).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::seeded_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn lag_zero_is_one_and_constant_is_flat() {
        let a = acf(&[3.0; 10], 3);
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(acf(&[1.0, 5.0, 2.0], 1)[0], 1.0);
    }

    #[test]
    fn white_noise_band() {
        let mut rng = seeded_rng(10);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = acf(&x, 20);
        assert!(a[1..].iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn ar1_lag_one() {
        let mut rng = seeded_rng(11);
        let mut x = vec![0.0; 20_000];
        for t in 1..x.len() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.9 * x[t - 1] + z;
        }
        assert!((acf(&x, 1)[1] - 0.9).abs() < 0.05);
    }

    #[test]
    fn split_half_on_constant_and_trend() {
        assert!(split_half(&[2.0; 8]).unwrap().passes);
        let trend: Vec<f64> = (0..100).map(|i| if i < 50 { 0.0 } else { 10.0 }).collect();
        assert!(!split_half(&trend).unwrap().passes);
    }

    #[test]
    fn batch_means_iid() {
        let mut rng = seeded_rng(12);
        let x: Vec<f64> = (0..40_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let se = batch_means_se(&x);
        assert!((se / (1.0 / 200.0) - 1.0).abs() < 0.2, "se {se}");
    }
}
