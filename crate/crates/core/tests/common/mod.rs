#![allow(dead_code)]

use hierreg::data::{Columns, Group, GroupedDataset};
use hierreg::diagnostics::batch_means_se;
use hierreg::elicitation::{elicit, ols_fit, Hyperparams, ModelKind};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

/// Mean and standard error of independent draws.
pub fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and batch-means standard error of a Markov chain.
pub fn mcmc_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    (xs.iter().sum::<f64>() / n, batch_means_se(xs))
}

/// `|estimate − target| ≤ k·se`.
pub fn within(estimate: (f64, f64), target: f64, k: f64) -> bool {
    (estimate.0 - target).abs() <= k * estimate.1
}

/// Squared deviations from a known mean; their expectation is the variance.
pub fn sq_dev(xs: &[f64], mean: f64) -> Vec<f64> {
    xs.iter().map(|x| (x - mean).powi(2)).collect()
}

pub fn analogue_hyper(kind: ModelKind, k: Option<usize>) -> (GroupedDataset, Hyperparams) {
    let (ds, _) = hierreg::synth::plant_analogue();
    let ols = ols_fit(&ds.stack()).unwrap();
    let h = elicit(&ds, &ols, kind, k).unwrap();
    (ds, h)
}

pub fn elicited(ds: &GroupedDataset, kind: ModelKind, k: Option<usize>) -> Hyperparams {
    let ols = ols_fit(&ds.stack()).unwrap();
    elicit(ds, &ols, kind, k).unwrap()
}

/// Proper hyperparameters with finite fourth moments, for prior reproduction.
pub fn prior_test_hyper(alpha0: Option<Vec<f64>>) -> Hyperparams {
    Hyperparams {
        mu0: dvector![1.0, -1.0],
        lambda0: dmatrix![2.0, 0.3; 0.3, 1.0],
        n0: 14.0,
        s0: dmatrix![11.0, 2.2; 2.2, 5.5],
        nu0: 3.0,
        a0: 3.0,
        b0: 2.0,
        alpha0,
        g: 1.0,
        sigma2_0: 1.0,
    }
}

/// All rows of `ds` as a single group.
pub fn merged(ds: &GroupedDataset) -> GroupedDataset {
    let st = ds.stack();
    let g = Group {
        id: "all".into(),
        y: st.y.clone(),
        x: st.x.clone(),
    };
    GroupedDataset::new(vec![g], ds.columns().clone()).unwrap()
}

pub fn single_group(y: DVector<f64>, x: DMatrix<f64>) -> GroupedDataset {
    let p = x.ncols();
    GroupedDataset::new(vec![Group { id: "a".into(), y, x }], Columns::generic(p, true)).unwrap()
}
