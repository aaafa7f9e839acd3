mod common;

use std::io::Cursor;

use common::*;
use hierreg::checking::{check, plug_in_loglik, replicate_state};
use hierreg::chlrm::{self, gibbs_chlrm_from, ChlrmState};
use hierreg::cluster::{incidence, PartitionDraws};
use hierreg::data::{Group, GroupedDataset};
use hierreg::distributions::seeded_rng;
use hierreg::draws::{read_draws_body, read_draws_header, write_draws, ModelState, PosteriorDraws, Schedule, StateDims};
use hierreg::elicitation::{elicit, ols_fit, ModelKind};
use hierreg::hlrm::gibbs_hlrm;
use hierreg::lrm::{direct_sample_gprior, gibbs_lrm, gibbs_lrm_from, LrmState};
use hierreg::summary::{quantile, std_dev, SummaryTable};
use hierreg::synth::{generate, GeneratorSpec, ANALOGUE_LINE, ANALOGUE_SIGMA};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn hierarchical_data(seed: u64) -> (GroupedDataset, hierreg::synth::Truth) {
    let spec = GeneratorSpec::hierarchical(
        24,
        5,
        &dvector![20.0, 0.5],
        &dmatrix![16.0, 0.0; 0.0, 0.04],
        vec![4.0; 24],
        seed,
    )
    .unwrap();
    generate(&spec).unwrap()
}

/// Same groups and noise with every group observed at x = -10, -5, 0, 5, 10.
fn balanced(ds: &GroupedDataset, truth: &hierreg::synth::Truth) -> GroupedDataset {
    let x = DMatrix::from_fn(5, 2, |i, c| if c == 0 { 1.0 } else { 5.0 * i as f64 - 10.0 });
    let groups = ds
        .groups()
        .iter()
        .zip(&truth.coefficients)
        .map(|(g, b)| {
            let b = DVector::from_column_slice(b);
            let noise = &g.y - &g.x * &b;
            Group { id: g.id.clone(), y: &x * &b + noise, x: x.clone() }
        })
        .collect();
    GroupedDataset::new(groups, ds.columns().clone()).unwrap()
}

#[test]
fn hierarchical_means_shrink_toward_population() {
    let (raw, truth) = hierarchical_data(11);
    let ds = balanced(&raw, &truth);
    let h = elicited(&ds, ModelKind::Hlrm, None);
    let d = gibbs_hlrm(&ds, &h, Schedule::for_kept(20_000, 1_000, 2).unwrap(), 11, &mut seeded_rng(11)).unwrap();
    let pop: Vec<f64> = (0..2).map(|k| mean_of(d.states.iter().map(|s| s.beta[k]))).collect();
    for k in 0..2 {
        let between = (0..ds.m())
            .filter(|&j| {
                let g = ds.group(j);
                let ols = (g.x.transpose() * &g.x).try_inverse().unwrap() * g.x.transpose() * &g.y;
                let post = mean_of(d.states.iter().map(|s| s.beta_groups[j][k]));
                let (lo, hi) = if ols[k] < pop[k] { (ols[k], pop[k]) } else { (pop[k], ols[k]) };
                lo < post && post < hi
            })
            .count();
        assert!(between * 10 >= ds.m() * 9, "component {k}: {between}/24 groups shrunk");
    }
}

#[test]
fn gibbs_sweep_preserves_gprior_posterior() {
    // zero coefficients keep the g-prior's βᵀXᵀXβ/g term in the σ² update negligible
    let spec = GeneratorSpec::hierarchical(1, 200, &dvector![0.0, 0.0], &dmatrix![1e-12, 0.0; 0.0, 1e-12], vec![4.0], 5)
        .unwrap();
    let (ds, _) = generate(&spec).unwrap();
    let ols = ols_fit(&ds.stack()).unwrap();
    let g = ds.n_total() as f64;
    let (nu0, s0) = (1.0, ols.sigma2_hat);
    let direct = direct_sample_gprior(&ds, g, nu0, s0, 20_000, 1, &mut seeded_rng(1)).unwrap();
    let sigma2_bar = mean_of(direct.states.iter().map(|s| s.sigma2));

    let mut h = elicit(&ds, &ols, ModelKind::Lrm, None).unwrap();
    h.mu0 = DVector::zeros(2);
    h.lambda0 = &ols.gram_inverse * (g * sigma2_bar);
    h.nu0 = nu0;
    h.sigma2_0 = s0;
    let one_sweep = Schedule::new(1, 0, 1).unwrap();
    let mut rng = seeded_rng(2);
    let moved: Vec<LrmState> = direct
        .states
        .iter()
        .map(|s| gibbs_lrm_from(&ds, &h, one_sweep, 2, s.clone(), &mut rng).unwrap().states[0].clone())
        .collect();

    let pick = |states: &[LrmState], f: &dyn Fn(&LrmState) -> f64| -> Vec<f64> { states.iter().map(f).collect() };
    let getters: [(&str, Box<dyn Fn(&LrmState) -> f64>); 3] = [
        ("beta[0]", Box::new(|s| s.beta[0])),
        ("beta[1]", Box::new(|s| s.beta[1])),
        ("sigma2", Box::new(|s| s.sigma2)),
    ];
    // σ²|β has shape (ν₀+N+p)/2 under the g-prior but (ν₀+N)/2 in the Gibbs
    // sampler, which scales the σ² mean after one sweep by this ratio
    let a = (nu0 + ds.n_total() as f64) / 2.0;
    let shape_ratio = (a + 2.0 / 2.0 - 1.0) / (a - 1.0);
    for (name, f) in getters {
        let mut before = iid_mean_se(&pick(&direct.states, &f));
        if name == "sigma2" {
            before = (before.0 * shape_ratio, before.1 * shape_ratio);
        }
        let after = iid_mean_se(&pick(&moved, &f));
        let se = (before.1 * before.1 + after.1 * after.1).sqrt();
        assert!((before.0 - after.0).abs() <= 3.0 * se, "{name}: {before:?} vs {after:?}");
    }
}

#[test]
fn lrm_plug_in_likelihood_respects_jensen_bound() {
    let (ds, h) = analogue_hyper(ModelKind::Lrm, None);
    let d = gibbs_lrm(&ds, &h, Schedule::for_kept(5_000, 500, 1).unwrap(), 3, &mut seeded_rng(3)).unwrap();
    let hat = plug_in_loglik(&d, &ds).unwrap();
    let avg = mean_of(d.loglik.iter().copied());
    assert!(hat >= avg - 5.0, "{hat} vs {avg}");
}

#[test]
fn lrm_recovers_analogue_line() {
    let (ds, h) = analogue_hyper(ModelKind::Lrm, None);
    let d = gibbs_lrm(&ds, &h, Schedule::for_kept(20_000, 1_000, 2).unwrap(), 4, &mut seeded_rng(4)).unwrap();
    let truth = [ANALOGUE_LINE.0, ANALOGUE_LINE.1, ANALOGUE_SIGMA * ANALOGUE_SIGMA];
    let series: [Vec<f64>; 3] = [
        d.states.iter().map(|s| s.beta[0]).collect(),
        d.states.iter().map(|s| s.beta[1]).collect(),
        d.states.iter().map(|s| s.sigma2).collect(),
    ];
    for (xs, t) in series.iter().zip(truth) {
        let m = mean_of(xs.iter().copied());
        assert!((m - t).abs() <= 2.0 * std_dev(xs), "mean {m}, target {t}");
    }
    let table = SummaryTable::from_draws(&d, &StateDims { p: 2, m: ds.m(), k: 0 }, &ds).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["beta[intercept]", "beta[nitrogen]", "sigma2"]);
}

#[test]
fn single_group_hierarchy_with_flat_hyperprior_matches_lrm() {
    let spec = GeneratorSpec::hierarchical(1, 40, &dvector![5.0, 2.0], &dmatrix![1e-12, 0.0; 0.0, 1e-12], vec![9.0], 8)
        .unwrap();
    let (ds, _) = generate(&spec).unwrap();
    let mut h = elicited(&ds, ModelKind::Hlrm, None);
    // flat prior on β and ξ² pinned at σ₀²
    h.lambda0 = DMatrix::identity(2, 2) * 1e10;
    h.a0 = 1e6;
    h.b0 = h.a0 / h.sigma2_0;
    // under the flat prior the pooled posterior mean of β is exactly the OLS fit
    let ols = ols_fit(&ds.stack()).unwrap().beta_hat;
    let schedule = Schedule::for_kept(40_000, 1_000, 1).unwrap();
    let pooled = gibbs_lrm(&ds, &h, schedule, 23, &mut seeded_rng(23)).unwrap();
    let hier = gibbs_hlrm(&ds, &h, schedule, 24, &mut seeded_rng(24)).unwrap();
    for k in 0..2 {
        let a: Vec<f64> = pooled.states.iter().map(|s| s.beta[k]).collect();
        let b: Vec<f64> = hier.states.iter().map(|s| s.beta_groups[0][k]).collect();
        assert!(within(mcmc_mean_se(&a), ols[k], 2.0), "lrm beta[{k}]: {:?} vs {}", mcmc_mean_se(&a), ols[k]);
        assert!(within(mcmc_mean_se(&b), ols[k], 2.0), "hlrm beta[{k}]: {:?} vs {}", mcmc_mean_se(&b), ols[k]);
    }
}

fn permuted(state: &ChlrmState, perm: &[usize]) -> ChlrmState {
    let mut out = state.clone();
    for (old, &new) in perm.iter().enumerate() {
        out.omega[new] = state.omega[old];
        out.beta_clusters[new] = state.beta_clusters[old].clone();
        out.sigma2_clusters[new] = state.sigma2_clusters[old];
    }
    out.gamma = state.gamma.iter().map(|&g| perm[g]).collect();
    out
}

#[test]
fn incidence_is_invariant_to_initial_labels() {
    let planted: Vec<usize> = (0..8).map(|j| j % 2).collect();
    let spec = GeneratorSpec::clustered(5, &[vec![0.0, 0.5], vec![15.0, 0.2]], &[9.0, 9.0], planted, 31).unwrap();
    let (ds, _) = generate(&spec).unwrap();
    let h = elicited(&ds, ModelKind::Chlrm, None);
    let init = chlrm::initial_state(&ds, &h).unwrap();
    let perm: Vec<usize> = (0..ds.m()).rev().collect();
    let schedule = Schedule::for_kept(50_000, 2_000, 1).unwrap();
    let a = gibbs_chlrm_from(&ds, &h, schedule, 1, init.clone(), &mut seeded_rng(1)).unwrap();
    let b = gibbs_chlrm_from(&ds, &h, schedule, 2, permuted(&init, &perm), &mut seeded_rng(2)).unwrap();
    let ia = incidence(&PartitionDraws::from_states(&a.states).unwrap()).unwrap();
    let ib = incidence(&PartitionDraws::from_states(&b.states).unwrap()).unwrap();
    let worst = (&ia - &ib).abs().max();
    assert!(worst <= 0.05, "max incidence difference {worst}");
}

#[test]
fn ppp_of_mean_is_rarely_extreme_under_the_true_model() {
    let mut inside = 0;
    for rep in 0..50u64 {
        let spec = GeneratorSpec::hierarchical(4, 10, &dvector![2.0, 1.0], &dmatrix![1e-12, 0.0; 0.0, 1e-12], vec![1.0; 4], 100 + rep)
            .unwrap();
        let (ds, _) = generate(&spec).unwrap();
        let h = elicited(&ds, ModelKind::Lrm, None);
        let d = gibbs_lrm(&ds, &h, Schedule::for_kept(500, 100, 1).unwrap(), rep, &mut seeded_rng(rep)).unwrap();
        let r = check("lrm", &d, &ds, rep).unwrap();
        let ppp = r.ppp_global[&hierreg::checking::Statistic::Mean];
        if (0.05..=0.95).contains(&ppp) {
            inside += 1;
        }
    }
    assert!(inside >= 42, "{inside}/50 inside [0.05, 0.95]");
}

#[test]
fn replicates_follow_the_state() {
    let (ds, _) = hierarchical_data(12);
    let state = LrmState { beta: dvector![1.0, 2.0], sigma2: 1e-30 };
    let rep = replicate_state(&state, &ds, &mut seeded_rng(0));
    assert_eq!(rep.len(), ds.n_total());
    let fitted = ds.stack().x * &state.beta;
    for (a, b) in rep.iter().zip(fitted.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    let noisy = LrmState { beta: dvector![0.0, 0.0], sigma2: 4.0 };
    let mut rng = seeded_rng(1);
    let all: Vec<f64> = (0..200).flat_map(|_| replicate_state(&noisy, &ds, &mut rng)).collect();
    assert!((std_dev(&all) - 2.0).abs() < 0.05);
    assert!(quantile(&all, 0.5).abs() < 0.05);
}

fn round_trip<S: ModelState + PartialEq + std::fmt::Debug>(d: &PosteriorDraws<S>, dims: StateDims) {
    let mut buf = Vec::new();
    write_draws(d, dims, &mut buf).unwrap();
    let mut r = Cursor::new(buf);
    let (meta, back_dims, count) = read_draws_header(&mut r).unwrap();
    assert_eq!((&meta, back_dims, count), (&d.meta, dims, d.len()));
    let back: PosteriorDraws<S> = read_draws_body(&mut r, meta, back_dims, count).unwrap();
    assert_eq!(back.states, d.states);
    assert_eq!(back.loglik, d.loglik);
}

#[test]
fn draws_files_round_trip_bit_exactly() {
    let (ds, h) = analogue_hyper(ModelKind::Chlrm, None);
    let s = Schedule::for_kept(50, 10, 2).unwrap();
    let dims = |k| StateDims { p: ds.p(), m: ds.m(), k };
    round_trip(&gibbs_lrm(&ds, &h, s, 1, &mut seeded_rng(1)).unwrap(), dims(0));
    round_trip(&gibbs_hlrm(&ds, &h, s, 1, &mut seeded_rng(1)).unwrap(), dims(0));
    round_trip(&hierreg::chlrm::gibbs_chlrm(&ds, &h, s, 1, &mut seeded_rng(1)).unwrap(), dims(ds.m()));
}

#[test]
fn truncated_draws_file_is_rejected() {
    let (ds, h) = analogue_hyper(ModelKind::Lrm, None);
    let d = gibbs_lrm(&ds, &h, Schedule::for_kept(5, 0, 1).unwrap(), 1, &mut seeded_rng(1)).unwrap();
    let dims = StateDims { p: 2, m: ds.m(), k: 0 };
    let mut buf = Vec::new();
    write_draws(&d, dims, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    let mut r = Cursor::new(buf);
    let (meta, dims, count) = read_draws_header(&mut r).unwrap();
    assert!(read_draws_body::<LrmState, _>(&mut r, meta, dims, count).is_err());
    assert!(read_draws_header(&mut Cursor::new(b"NOTDRAWS".to_vec())).is_err());
}

#[test]
fn gprior_scale_is_equivariant_in_the_regressors() {
    let (ds, _) = hierreg::synth::plant_analogue();
    let c = 7.5;
    let scaled_groups: Vec<Group> = ds
        .groups()
        .iter()
        .map(|g| {
            let mut x = g.x.clone();
            x.column_mut(1).scale_mut(c);
            Group { id: g.id.clone(), y: g.y.clone(), x }
        })
        .collect();
    let scaled = GroupedDataset::new(scaled_groups, ds.columns().clone()).unwrap();
    let a = elicited(&ds, ModelKind::Hlrm, None);
    let b = elicited(&scaled, ModelKind::Hlrm, None);
    assert!((b.lambda0[(1, 1)] - a.lambda0[(1, 1)] / (c * c)).abs() <= 1e-10 * a.lambda0[(1, 1)]);
    assert!((b.lambda0[(0, 0)] - a.lambda0[(0, 0)]).abs() <= 1e-10 * a.lambda0[(0, 0)]);
    assert!((b.mu0[1] - a.mu0[1] / c).abs() < 1e-10);
    assert_eq!(elicited(&ds, ModelKind::Hlrm, None), a);
}

#[test]
fn analogue_has_significant_slope_and_plant_scale_response() {
    let (ds, _) = hierreg::synth::plant_analogue();
    assert_eq!((ds.m(), ds.n_total()), (24, 120));
    let ols = ols_fit(&ds.stack()).unwrap();
    let se = (ols.sigma2_hat * ols.gram_inverse[(1, 1)]).sqrt();
    // two-sided 5% critical value of t with 118 degrees of freedom
    assert!(ols.beta_hat[1] / se > 1.981, "t = {}", ols.beta_hat[1] / se);
    let y = ds.stacked_response();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!((50.0..100.0).contains(&lo) && (100.0..150.0).contains(&hi), "range {lo}..{hi}");
}
