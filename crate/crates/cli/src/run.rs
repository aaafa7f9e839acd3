//! Fitting, and reading fitted runs back from disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hierreg::chlrm::{gibbs_chlrm, ChlrmState};
use hierreg::data::{load_csv, GroupedDataset, LoadOptions};
use hierreg::diagnostics::{acf, batch_means_se, effective_sample_size, split_half, write_trace_csv};
use hierreg::distributions::seeded_rng;
use hierreg::draws::{read_draws_body, read_draws_header, write_draws_path, ModelState, PosteriorDraws, Sampler, StateDims};
use hierreg::elicitation::{elicit, ols_fit, Hyperparams};
use hierreg::hlrm::{gibbs_hlrm, HlrmState};
use hierreg::lrm::{direct_sample_gprior, gibbs_lrm, LrmState};
use hierreg::summary::{group_intervals, write_group_intervals_csv, SummaryTable};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{file_sha256, RunConfig};
use crate::CliError;

const ACF_LAGS: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRecord {
    pub index: usize,
    pub seed: u64,
    pub draws: PathBuf,
    pub kept: usize,
}

/// Everything needed to reproduce a fit and to read its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub data_sha256: String,
    pub hyperparams: Hyperparams,
    pub dims: StateDims,
    /// Paths relative to the run directory.
    pub chains: Vec<ChainRecord>,
}

impl Manifest {
    pub fn load(run: &Path) -> Result<Self, CliError> {
        let path = run.join("manifest.json");
        let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
    }
}

pub enum RunDraws {
    Lrm(Vec<PosteriorDraws<LrmState>>),
    Hlrm(Vec<PosteriorDraws<HlrmState>>),
    Chlrm(Vec<PosteriorDraws<ChlrmState>>),
}

pub fn load_dataset(config: &RunConfig) -> Result<GroupedDataset, CliError> {
    let covariates: Vec<&str> = config.covariates.iter().map(String::as_str).collect();
    let mut opts = LoadOptions::new(&config.response, &covariates, &config.group);
    opts.add_intercept = config.intercept;
    opts.groups = config.groups.clone();
    Ok(load_csv(&config.data, &opts)?)
}

/// A fitted run: manifest, the dataset it was fitted to, and its chains.
pub struct LoadedRun {
    pub manifest: Manifest,
    pub data: GroupedDataset,
    pub draws: RunDraws,
}

fn read_chains<S: ModelState>(dir: &Path, m: &Manifest) -> Result<Vec<PosteriorDraws<S>>, CliError> {
    m.chains
        .iter()
        .map(|c| {
            let path = dir.join(&c.draws);
            let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            let mut r = BufReader::new(f);
            let (meta, dims, count) = read_draws_header(&mut r)?;
            if dims != m.dims {
                return Err(CliError::User(format!("{}: dimensions differ from the manifest", path.display())));
            }
            Ok(read_draws_body(&mut r, meta, dims, count)?)
        })
        .collect()
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let manifest = Manifest::load(dir)?;
    let hash = file_sha256(&manifest.config.data)?;
    if hash != manifest.data_sha256 {
        return Err(CliError::User(format!(
            "{} changed since the run was fitted (sha256 mismatch)",
            manifest.config.data.display()
        )));
    }
    let data = load_dataset(&manifest.config)?;
    let draws = match manifest.config.model {
        Sampler::Lrm | Sampler::LrmGprior => RunDraws::Lrm(read_chains(dir, &manifest)?),
        Sampler::Hlrm => RunDraws::Hlrm(read_chains(dir, &manifest)?),
        Sampler::Chlrm => RunDraws::Chlrm(read_chains(dir, &manifest)?),
    };
    Ok(LoadedRun {
        manifest,
        data,
        draws,
    })
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn run_chains<S, F>(config: &RunConfig, f: F) -> Result<Vec<PosteriorDraws<S>>, CliError>
where
    S: ModelState,
    F: Fn(u64) -> hierreg::Result<PosteriorDraws<S>> + Sync,
{
    (0..config.chains)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed + i as u64;
            log::info!("chain {i}: seed {seed}");
            f(seed).map_err(CliError::from)
        })
        .collect()
}

fn chain_diagnostics(loglik: &[f64]) -> Result<serde_json::Value, CliError> {
    let sh = split_half(loglik)?;
    Ok(serde_json::json!({
        "kept": loglik.len(),
        "split_half": sh,
        "effective_sample_size": effective_sample_size(loglik),
        "batch_means_se": batch_means_se(loglik),
    }))
}

fn write_outputs<S: ModelState>(
    out: &Path,
    chains: &[PosteriorDraws<S>],
    dims: StateDims,
    ds: &GroupedDataset,
    grouped: bool,
) -> Result<(Vec<ChainRecord>, String), CliError> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut acfs = Vec::new();
    for (i, chain) in chains.iter().enumerate() {
        let dir = out.join(format!("chain-{i}"));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        write_draws_path(chain, dims, dir.join("draws.bin"))?;
        write_trace_csv(&chain.loglik, create(&dir.join("loglik.csv"))?)?;
        SummaryTable::from_draws(chain, &dims, ds)?.write_csv(create(&dir.join("summary.csv"))?)?;
        if !chain.is_empty() {
            diagnostics.push(chain_diagnostics(&chain.loglik)?);
            acfs.push(acf(&chain.loglik, ACF_LAGS.min(chain.len() - 1)));
        }
        records.push(ChainRecord {
            index: i,
            seed: chain.meta.seed,
            draws: PathBuf::from(format!("chain-{i}/draws.bin")),
            kept: chain.len(),
        });
    }
    let pooled = PosteriorDraws::pooled(chains)?;
    if pooled.is_empty() {
        return Err(CliError::User("the schedule keeps no draws".into()));
    }
    let table = SummaryTable::from_draws(&pooled, &dims, ds)?;
    table.write_csv(create(&out.join("summary.csv"))?)?;
    let text = table.to_text();
    std::fs::write(out.join("summary.txt"), &text).map_err(|e| CliError::io(out.join("summary.txt"), e))?;
    if grouped {
        write_group_intervals_csv(&group_intervals(&pooled, ds)?, create(&out.join("group_intervals.csv"))?)?;
    }
    let mut w = create(&out.join("acf.csv"))?;
    let header: Vec<String> = (0..acfs.len()).map(|i| format!("chain{i}")).collect();
    writeln!(w, "lag,{}", header.join(",")).map_err(|e| CliError::io(out.join("acf.csv"), e))?;
    for lag in 0..acfs.first().map_or(0, Vec::len) {
        let row: Vec<String> = acfs.iter().map(|a| a[lag].to_string()).collect();
        writeln!(w, "{lag},{}", row.join(",")).map_err(|e| CliError::io(out.join("acf.csv"), e))?;
    }
    w.flush().map_err(|e| CliError::io(out.join("acf.csv"), e))?;
    let diag = serde_json::to_string_pretty(&diagnostics)?;
    std::fs::write(out.join("diagnostics.json"), diag).map_err(|e| CliError::io(out.join("diagnostics.json"), e))?;
    Ok((records, text))
}

pub fn fit(config: RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(&config)?;
    let ols = ols_fit(&ds.stack())?;
    let mut hyper = elicit(&ds, &ols, config.kind(), config.k)?;
    config.hyper.apply(&mut hyper)?;
    let schedule = config.schedule();
    schedule.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let k = hyper.alpha0.as_ref().map_or(0, Vec::len);
    let dims = StateDims { p: ds.p(), m: ds.m(), k };
    log::info!(
        "fitting {} to {} groups, {} rows: {} sweeps, burn-in {}, thin {}, {} chain(s)",
        config.model.name(),
        ds.m(),
        ds.n_total(),
        schedule.iterations,
        schedule.burn_in,
        schedule.thin,
        config.chains
    );
    let (chains, text) = match config.model {
        Sampler::Lrm => {
            let c = run_chains(&config, |s| gibbs_lrm(&ds, &hyper, schedule, s, &mut seeded_rng(s)))?;
            write_outputs(out, &c, dims, &ds, false)?
        }
        Sampler::LrmGprior => {
            let kept = schedule.kept();
            let c = run_chains(&config, |s| {
                direct_sample_gprior(&ds, hyper.g, hyper.nu0, hyper.sigma2_0, kept, s, &mut seeded_rng(s))
            })?;
            write_outputs(out, &c, dims, &ds, false)?
        }
        Sampler::Hlrm => {
            let c = run_chains(&config, |s| gibbs_hlrm(&ds, &hyper, schedule, s, &mut seeded_rng(s)))?;
            write_outputs(out, &c, dims, &ds, true)?
        }
        Sampler::Chlrm => {
            let c = run_chains(&config, |s| gibbs_chlrm(&ds, &hyper, schedule, s, &mut seeded_rng(s)))?;
            write_outputs(out, &c, dims, &ds, true)?
        }
    };
    let hyper_json = serde_json::to_string_pretty(&hyper)?;
    std::fs::write(out.join("hyperparams.json"), hyper_json).map_err(|e| CliError::io(out.join("hyperparams.json"), e))?;
    let manifest = Manifest {
        tool: "hierreg".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config.sha256(),
        data_sha256: file_sha256(&config.data)?,
        config,
        hyperparams: hyper,
        dims,
        chains,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out.join("manifest.json"), json).map_err(|e| CliError::io(out.join("manifest.json"), e))?;
    print!("{text}");
    Ok(())
}
