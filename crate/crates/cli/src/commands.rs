//! `check`, `cluster` and `simulate`.

use std::io::Write;
use std::path::{Path, PathBuf};

use hierreg::checking::{check, comparison_table, CheckReport};
use hierreg::cluster::{
    incidence, k_star_mode, k_star_posterior, partition_map, point_partition, refit_lines, write_incidence_csv,
    write_k_star_csv, write_refit_csv, PartitionDraws,
};
use hierreg::draws::{ModelState, PosteriorDraws};
use hierreg::synth::{analogue_with_seed, generate, GeneratorSpec};

use crate::run::{create, load_run, LoadedRun, RunDraws};
use crate::CliError;

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn pooled_check<S: ModelState>(run: &LoadedRun, chains: &[PosteriorDraws<S>], seed: u64) -> Result<CheckReport, CliError> {
    let pooled = PosteriorDraws::pooled(chains)?;
    Ok(check(run.manifest.config.model.name(), &pooled, &run.data, seed)?)
}

pub fn check_runs(runs: &[PathBuf], seed: Option<u64>, compare: Option<&Path>) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for dir in runs {
        let run = load_run(dir)?;
        let seed = seed.unwrap_or(run.manifest.config.seed);
        let report = match &run.draws {
            RunDraws::Lrm(c) => pooled_check(&run, c, seed)?,
            RunDraws::Hlrm(c) => pooled_check(&run, c, seed)?,
            RunDraws::Chlrm(c) => pooled_check(&run, c, seed)?,
        };
        write_text(&dir.join("check.json"), &report.to_json()?)?;
        report.write_local_ppp_csv(create(&dir.join("local_ppp.csv"))?)?;
        let mut global = String::from("statistic,ppp\n");
        for (stat, p) in &report.ppp_global {
            global.push_str(&format!("{},{p}\n", stat.name()));
        }
        write_text(&dir.join("global_ppp.csv"), &global)?;
        write_text(&dir.join("check.txt"), &comparison_table(std::slice::from_ref(&report)))?;
        reports.push(report);
    }
    let table = comparison_table(&reports);
    if let Some(path) = compare {
        write_text(path, &table)?;
    }
    print!("{table}");
    Ok(())
}

pub fn cluster(dir: &Path, cost_ratio: f64, out: Option<&Path>) -> Result<(), CliError> {
    let run = load_run(dir)?;
    let RunDraws::Chlrm(chains) = &run.draws else {
        return Err(CliError::User(format!(
            "{}: cluster needs a chlrm run, found {}",
            dir.display(),
            run.manifest.config.model.name()
        )));
    };
    let out = out.map_or_else(|| dir.join("cluster"), Path::to_path_buf);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let pooled = PosteriorDraws::pooled(chains)?;
    let draws = PartitionDraws::from_states(&pooled.states)?;
    let posterior = k_star_posterior(&draws)?;
    let inc = incidence(&draws)?;
    let est = point_partition(&inc, &draws, cost_ratio)?;
    let lines = refit_lines(&run.data, &est, &run.manifest.hyperparams)?;
    let ids = run.data.group_ids();

    write_k_star_csv(&posterior, create(&out.join("k_star.csv"))?)?;
    write_incidence_csv(&inc, &ids, &est.display_order(), create(&out.join("incidence.csv"))?)?;
    write_text(&out.join("partition.json"), &serde_json::to_string_pretty(&partition_map(&ids, &est))?)?;
    write_refit_csv(&lines, &run.data.coefficient_names(), create(&out.join("refit.csv"))?)?;

    let mut stdout = std::io::stdout().lock();
    let mode = k_star_mode(&posterior);
    let _ = writeln!(stdout, "K* posterior mode: {mode} (probability {:.3})", posterior[mode - 1]);
    let _ = writeln!(
        stdout,
        "point partition: {} clusters, sizes {:?}, Binder loss {:.4}",
        est.clusters(),
        est.sizes,
        est.loss
    );
    for l in &lines {
        let coefs: Vec<String> = l.coefficients.iter().map(|c| format!("{c:.4}")).collect();
        let _ = writeln!(stdout, "  cluster {}: [{}] groups {}", l.cluster, coefs.join(", "), l.groups.join(" "));
    }
    Ok(())
}

pub fn simulate(spec: Option<&Path>, analogue: bool, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let (ds, truth) = match (spec, analogue) {
        (Some(path), false) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut spec: GeneratorSpec =
                serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            generate(&spec)?
        }
        (None, true) => match seed {
            Some(s) => analogue_with_seed(s)?,
            None => hierreg::synth::plant_analogue(),
        },
        _ => return Err(CliError::User("give exactly one of --spec or --analogue".into())),
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    ds.write_csv_path(out.join("data.csv"))?;
    write_text(&out.join("truth.json"), &serde_json::to_string_pretty(&truth)?)?;
    let cols = ds.columns();
    println!(
        "wrote {} rows in {} groups to {} (response `{}`, covariates {:?}, group `{}`)",
        ds.n_total(),
        ds.m(),
        out.join("data.csv").display(),
        cols.response,
        cols.covariates,
        cols.group
    );
    Ok(())
}
