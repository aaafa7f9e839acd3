//! Run configuration: JSON file keys, overridden by command-line flags.

use std::path::{Path, PathBuf};

use hierreg::draws::{Sampler, Schedule};
use hierreg::elicitation::{Hyperparams, ModelKind};
use hierreg::linalg::serde_dense::matrix_from_rows;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_BURN_IN: usize = 10_000;
pub const DEFAULT_THIN: usize = 10;
pub const DEFAULT_KEPT: usize = 50_000;

/// Optional replacements for elicited hyperparameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_0: Option<f64>,
}

impl HyperOverrides {
    pub fn apply(&self, h: &mut Hyperparams) -> Result<(), CliError> {
        let p = h.p();
        let matrix = |name: &str, rows: &Vec<Vec<f64>>| {
            matrix_from_rows(rows)
                .filter(|m| m.shape() == (p, p))
                .ok_or_else(|| CliError::User(format!("hyper.{name} must be a {p}x{p} matrix")))
        };
        if let Some(v) = &self.mu0 {
            if v.len() != p {
                return Err(CliError::User(format!("hyper.mu0 must have {p} entries")));
            }
            h.mu0 = DVector::from_column_slice(v);
        }
        if let Some(m) = &self.lambda0 {
            h.lambda0 = matrix("lambda0", m)?;
        }
        if let Some(m) = &self.s0 {
            h.s0 = matrix("s0", m)?;
        }
        if let Some(a) = &self.alpha0 {
            if h.alpha0.is_none() {
                return Err(CliError::User("hyper.alpha0 applies to the chlrm model only".into()));
            }
            h.alpha0 = Some(a.clone());
        }
        for (target, value) in [
            (&mut h.n0, self.n0),
            (&mut h.nu0, self.nu0),
            (&mut h.a0, self.a0),
            (&mut h.b0, self.b0),
            (&mut h.g, self.g),
            (&mut h.sigma2_0, self.sigma2_0),
        ] {
            if let Some(v) = value {
                *target = v;
            }
        }
        // a bad override is an input problem even when it surfaces as a failed factorization
        h.validate().map_err(|e| CliError::User(format!("hyperparameter override: {e}")))
    }
}

/// Contents of a `--config` file. Every key is optional; a run manifest is
/// accepted too, in which case its resolved `config` is used.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<Sampler>,
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub group: Option<String>,
    pub intercept: Option<bool>,
    pub groups: Option<Vec<String>>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub kept: Option<usize>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    #[serde(rename = "K", alias = "k")]
    pub k: Option<usize>,
    pub hyper: Option<HyperOverrides>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        if value.get("config_sha256").is_some() {
            value = value["config"].take();
        }
        serde_json::from_value(value).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
    }

    /// Values from `other` win.
    pub fn merge(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            model: other.model.or(self.model),
            data: other.data.or(self.data),
            response: other.response.or(self.response),
            covariates: other.covariates.or(self.covariates),
            group: other.group.or(self.group),
            intercept: other.intercept.or(self.intercept),
            groups: other.groups.or(self.groups),
            iterations: other.iterations.or(self.iterations),
            burn_in: other.burn_in.or(self.burn_in),
            thin: other.thin.or(self.thin),
            kept: other.kept.or(self.kept),
            seed: other.seed.or(self.seed),
            chains: other.chains.or(self.chains),
            k: other.k.or(self.k),
            hyper: other.hyper.or(self.hyper),
            out: other.out.or(self.out),
        }
    }
}

/// Fully resolved configuration of a fit, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Sampler,
    pub data: PathBuf,
    pub response: String,
    pub covariates: Vec<String>,
    pub group: String,
    pub intercept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub hyper: HyperOverrides,
}

fn required<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::User(format!("missing required setting `{key}` (flag or config key)")))
}

impl RunConfig {
    pub fn resolve(c: ConfigFile) -> Result<(Self, PathBuf), CliError> {
        let burn_in = c.burn_in.unwrap_or(DEFAULT_BURN_IN);
        let thin = c.thin.unwrap_or(DEFAULT_THIN);
        if thin == 0 {
            return Err(CliError::User("thin must be at least 1".into()));
        }
        let iterations = match (c.iterations, c.kept) {
            (Some(it), Some(kept)) if it != burn_in + kept * thin => {
                return Err(CliError::User(format!(
                    "iterations ({it}) disagrees with burn_in + kept * thin ({})",
                    burn_in + kept * thin
                )))
            }
            (Some(it), _) => it,
            (None, kept) => burn_in + kept.unwrap_or(DEFAULT_KEPT) * thin,
        };
        if burn_in >= iterations {
            return Err(CliError::User(format!(
                "burn_in ({burn_in}) must be smaller than iterations ({iterations})"
            )));
        }
        let chains = c.chains.unwrap_or(1);
        if chains == 0 {
            return Err(CliError::User("chains must be at least 1".into()));
        }
        let model = required(c.model, "model")?;
        if c.k.is_some() && model != Sampler::Chlrm {
            return Err(CliError::User("K applies to the chlrm model only".into()));
        }
        let data = required(c.data, "data")?;
        let data = data.canonicalize().map_err(|e| CliError::io(&data, e))?;
        let config = RunConfig {
            model,
            data,
            response: required(c.response, "response")?,
            covariates: required(c.covariates, "covariates")?,
            group: required(c.group, "group")?,
            intercept: c.intercept.unwrap_or(true),
            groups: c.groups,
            iterations,
            burn_in,
            thin,
            seed: c.seed.unwrap_or(1),
            chains,
            k: c.k,
            hyper: c.hyper.unwrap_or_default(),
        };
        Ok((config, required(c.out, "out")?))
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            Sampler::Lrm | Sampler::LrmGprior => ModelKind::Lrm,
            Sampler::Hlrm => ModelKind::Hlrm,
            Sampler::Chlrm => ModelKind::Chlrm,
        }
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}
