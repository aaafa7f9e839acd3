//! Posterior draw containers, the run schedule, and the binary draws file.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::distributions::normal_logpdf;
use crate::{Error, Result};

/// Sweep schedule: `iterations` total sweeps, the first `burn_in` discarded,
/// then every `thin`-th sweep kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for Schedule {
    /// 510,000 sweeps, 10,000 burn-in, thin 10: 50,000 kept draws.
    fn default() -> Self {
        Self {
            iterations: 510_000,
            burn_in: 10_000,
            thin: 10,
        }
    }
}

impl Schedule {
    pub fn new(iterations: usize, burn_in: usize, thin: usize) -> Result<Self> {
        let s = Self {
            iterations,
            burn_in,
            thin,
        };
        s.validate()?;
        Ok(s)
    }

    /// Schedule keeping exactly `kept` draws after `burn_in` with thinning `thin`.
    pub fn for_kept(kept: usize, burn_in: usize, thin: usize) -> Result<Self> {
        Self::new(burn_in + kept * thin, burn_in, thin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidSchedule("thin must be at least 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::InvalidSchedule(format!(
                "burn-in ({}) exceeds iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// `B = ⌊(iterations − burn_in) / thin⌋`.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether one-based sweep `sweep` is recorded.
    pub fn keeps(&self, sweep: usize) -> bool {
        sweep > self.burn_in && (sweep - self.burn_in) % self.thin == 0
    }
}

/// Identifies the sampler that produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Lrm,
    LrmGprior,
    Hlrm,
    Chlrm,
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Lrm => "lrm",
            Sampler::LrmGprior => "lrm-gprior",
            Sampler::Hlrm => "hlrm",
            Sampler::Chlrm => "chlrm",
        }
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrm" => Ok(Sampler::Lrm),
            "lrm-gprior" => Ok(Sampler::LrmGprior),
            "hlrm" => Ok(Sampler::Hlrm),
            "chlrm" => Ok(Sampler::Chlrm),
            other => Err(Error::InvalidParameter(format!(
                "unknown model `{other}` (expected lrm, lrm-gprior, hlrm or chlrm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub sampler: Sampler,
    pub seed: u64,
    pub schedule: Schedule,
}

/// Shape information needed to decode a flattened state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    /// Coefficients per regression.
    pub p: usize,
    /// Groups.
    pub m: usize,
    /// Mixture components (clustering model only, else 0).
    pub k: usize,
}

/// A single Gibbs state of one of the models.
///
/// Every model's likelihood is `y_{i,j} ~ N(x_{i,j}ᵀ b_j, s_j)` for some
/// per-group coefficients and variance; checking and replication work through
/// that view.
pub trait ModelState: Clone + Send + Sync + Sized {
    /// Coefficients generating group `j`'s observations.
    fn coefficients(&self, group: usize) -> &DVector<f64>;

    /// Error variance of group `j`'s observations.
    fn variance(&self, group: usize) -> f64;

    fn flat_len(dims: &StateDims) -> usize;

    fn write_flat(&self, out: &mut Vec<f64>);

    fn read_flat(dims: &StateDims, values: &[f64]) -> Result<Self>;

    /// Label-invariant scalar summaries: names.
    fn summary_names(dims: &StateDims, coefficient_names: &[String], group_ids: &[String]) -> Vec<String>;

    /// Values matching [`ModelState::summary_names`].
    fn summary_values(&self, out: &mut Vec<f64>);

    /// State at which the deviance is evaluated for DIC: the posterior mean
    /// where it is well defined, `None` to fall back to the highest
    /// likelihood draw.
    fn plug_in(states: &[Self]) -> Option<Self>;
}

/// Log-likelihood `Σ_j Σ_i log N(y_{i,j} | x_{i,j}ᵀ b_j, s_j)`.
pub fn dataset_loglik<S: ModelState>(ds: &GroupedDataset, state: &S) -> f64 {
    ds.groups()
        .iter()
        .enumerate()
        .map(|(j, g)| {
            if g.is_empty() {
                return 0.0;
            }
            let var = state.variance(j);
            let rss = g.residual_ss(state.coefficients(j));
            -0.5 * g.len() as f64 * (std::f64::consts::TAU * var).ln() - rss / (2.0 * var)
        })
        .sum()
}

/// Thinned chain of states with their log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<S> {
    pub states: Vec<S>,
    pub loglik: Vec<f64>,
    pub meta: RunMeta,
}

impl<S: ModelState> PosteriorDraws<S> {
    pub fn new(meta: RunMeta) -> Self {
        Self {
            states: Vec::new(),
            loglik: Vec::new(),
            meta,
        }
    }

    pub fn push(&mut self, state: S, loglik: f64) {
        self.states.push(state);
        self.loglik.push(loglik);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Concatenate chains (in order) into one pooled draw set.
    pub fn pooled(chains: &[PosteriorDraws<S>]) -> Result<Self> {
        let first = chains.first().ok_or(Error::EmptyDraws)?;
        let mut out = Self::new(first.meta.clone());
        for c in chains {
            out.states.extend(c.states.iter().cloned());
            out.loglik.extend(c.loglik.iter().copied());
        }
        Ok(out)
    }

    /// Per-observation log densities, observation-major: entry
    /// `[i * B + b]` is `log p(y_i | Θ⁽ᵇ⁾)` with `i` running over the stacked
    /// (group-major) observations.
    pub fn pointwise_loglik(&self, ds: &GroupedDataset) -> PointwiseLogLik {
        let b = self.len();
        let n = ds.n_total();
        let mut values = vec![0.0; n * b];
        for (d, state) in self.states.iter().enumerate() {
            let mut i = 0;
            for (j, g) in ds.groups().iter().enumerate() {
                let var = state.variance(j);
                let fitted = &g.x * state.coefficients(j);
                for r in 0..g.len() {
                    values[i * b + d] = normal_logpdf(g.y[r], fitted[r], var);
                    i += 1;
                }
            }
        }
        PointwiseLogLik {
            n_obs: n,
            n_draws: b,
            values,
        }
    }
}

/// Matrix of per-observation, per-draw log densities.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLogLik {
    pub n_obs: usize,
    pub n_draws: usize,
    /// Observation-major.
    pub values: Vec<f64>,
}

impl PointwiseLogLik {
    pub fn observation(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_draws..(i + 1) * self.n_draws]
    }
}

/// Mean computed over sorted values, so the result does not depend on the
/// order of the inputs.
pub fn order_invariant_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

const MAGIC: &[u8; 8] = b"HRDRAWS1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileHeader {
    meta: RunMeta,
    dims: StateDims,
    draws: usize,
}

/// Write draws as: 8-byte magic, little-endian `u32` header length, JSON
/// header, then per draw the log-likelihood followed by the flattened state,
/// all as little-endian `f64`. Values are stored bit-exactly.
pub fn write_draws<S: ModelState, W: Write>(
    draws: &PosteriorDraws<S>,
    dims: StateDims,
    mut w: W,
) -> Result<()> {
    let header = serde_json::to_vec(&FileHeader {
        meta: draws.meta.clone(),
        dims,
        draws: draws.len(),
    })?;
    let io = |e| Error::io("<draws>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(header.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    let mut buf = Vec::with_capacity(S::flat_len(&dims) + 1);
    for (state, ll) in draws.states.iter().zip(&draws.loglik) {
        buf.clear();
        buf.push(*ll);
        state.write_flat(&mut buf);
        if buf.len() != S::flat_len(&dims) + 1 {
            return Err(Error::Format("state does not match declared dimensions".into()));
        }
        for v in &buf {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Header of a draws file, readable without decoding the states.
pub fn read_draws_header<R: Read>(r: &mut R) -> Result<(RunMeta, StateDims, usize)> {
    let io = |e| Error::io("<draws>", e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(io)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header).map_err(io)?;
    let h: FileHeader = serde_json::from_slice(&header)?;
    Ok((h.meta, h.dims, h.draws))
}

/// Read the body of a draws file after [`read_draws_header`].
pub fn read_draws_body<S: ModelState, R: Read>(
    r: &mut R,
    meta: RunMeta,
    dims: StateDims,
    count: usize,
) -> Result<PosteriorDraws<S>> {
    let width = S::flat_len(&dims) + 1;
    let mut bytes = vec![0u8; width * 8];
    let mut row = vec![0.0; width];
    let mut out = PosteriorDraws::new(meta);
    for _ in 0..count {
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format("truncated draws file".into()))?;
        for (v, chunk) in row.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        out.push(S::read_flat(&dims, &row[1..])?, row[0]);
    }
    Ok(out)
}

pub fn write_draws_path<S: ModelState>(
    draws: &PosteriorDraws<S>,
    dims: StateDims,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_draws(draws, dims, std::io::BufWriter::new(f))
}
