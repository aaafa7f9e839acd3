//! Posterior summary tables: mean, SD and 95% equal-tail quantiles.

use std::io::Write;

use serde::Serialize;

use crate::data::GroupedDataset;
use crate::draws::{order_invariant_mean, ModelState, PosteriorDraws, StateDims};
use crate::{Error, Result};

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Sample standard deviation (divisor `n − 1`), computed over sorted values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = order_invariant_mean(values);
    let mut sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    (sq.iter().sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl SummaryRow {
    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            name: name.into(),
            mean: order_invariant_mean(values),
            sd: std_dev(values),
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    /// One row per label-invariant scalar of the model state.
    pub fn from_draws<S: ModelState>(draws: &PosteriorDraws<S>, dims: &StateDims, ds: &GroupedDataset) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptyDraws);
        }
        let names = S::summary_names(dims, &ds.coefficient_names(), &ds.group_ids());
        let mut columns = vec![Vec::with_capacity(draws.len()); names.len()];
        let mut buf = Vec::with_capacity(names.len());
        for s in &draws.states {
            buf.clear();
            s.summary_values(&mut buf);
            for (c, v) in columns.iter_mut().zip(&buf) {
                c.push(*v);
            }
        }
        Ok(Self {
            rows: names
                .into_iter()
                .zip(&columns)
                .map(|(n, c)| SummaryRow::from_values(n, c))
                .collect(),
        })
    }

    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// CSV with full round-trip precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["parameter", "mean", "sd", "q2.5", "q97.5"])?;
        for r in &self.rows {
            out.write_record([
                r.name.clone(),
                r.mean.to_string(),
                r.sd.to_string(),
                r.q025.to_string(),
                r.q975.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<summary>", e))
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
        let mut s = format!(
            "{:<width$} {:>12} {:>12} {:>12} {:>12}\n",
            "parameter", "Mean", "SD", "Q2.5%", "Q97.5%"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<width$} {:>12.4} {:>12.4} {:>12.4} {:>12.4}\n",
                r.name, r.mean, r.sd, r.q025, r.q975
            ));
        }
        s
    }
}

/// 95% interval of one group's coefficient, flagged when it excludes zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupInterval {
    pub group: String,
    pub coefficient: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub significant: bool,
}

/// Intervals for the coefficients generating each group's data. For the
/// clustering model these are the coefficients of the group's current
/// cluster, which are label-invariant.
pub fn group_intervals<S: ModelState>(draws: &PosteriorDraws<S>, ds: &GroupedDataset) -> Result<Vec<GroupInterval>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let names = ds.coefficient_names();
    let mut out = Vec::new();
    for (j, id) in ds.group_ids().into_iter().enumerate() {
        for (c, cname) in names.iter().enumerate() {
            let vals: Vec<f64> = draws.states.iter().map(|s| s.coefficients(j)[c]).collect();
            let row = SummaryRow::from_values("", &vals);
            out.push(GroupInterval {
                group: id.clone(),
                coefficient: cname.clone(),
                mean: row.mean,
                lower: row.q025,
                upper: row.q975,
                significant: row.q025 > 0.0 || row.q975 < 0.0,
            });
        }
    }
    Ok(out)
}

pub fn write_group_intervals_csv<W: Write>(rows: &[GroupInterval], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "coefficient", "mean", "q2.5", "q97.5", "width", "significant"])?;
    for r in rows {
        out.write_record([
            r.group.clone(),
            r.coefficient.clone(),
            r.mean.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            (r.upper - r.lower).to_string(),
            r.significant.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<intervals>", e))
}
