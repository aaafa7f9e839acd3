//! Grouped regression data: CSV ingestion, validation and stacking.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::linalg::qr_least_squares;
use crate::{Error, Result};

/// One group's responses and design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: String,
    pub y: DVector<f64>,
    /// `n_j × p`, intercept column first when the dataset has one.
    pub x: DMatrix<f64>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `XᵀX`, `Xᵀy` and `yᵀy` of this group.
    pub fn suff_stats(&self) -> SuffStats {
        SuffStats {
            xtx: self.x.tr_mul(&self.x),
            xty: self.x.tr_mul(&self.y),
            yty: self.y.norm_squared(),
            n: self.len(),
        }
    }

    /// `Σᵢ (y_i − x_iᵀβ)²`, evaluated row by row.
    pub fn residual_ss(&self, beta: &DVector<f64>) -> f64 {
        (&self.y - &self.x * beta).norm_squared()
    }
}

/// Sufficient statistics of a Gaussian linear regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn zeros(p: usize) -> Self {
        Self {
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            n: 0,
        }
    }

    pub fn add_assign(&mut self, other: &SuffStats) {
        self.xtx += &other.xtx;
        self.xty += &other.xty;
        self.yty += other.yty;
        self.n += other.n;
    }

    /// `yᵀy − 2βᵀXᵀy + βᵀXᵀXβ`, clamped at zero. Cheaper than a pass over
    /// the rows but subject to cancellation when the fit is near exact.
    pub fn residual_ss(&self, beta: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(&self.xtx * beta));
        (self.yty - 2.0 * beta.dot(&self.xty) + quad).max(0.0)
    }
}

/// Column names carried alongside the numbers so a dataset can be written
/// back out in the layout it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub response: String,
    pub group: String,
    /// Non-intercept covariates, in design-matrix order.
    pub covariates: Vec<String>,
    pub intercept: bool,
}

impl Columns {
    /// Default names for `p` coefficients: `x1, x2, …` after an intercept.
    pub fn generic(p: usize, intercept: bool) -> Self {
        let k = if intercept { p.saturating_sub(1) } else { p };
        Self {
            response: "y".into(),
            group: "group".into(),
            covariates: (1..=k).map(|i| format!("x{i}")).collect(),
            intercept,
        }
    }

    /// Names of the `p` coefficients.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.covariates.len() + 1);
        if self.intercept {
            out.push("intercept".to_string());
        }
        out.extend(self.covariates.iter().cloned());
        out
    }
}

/// Responses `y_{i,j}` and covariate rows `x_{i,j}` arranged by group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    groups: Vec<Group>,
    p: usize,
    columns: Columns,
}

impl GroupedDataset {
    /// Validate and assemble a dataset. Every group must be nonempty, share
    /// `p` columns and hold finite values; the stacked design needs `N > p`
    /// and full column rank.
    pub fn new(groups: Vec<Group>, columns: Columns) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidParameter("dataset has no groups".into()));
        }
        let p = groups[0].x.ncols();
        let expected = columns.covariates.len() + usize::from(columns.intercept);
        if p != expected {
            return Err(Error::DimensionMismatch(format!(
                "design has {p} columns but {expected} coefficient names"
            )));
        }
        for g in &groups {
            if g.is_empty() {
                return Err(Error::EmptyGroup(g.id.clone()));
            }
            if g.x.ncols() != p || g.x.nrows() != g.y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "group `{}` has a {}x{} design for {} responses",
                    g.id,
                    g.x.nrows(),
                    g.x.ncols(),
                    g.y.len()
                )));
            }
            if g.y.iter().chain(g.x.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset"));
            }
        }
        let ds = Self { groups, p, columns };
        let n = ds.n_total();
        if n <= p {
            return Err(Error::TooFewObservations { n, p });
        }
        let stacked = ds.stack();
        qr_least_squares(&stacked.x, &stacked.y)?;
        Ok(ds)
    }

    /// Dataset with `m` groups and no observations, used to check that a
    /// sampler reproduces its prior. Not accepted by [`GroupedDataset::new`].
    pub fn prior_only(m: usize, p: usize) -> Self {
        let groups = (0..m)
            .map(|j| Group {
                id: format!("g{}", j + 1),
                y: DVector::zeros(0),
                x: DMatrix::zeros(0, p),
            })
            .collect();
        Self {
            groups,
            p,
            columns: Columns::generic(p, true),
        }
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &Group {
        &self.groups[j]
    }

    /// Number of groups `m`.
    pub fn m(&self) -> usize {
        self.groups.len()
    }

    /// Coefficient count including the intercept.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Total observations `N = Σ n_j`.
    pub fn n_total(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    pub fn columns(&self) -> &Columns {
        &self.columns
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        self.columns.coefficient_names()
    }

    pub fn group_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.id.clone()).collect()
    }

    /// Group-major stacking: rows of group 1, then group 2, …
    pub fn stack(&self) -> StackedView {
        let n = self.n_total();
        let mut y = DVector::zeros(n);
        let mut x = DMatrix::zeros(n, self.p);
        let mut offsets = Vec::with_capacity(self.m() + 1);
        let mut row = 0;
        offsets.push(0);
        for g in &self.groups {
            let nj = g.len();
            y.rows_mut(row, nj).copy_from(&g.y);
            x.rows_mut(row, nj).copy_from(&g.x);
            row += nj;
            offsets.push(row);
        }
        StackedView { y, x, offsets }
    }

    /// Response column of the stacked data.
    pub fn stacked_response(&self) -> Vec<f64> {
        self.groups.iter().flat_map(|g| g.y.iter().copied()).collect()
    }

    /// Write in the CSV layout accepted by [`load_csv`]: group, response,
    /// then non-intercept covariates. Floats use shortest round-trip
    /// formatting, so reading the file back is exact.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.columns.group.clone(), self.columns.response.clone()];
        header.extend(self.columns.covariates.iter().cloned());
        w.write_record(&header)?;
        let skip = usize::from(self.columns.intercept);
        for g in &self.groups {
            for i in 0..g.len() {
                let mut rec = vec![g.id.clone(), format!("{:?}", g.y[i])];
                for c in skip..self.p {
                    rec.push(format!("{:?}", g.x[(i, c)]));
                }
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// `y`, `X` stacked group-major, plus the row offset where each group starts
/// (`offsets[m] = N`).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedView {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub offsets: Vec<usize>,
}

impl StackedView {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Split back into per-group `(y_j, X_j)`.
    pub fn unstack(&self) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        self.offsets
            .windows(2)
            .map(|w| {
                let (start, len) = (w[0], w[1] - w[0]);
                (
                    self.y.rows(start, len).into_owned(),
                    self.x.rows(start, len).into_owned(),
                )
            })
            .collect()
    }
}

/// Column selection for [`load_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub response: String,
    pub covariates: Vec<String>,
    pub group: String,
    /// Prepend a column of ones (default on).
    pub add_intercept: bool,
    /// Keep only these groups, in this order. A listed group with no rows is
    /// an error.
    pub groups: Option<Vec<String>>,
}

impl LoadOptions {
    pub fn new(response: &str, covariates: &[&str], group: &str) -> Self {
        Self {
            response: response.into(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            group: group.into(),
            add_intercept: true,
            groups: None,
        }
    }
}

/// Read a headed CSV file into a grouped dataset. Groups appear in order of
/// first appearance in the file.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<GroupedDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), opts)
}

pub fn read_csv<R: Read>(reader: R, opts: &LoadOptions) -> Result<GroupedDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let response_idx = find(&opts.response)?;
    let group_idx = find(&opts.group)?;
    let cov_idx = opts
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, Vec<f64>)>> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let parse = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ParseNumber {
                    row,
                    column: headers[idx].to_string(),
                    value: raw.to_string(),
                })
        };
        let gid = rec.get(group_idx).unwrap_or("").to_string();
        if let Some(keep) = &opts.groups {
            if !keep.contains(&gid) {
                continue;
            }
        }
        let y = parse(response_idx)?;
        let xs = cov_idx.iter().map(|&i| parse(i)).collect::<Result<Vec<_>>>()?;
        if !rows.contains_key(&gid) {
            order.push(gid.clone());
        }
        rows.entry(gid).or_default().push((y, xs));
    }
    if let Some(keep) = &opts.groups {
        if let Some(missing) = keep.iter().find(|g| !rows.contains_key(*g)) {
            return Err(Error::EmptyGroup(missing.clone()));
        }
        order = keep.clone();
    }
    if order.is_empty() {
        return Err(Error::InvalidParameter("no data rows".into()));
    }

    let p = opts.covariates.len() + usize::from(opts.add_intercept);
    let offset = usize::from(opts.add_intercept);
    let groups = order
        .into_iter()
        .map(|id| {
            let rs = rows.remove(&id).unwrap_or_default();
            let y = DVector::from_iterator(rs.len(), rs.iter().map(|r| r.0));
            let x = DMatrix::from_fn(rs.len(), p, |i, c| {
                if c < offset {
                    1.0
                } else {
                    rs[i].1[c - offset]
                }
            });
            Group { id, y, x }
        })
        .collect();
    let columns = Columns {
        response: opts.response.clone(),
        group: opts.group.clone(),
        covariates: opts.covariates.clone(),
        intercept: opts.add_intercept,
    };
    GroupedDataset::new(groups, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "farm,size,n\nA,1,0\nA,3,1\nA,5,2\n";

    fn opts() -> LoadOptions {
        LoadOptions::new("size", &["n"], "farm")
    }

    #[test]
    fn intercept_is_prepended() {
        let ds = read_csv(SMALL.as_bytes(), &opts()).unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.m(), 1);
        assert!(ds.group(0).x.column(0).iter().all(|v| *v == 1.0));
        assert_eq!(ds.group(0).x.column(1).as_slice(), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.coefficient_names(), vec!["intercept", "n"]);
    }

    #[test]
    fn missing_column_is_named() {
        let mut o = opts();
        o.covariates = vec!["nitrogen".into()];
        match read_csv(SMALL.as_bytes(), &o) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "nitrogen"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparsable_number() {
        let bad = "farm,size,n\nA,1,0\nA,x,1\nA,5,2\n";
        match read_csv(bad.as_bytes(), &opts()) {
            Err(Error::ParseNumber { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "size", "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filtered_group_without_rows_is_empty() {
        let mut o = opts();
        o.groups = Some(vec!["A".into(), "B".into()]);
        match read_csv(SMALL.as_bytes(), &o) {
            Err(Error::EmptyGroup(g)) => assert_eq!(g, "B"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_deficient_design() {
        let dup = "g,y,a,b\nA,1,1,2\nA,2,2,4\nA,4,3,6\nA,3,4,8\n";
        let o = LoadOptions::new("y", &["a", "b"], "g");
        assert!(matches!(read_csv(dup.as_bytes(), &o), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn too_few_rows() {
        let tiny = "g,y,a\nA,1,1\nA,2,2\n";
        let o = LoadOptions::new("y", &["a"], "g");
        assert!(matches!(read_csv(tiny.as_bytes(), &o), Err(Error::TooFewObservations { .. })));
    }

    #[test]
    fn group_order_is_first_appearance() {
        let s = "g,y,a\nB,1,1\nA,2,2\nB,4,3\nA,3,5\n";
        let ds = read_csv(s.as_bytes(), &LoadOptions::new("y", &["a"], "g")).unwrap();
        assert_eq!(ds.group_ids(), vec!["B", "A"]);
        assert_eq!(ds.group(0).y.as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn stack_two_groups() {
        let s = "g,y,a\nA,1,1\nA,2,2\nB,4,3\nB,3,5\nB,7,6\n";
        let ds = read_csv(s.as_bytes(), &LoadOptions::new("y", &["a"], "g")).unwrap();
        let st = ds.stack();
        assert_eq!(st.n(), 5);
        assert_eq!(st.offsets, vec![0, 2, 5]);
        assert_eq!(st.y.as_slice(), &[1.0, 2.0, 4.0, 3.0, 7.0]);
        for (j, (y, x)) in st.unstack().into_iter().enumerate() {
            assert_eq!(y, ds.group(j).y);
            assert_eq!(x, ds.group(j).x);
        }
    }

    fn arb_dataset() -> impl Strategy<Value = GroupedDataset> {
        proptest::collection::vec(
            proptest::collection::vec((-1e6f64..1e6, -1e3f64..1e3), 1..6),
            1..5,
        )
        .prop_filter_map("needs a usable design", |groups| {
            let groups = groups
                .into_iter()
                .enumerate()
                .map(|(j, rows)| Group {
                    id: format!("grp{j}"),
                    y: DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0)),
                    x: DMatrix::from_fn(rows.len(), 2, |i, c| if c == 0 { 1.0 } else { rows[i].1 }),
                })
                .collect();
            GroupedDataset::new(groups, Columns::generic(2, true)).ok()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(ds in arb_dataset()) {
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let back = read_csv(buf.as_slice(), &LoadOptions::new("y", &["x1"], "group")).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn offsets_increase_to_n(ds in arb_dataset()) {
            let st = ds.stack();
            prop_assert!(st.offsets.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(*st.offsets.last().unwrap(), ds.n_total());
        }
    }
}
