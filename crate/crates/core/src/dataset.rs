//! Ingestion of longitudinal data and construction of regression problems.
//!
//! Two routes lead to a [`RegressionProblem`]: a long-format CSV plus a
//! [`ModelSpec`] (intercept, numeric and dummy-coded categorical terms), or a
//! precomputed design matrix exported from elsewhere together with a response
//! file and a `subject_id,time` groups file.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Names of the columns that play the subject, time and response roles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnRoles {
    pub subject: String,
    pub time: String,
    pub response: String,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        ColumnRoles {
            subject: "subject".into(),
            time: "time".into(),
            response: "response".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongRow {
    pub subject: String,
    pub time: f64,
    pub response: f64,
    /// Raw covariate cells, in the order of [`LongDataset::covariate_names`].
    pub covariates: Vec<String>,
    /// 1-based line in the source file, for error messages.
    pub line: usize,
}

/// Long-format dataset: one row per (subject, time) observation, sorted by
/// subject then ascending time.
#[derive(Clone, Debug, PartialEq)]
pub struct LongDataset {
    roles: ColumnRoles,
    covariate_names: Vec<String>,
    rows: Vec<LongRow>,
    source: String,
}

impl LongDataset {
    /// Validates and canonicalises rows: sorts by (subject, time) and rejects
    /// duplicated observations.
    pub fn new(
        roles: ColumnRoles,
        covariate_names: Vec<String>,
        mut rows: Vec<LongRow>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let source = source.into();
        for r in &rows {
            if r.covariates.len() != covariate_names.len() {
                return Err(Error::Parse {
                    path: source.clone(),
                    line: r.line,
                    msg: format!(
                        "expected {} covariates, found {}",
                        covariate_names.len(),
                        r.covariates.len()
                    ),
                });
            }
        }
        rows.sort_by(|a, b| a.subject.cmp(&b.subject).then(a.time.total_cmp(&b.time)));
        for w in rows.windows(2) {
            if w[0].subject == w[1].subject && w[0].time == w[1].time {
                return Err(Error::Parse {
                    path: source.clone(),
                    line: w[0].line.max(w[1].line),
                    msg: format!(
                        "duplicate observation for subject {} at time {}",
                        w[1].subject, w[1].time
                    ),
                });
            }
        }
        Ok(LongDataset {
            roles,
            covariate_names,
            rows,
            source,
        })
    }

    pub fn roles(&self) -> &ColumnRoles {
        &self.roles
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn rows(&self) -> &[LongRow] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.groups().len()
    }

    pub fn groups(&self) -> Groups {
        Groups::from_labels(self.rows.iter().map(|r| r.subject.as_str()))
            .expect("rows are sorted by subject")
    }

    fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
}

fn parse_number(field: &str, column: &str, path: &str, line: usize) -> Result<f64> {
    if is_missing(field) {
        return Err(Error::Parse {
            path: path.into(),
            line,
            msg: format!("missing value in column {column}"),
        });
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.into(),
            line,
            msg: format!("non-numeric value {field:?} in column {column}"),
        }),
    }
}

/// Reads a long-format CSV (header required) from `path`.
pub fn load_long_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<LongDataset> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&name, e))?;
    read_long_csv(file, &name, roles)
}

pub fn read_long_csv<R: Read>(reader: R, source: &str, roles: &ColumnRoles) -> Result<LongDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse {
            path: source.into(),
            line,
            msg: e.to_string(),
        }
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let find = |col: &str| {
        header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::Parse {
                path: source.into(),
                line: 1,
                msg: format!("missing column {col:?}"),
            })
    };
    let subj_ix = find(&roles.subject)?;
    let time_ix = find(&roles.time)?;
    let resp_ix = find(&roles.response)?;
    let cov_ix: Vec<usize> = (0..header.len())
        .filter(|i| ![subj_ix, time_ix, resp_ix].contains(i))
        .collect();
    let covariate_names = cov_ix.iter().map(|&i| header[i].clone()).collect();

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let subject = field(subj_ix);
        if is_missing(subject) {
            return Err(Error::Parse {
                path: source.into(),
                line,
                msg: "missing subject id".into(),
            });
        }
        let time = parse_number(field(time_ix), &roles.time, source, line)?;
        if time < 0.0 {
            return Err(Error::Parse {
                path: source.into(),
                line,
                msg: format!("negative time {time}"),
            });
        }
        let response = parse_number(field(resp_ix), &roles.response, source, line)?;
        let mut covariates = Vec::with_capacity(cov_ix.len());
        for &i in &cov_ix {
            let v = field(i);
            if is_missing(v) {
                return Err(Error::Parse {
                    path: source.into(),
                    line,
                    msg: format!("missing value in column {}", header[i]),
                });
            }
            covariates.push(v.to_owned());
        }
        rows.push(LongRow {
            subject: subject.to_owned(),
            time,
            response,
            covariates,
            line,
        });
    }
    LongDataset::new(roles.clone(), covariate_names, rows, source)
}

/// Writes `data` as a long-format CSV. Numbers use the shortest decimal form
/// that parses back to the same `f64`.
pub fn write_long_csv<W: Write>(data: &LongDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::data(format!("writing long CSV: {e}"));
    let mut header = vec![
        data.roles.subject.clone(),
        data.roles.time.clone(),
        data.roles.response.clone(),
    ];
    header.extend(data.covariate_names.iter().cloned());
    w.write_record(&header).map_err(to_err)?;
    for r in &data.rows {
        let mut rec = vec![
            r.subject.clone(),
            format!("{}", r.time),
            format!("{}", r.response),
        ];
        rec.extend(r.covariates.iter().cloned());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(&data.source, e))?;
    Ok(())
}

/// Partition of `0..n` into contiguous, ordered subject blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Groups {
    ids: Vec<String>,
    starts: Vec<usize>,
    group_of: Vec<usize>,
}

impl Groups {
    /// Groups consecutive equal labels. A label that reappears after a
    /// different one is an error: blocks must be contiguous.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut starts = Vec::new();
        let mut group_of = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, l) in labels.into_iter().enumerate() {
            if ids.last().map(String::as_str) != Some(l) {
                if !seen.insert(l.to_owned()) {
                    return Err(Error::data(format!(
                        "rows of subject {l} are not contiguous (row {})",
                        i + 1
                    )));
                }
                ids.push(l.to_owned());
                starts.push(i);
            }
            group_of.push(ids.len() - 1);
        }
        starts.push(group_of.len());
        Ok(Groups {
            ids,
            starts,
            group_of,
        })
    }

    /// One group per observation.
    pub fn singletons(n: usize) -> Self {
        Groups {
            ids: (1..=n).map(|i| i.to_string()).collect(),
            starts: (0..=n).collect(),
            group_of: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_obs(&self) -> usize {
        self.group_of.len()
    }

    pub fn range(&self, g: usize) -> Range<usize> {
        self.starts[g]..self.starts[g + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.len()).map(move |g| self.range(g))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.starts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn id(&self, g: usize) -> &str {
        &self.ids[g]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }
}

/// Response, design matrix and longitudinal layout of one regression.
///
/// `positions` are the within-subject visit indices used by the positional
/// AR(1) family; they are carried unchanged through row deletion so that a
/// reduced problem sees the same correlation as the rows of the full one.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionProblem<T> {
    y: Vec<T>,
    x: Matrix<T>,
    groups: Groups,
    times: Vec<T>,
    positions: Vec<usize>,
    column_names: Vec<String>,
}

impl<T: Real> RegressionProblem<T> {
    pub fn new(
        y: Vec<T>,
        x: Matrix<T>,
        groups: Groups,
        times: Vec<T>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let positions = groups.ranges().flat_map(|r| 0..r.len()).collect();
        Self::with_positions(y, x, groups, times, positions, column_names)
    }

    pub fn with_positions(
        y: Vec<T>,
        x: Matrix<T>,
        groups: Groups,
        times: Vec<T>,
        positions: Vec<usize>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let p = x.ncols();
        if x.nrows() != n || groups.n_obs() != n || times.len() != n || positions.len() != n {
            return Err(Error::data(format!(
                "dimension mismatch: Y has {n} rows, X has {}, groups {}, times {}",
                x.nrows(),
                groups.n_obs(),
                times.len()
            )));
        }
        if column_names.len() != p {
            return Err(Error::data(format!(
                "dimension mismatch: {p} columns but {} names",
                column_names.len()
            )));
        }
        if p == 0 {
            return Err(Error::data("design matrix has no columns"));
        }
        if n <= p {
            return Err(Error::data(format!(
                "need more observations than columns (n = {n}, p = {p})"
            )));
        }
        if y.iter()
            .chain(x.as_slice())
            .chain(&times)
            .any(|v| !v.is_finite())
        {
            return Err(Error::data("non-finite value in response, design or times"));
        }
        for (g, r) in groups.ranges().enumerate() {
            for i in r.start + 1..r.end {
                if !(times[i] > times[i - 1]) {
                    return Err(Error::data(format!(
                        "times not strictly increasing within subject {} (row {})",
                        groups.id(g),
                        i + 1
                    )));
                }
                if positions[i] <= positions[i - 1] {
                    return Err(Error::data(format!(
                        "positions not increasing within subject {}",
                        groups.id(g)
                    )));
                }
            }
        }
        Ok(RegressionProblem {
            y,
            x,
            groups,
            times,
            positions,
            column_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn groups(&self) -> &Groups {
        &self.groups
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Same design and layout with a different response vector.
    pub fn with_response(&self, y: Vec<T>) -> Result<Self> {
        Self::with_positions(
            y,
            self.x.clone(),
            self.groups.clone(),
            self.times.clone(),
            self.positions.clone(),
            self.column_names.clone(),
        )
    }

    /// The problem restricted to the rows in `keep` (ascending). Subjects
    /// left without rows disappear; times and positions are preserved.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        let labels: Vec<&str> = keep
            .iter()
            .map(|&i| self.groups.id(self.groups.group_of(i)))
            .collect();
        Self::with_positions(
            keep.iter().map(|&i| self.y[i]).collect(),
            self.x.select_rows(keep),
            Groups::from_labels(labels)?,
            keep.iter().map(|&i| self.times[i]).collect(),
            keep.iter().map(|&i| self.positions[i]).collect(),
            self.column_names.clone(),
        )
    }

    /// Converts every numeric field to another scalar type.
    pub fn cast<U: Real>(&self) -> RegressionProblem<U> {
        let conv = |v: T| U::lit(v.to_f64_lossy());
        RegressionProblem {
            y: self.y.iter().map(|&v| conv(v)).collect(),
            x: Matrix::from_row_major(
                self.x.nrows(),
                self.x.ncols(),
                self.x.as_slice().iter().map(|&v| conv(v)).collect(),
            ),
            groups: self.groups.clone(),
            times: self.times.iter().map(|&v| conv(v)).collect(),
            positions: self.positions.clone(),
            column_names: self.column_names.clone(),
        }
    }
}

/// Which columns enter the design, and how.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub response: String,
    pub numeric_terms: Vec<String>,
    /// (column, reference level) pairs, dummy coded against the reference.
    pub categorical_terms: Vec<(String, String)>,
    pub intercept: bool,
}

/// Builds `Y` and `X` from a long dataset. Rank is not checked here.
pub fn build_design<T: Real>(data: &LongDataset, spec: &ModelSpec) -> Result<RegressionProblem<T>> {
    let unknown = |c: &str| Error::data(format!("unknown column {c:?}"));
    let numeric_column = |name: &str| -> Result<Vec<f64>> {
        if name == data.roles.response {
            return Ok(data.rows.iter().map(|r| r.response).collect());
        }
        if name == data.roles.time {
            return Ok(data.rows.iter().map(|r| r.time).collect());
        }
        let j = data.covariate_index(name).ok_or_else(|| unknown(name))?;
        data.rows
            .iter()
            .map(|r| parse_number(&r.covariates[j], name, &data.source, r.line))
            .collect()
    };

    let y = numeric_column(&spec.response)?;
    let n = y.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    if spec.intercept {
        columns.push(vec![1.0; n]);
        names.push("(Intercept)".to_owned());
    }
    for term in &spec.numeric_terms {
        columns.push(numeric_column(term)?);
        names.push(term.clone());
    }
    for (term, reference) in &spec.categorical_terms {
        let cells: Vec<&str> = if term == &data.roles.subject {
            data.rows.iter().map(|r| r.subject.as_str()).collect()
        } else {
            let j = data.covariate_index(term).ok_or_else(|| unknown(term))?;
            data.rows.iter().map(|r| r.covariates[j].as_str()).collect()
        };
        let levels: BTreeSet<&str> = cells.iter().copied().collect();
        if !levels.contains(reference.as_str()) {
            return Err(Error::data(format!(
                "unknown level {reference:?} for column {term:?}"
            )));
        }
        let others: Vec<&str> = levels.into_iter().filter(|l| l != reference).collect();
        let slot: HashMap<&str, usize> = others.iter().enumerate().map(|(k, &l)| (l, k)).collect();
        let base = columns.len();
        for l in &others {
            columns.push(vec![0.0; n]);
            names.push(format!("{term}[{l}]"));
        }
        for (i, c) in cells.iter().enumerate() {
            if let Some(&k) = slot.get(c) {
                columns[base + k][i] = 1.0;
            }
        }
    }
    let p = columns.len();
    let x = Matrix::from_fn(n, p, |i, j| T::lit(columns[j][i]));
    RegressionProblem::new(
        y.into_iter().map(T::lit).collect(),
        x,
        data.groups(),
        data.rows.iter().map(|r| T::lit(r.time)).collect(),
        names,
    )
}

fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&name, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: name.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| parse_number(f, &format!("{}", j + 1), &name, line))
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Loads a precomputed design: headerless numeric `X`, a one-column `Y`, and
/// a `subject_id,time` groups file (optional header) in the same row order.
pub fn load_design_csv<T: Real>(
    x_path: impl AsRef<Path>,
    y_path: impl AsRef<Path>,
    groups_path: impl AsRef<Path>,
) -> Result<RegressionProblem<T>> {
    let x_rows = read_numeric_rows(x_path.as_ref())?;
    let y_rows = read_numeric_rows(y_path.as_ref())?;
    let y: Vec<f64> = y_rows
        .iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Parse {
                path: y_path.as_ref().display().to_string(),
                line: i + 1,
                msg: format!("expected one value per line, found {}", r.len()),
            }),
        })
        .collect::<Result<_>>()?;

    let gname = groups_path.as_ref().display().to_string();
    let file = File::open(groups_path.as_ref()).map_err(|e| Error::io(&gname, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut labels = Vec::new();
    let mut times = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: gname.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse {
                path: gname.clone(),
                line,
                msg: "expected subject_id,time".into(),
            });
        }
        if k == 0 && rec[1].parse::<f64>().is_err() {
            continue; // header
        }
        if is_missing(&rec[0]) {
            return Err(Error::Parse {
                path: gname.clone(),
                line,
                msg: "missing subject id".into(),
            });
        }
        labels.push(rec[0].to_owned());
        times.push(parse_number(&rec[1], "time", &gname, line)?);
    }

    let n = x_rows.len();
    if y.len() != n || labels.len() != n {
        return Err(Error::data(format!(
            "dimension mismatch: X has {n} rows, Y has {}, groups has {}",
            y.len(),
            labels.len()
        )));
    }
    let p = x_rows.first().map_or(0, Vec::len);
    if let Some(i) = x_rows.iter().position(|r| r.len() != p) {
        return Err(Error::data(format!(
            "dimension mismatch: X row {} has {} columns, expected {p}",
            i + 1,
            x_rows[i].len()
        )));
    }
    let groups = Groups::from_labels(labels.iter().map(String::as_str))?;
    let x = Matrix::from_fn(n, p, |i, j| T::lit(x_rows[i][j]));
    RegressionProblem::new(
        y.into_iter().map(T::lit).collect(),
        x,
        groups,
        times.into_iter().map(T::lit).collect(),
        (1..=p).map(|j| format!("x{j}")).collect(),
    )
}
