//! Tabular input: CSV ingestion, factor dummification, missing-data
//! augmentation, fold assignment and synthetic Friedman data.
//!
//! Missing predictor cells are stored as `NaN` inside [`ModelFrame`]; the
//! tree router sends them left or right according to the split's MIA type.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BartError, Result};

/// Cell values of one raw column.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValues {
    Numeric(Vec<Option<f64>>),
    /// `codes[i]` indexes into `levels`; levels are sorted lexicographically.
    Categorical {
        levels: Vec<String>,
        codes: Vec<Option<usize>>,
    },
}

impl RawValues {
    pub fn len(&self) -> usize {
        match self {
            RawValues::Numeric(v) => v.len(),
            RawValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            RawValues::Numeric(v) => v[row].is_none(),
            RawValues::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, RawValues::Categorical { .. })
    }

    fn subset(&self, rows: &[usize]) -> RawValues {
        match self {
            RawValues::Numeric(v) => RawValues::Numeric(rows.iter().map(|&i| v[i]).collect()),
            RawValues::Categorical { levels, codes } => RawValues::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&i| codes[i]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub values: RawValues,
}

impl RawColumn {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        RawColumn { name: name.into(), values: RawValues::Numeric(values) }
    }

    /// Builds a categorical column from string cells, sorting the level set.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, cells: &[Option<S>]) -> Self {
        let levels: Vec<String> = cells
            .iter()
            .flatten()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = cells
            .iter()
            .map(|c| c.as_ref().map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap()))
            .collect();
        RawColumn { name: name.into(), values: RawValues::Categorical { levels, codes } }
    }
}

/// Predictor columns plus the response, before any preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    pub response: RawColumn,
    /// Positive class name when the response is a two-level factor.
    pub positive_level: Option<String>,
}

const MISSING_MARKERS: [&str; 2] = ["na", "nan"];

fn is_missing_marker(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || MISSING_MARKERS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

/// Reads a headed CSV file. A column is categorical iff any non-missing cell
/// fails to parse as a number. Empty cells, `NA` and `nan` are missing.
pub fn load_csv(path: impl AsRef<Path>, response_column: &str, positive_level: Option<&str>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| BartError::Io { path: path.to_path_buf(), source })?;
    read_csv(file, response_column, positive_level)
}

/// Like [`load_csv`] but from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, response_column: &str, positive_level: Option<&str>) -> Result<RawTable> {
    read_csv_inner(reader, response_column, positive_level, true)
}

/// Reads data to predict on. When the response column is absent it is
/// replaced by zeros.
pub fn load_prediction_csv(path: impl AsRef<Path>, response_column: &str) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| BartError::Io { path: path.to_path_buf(), source })?;
    read_csv_inner(file, response_column, None, false)
}

fn read_csv_inner<R: std::io::Read>(
    reader: R,
    response_column: &str,
    positive_level: Option<&str>,
    response_required: bool,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| BartError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(BartError::Csv(format!("duplicate column name `{h}`")));
        }
    }
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| BartError::Csv(e.to_string()))?;
        for (j, cell) in record.iter().enumerate() {
            cells[j].push(if is_missing_marker(cell) { None } else { Some(cell.trim().to_string()) });
        }
    }
    let response_idx = match headers.iter().position(|h| h == response_column) {
        Some(i) => i,
        None if !response_required => {
            let n = cells.first().map_or(0, Vec::len);
            if n == 0 {
                return Err(BartError::data("CSV has no data rows"));
            }
            let columns = headers
                .into_iter()
                .zip(cells)
                .map(|(name, col)| parse_column(name, &col))
                .collect();
            let response = RawColumn::numeric(response_column, vec![Some(0.0); n]);
            return Ok(RawTable { columns, response, positive_level: None });
        }
        None => return Err(BartError::MissingResponse(response_column.to_string())),
    };
    if cells[response_idx].is_empty() {
        return Err(BartError::data("CSV has no data rows"));
    }

    let mut columns = Vec::with_capacity(headers.len() - 1);
    let mut response = None;
    for (j, (name, col)) in headers.into_iter().zip(cells).enumerate() {
        let column = parse_column(name, &col);
        if j == response_idx {
            response = Some(column);
        } else {
            columns.push(column);
        }
    }
    let response = response.unwrap();
    if let Some(row) = (0..response.values.len()).find(|&i| response.values.is_missing(i)) {
        return Err(BartError::MissingResponseValue { column: response.name.clone(), row });
    }
    Ok(RawTable { columns, response, positive_level: positive_level.map(str::to_string) })
}

fn parse_column(name: String, col: &[Option<String>]) -> RawColumn {
    let parsed: Option<Vec<Option<f64>>> =
        col.iter().map(|c| c.as_ref().map_or(Some(None), |s| s.parse::<f64>().ok().map(Some))).collect();
    match parsed {
        Some(values) => RawColumn::numeric(name, values),
        None => RawColumn::categorical(name, col),
    }
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.response.values.len()
    }

    /// Rows with at least one missing predictor cell.
    pub fn rows_with_missing(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.columns.iter().any(|c| c.values.is_missing(i))).collect()
    }

    /// Drops every row with a missing predictor cell.
    pub fn drop_missing_rows(&self) -> RawTable {
        let keep: Vec<usize> =
            (0..self.n_rows()).filter(|&i| !self.columns.iter().any(|c| c.values.is_missing(i))).collect();
        self.subset_rows(&keep)
    }

    pub fn subset_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            columns: self
                .columns
                .iter()
                .map(|c| RawColumn { name: c.name.clone(), values: c.values.subset(rows) })
                .collect(),
            response: RawColumn { name: self.response.name.clone(), values: self.response.values.subset(rows) },
            positive_level: self.positive_level.clone(),
        }
    }
}

/// Regression or binary classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    /// Labels are stored as 1.0 (positive) and 0.0 (negative).
    Classification { positive: String, negative: String },
}

impl Task {
    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// How one raw predictor maps onto frame columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceKind {
    Numeric { column: usize },
    Factor { levels: Vec<String>, columns: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceColumn {
    pub name: String,
    pub kind: SourceKind,
    /// Index of this source's missingness dummy `M_name`, if one was created.
    pub missing_dummy: Option<usize>,
}

/// Recipe for turning a [`RawTable`] with the training layout into a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSchema {
    pub sources: Vec<SourceColumn>,
    pub column_names: Vec<String>,
    pub use_missing_data: bool,
    pub use_missing_dummies: bool,
}

/// Factor name and the frame columns of its one-hot expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyGroup {
    pub factor: String,
    pub columns: Vec<usize>,
}

/// Fully numeric design matrix plus response.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFrame {
    /// Column-major predictor values; `NaN` marks a missing cell.
    pub columns: Vec<Vec<f64>>,
    pub column_names: Vec<String>,
    pub dummy_groups: Vec<DummyGroup>,
    pub missing_dummy_columns: Vec<usize>,
    pub y: Vec<f64>,
    pub response_name: String,
    pub task: Task,
    pub use_missing_data: bool,
    /// Present when the frame was built from a raw table.
    pub schema: Option<FrameSchema>,
}

fn response_task(raw: &RawTable) -> Result<(Vec<f64>, Task)> {
    match &raw.response.values {
        RawValues::Numeric(v) => {
            let y: Vec<f64> = v.iter().map(|c| c.unwrap()).collect();
            if let Some(pos) = &raw.positive_level {
                // numeric 0/1 response with an explicit positive level
                let pos: f64 = pos.parse().map_err(|_| BartError::arg(format!("positive level `{pos}` not in response")))?;
                let levels: BTreeSet<u64> = y.iter().map(|v| v.to_bits()).collect();
                if levels.len() != 2 || !y.contains(&pos) {
                    return Err(BartError::data("classification response must have exactly two levels"));
                }
                let neg = *y.iter().find(|&&v| v != pos).unwrap();
                let labels = y.iter().map(|&v| if v == pos { 1.0 } else { 0.0 }).collect();
                return Ok((labels, Task::Classification { positive: fmt_num(pos), negative: fmt_num(neg) }));
            }
            Ok((y, Task::Regression))
        }
        RawValues::Categorical { levels, codes } => {
            if levels.len() != 2 {
                return Err(BartError::data(format!(
                    "categorical response `{}` has {} levels; only binary classification is supported",
                    raw.response.name,
                    levels.len()
                )));
            }
            let pos_idx = match &raw.positive_level {
                Some(p) => levels
                    .iter()
                    .position(|l| l == p)
                    .ok_or_else(|| BartError::arg(format!("positive level `{p}` not in response")))?,
                None => 1,
            };
            let labels = codes.iter().map(|c| if c.unwrap() == pos_idx { 1.0 } else { 0.0 }).collect();
            Ok((labels, Task::Classification { positive: levels[pos_idx].clone(), negative: levels[1 - pos_idx].clone() }))
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Dummifies factors (full one-hot over the levels observed in `raw`) and,
/// when `use_missing_dummies` is set, appends one `M_<name>` column per
/// source column exhibiting missingness.
pub fn build_model_frame(raw: &RawTable, use_missing_data: bool, use_missing_dummies: bool) -> Result<ModelFrame> {
    let n = raw.n_rows();
    if n == 0 {
        return Err(BartError::data("table has no rows"));
    }
    let has_missing: Vec<bool> =
        raw.columns.iter().map(|c| (0..n).any(|i| c.values.is_missing(i))).collect();
    if !use_missing_data {
        if let Some(j) = has_missing.iter().position(|&m| m) {
            return Err(BartError::data(format!(
                "column `{}` has missing cells but missing-data handling is off",
                raw.columns[j].name
            )));
        }
    }
    let (y, task) = response_task(raw)?;

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut groups = Vec::new();
    let mut sources = Vec::new();
    for col in &raw.columns {
        match &col.values {
            RawValues::Numeric(v) => {
                sources.push(SourceColumn {
                    name: col.name.clone(),
                    kind: SourceKind::Numeric { column: columns.len() },
                    missing_dummy: None,
                });
                columns.push(v.iter().map(|c| c.unwrap_or(f64::NAN)).collect());
                names.push(col.name.clone());
            }
            RawValues::Categorical { levels, codes } => {
                let observed: BTreeSet<usize> = codes.iter().flatten().copied().collect();
                let kept: Vec<usize> = observed.into_iter().collect();
                let start = columns.len();
                for &lvl in &kept {
                    columns.push(
                        codes
                            .iter()
                            .map(|c| match c {
                                None => f64::NAN,
                                Some(code) => f64::from(u8::from(*code == lvl)),
                            })
                            .collect(),
                    );
                    names.push(format!("{}_{}", col.name, levels[lvl]));
                }
                let idx: Vec<usize> = (start..columns.len()).collect();
                groups.push(DummyGroup { factor: col.name.clone(), columns: idx.clone() });
                sources.push(SourceColumn {
                    name: col.name.clone(),
                    kind: SourceKind::Factor { levels: kept.iter().map(|&l| levels[l].clone()).collect(), columns: idx },
                    missing_dummy: None,
                });
            }
        }
    }
    let mut missing_dummy_columns = Vec::new();
    if use_missing_data && use_missing_dummies {
        for (j, col) in raw.columns.iter().enumerate() {
            if has_missing[j] {
                sources[j].missing_dummy = Some(columns.len());
                missing_dummy_columns.push(columns.len());
                columns.push((0..n).map(|i| f64::from(u8::from(col.values.is_missing(i)))).collect());
                names.push(format!("M_{}", col.name));
            }
        }
    }
    check_unique(&names)?;
    let schema = FrameSchema {
        sources,
        column_names: names.clone(),
        use_missing_data,
        use_missing_dummies,
    };
    Ok(ModelFrame {
        columns,
        column_names: names,
        dummy_groups: groups,
        missing_dummy_columns,
        y,
        response_name: raw.response.name.clone(),
        task,
        use_missing_data,
        schema: Some(schema),
    })
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(BartError::data(format!("duplicate frame column `{n}`")));
        }
    }
    Ok(())
}

impl FrameSchema {
    /// Builds the predictor matrix for new rows using the training layout.
    /// Unseen factor levels are treated as missing (an error when the model
    /// does not handle missing data).
    pub fn apply(&self, raw_columns: &[RawColumn], n: usize) -> Result<Vec<Vec<f64>>> {
        let p = self.column_names.len();
        let mut out = vec![vec![f64::NAN; n]; p];
        for src in &self.sources {
            let col = raw_columns
                .iter()
                .find(|c| c.name == src.name)
                .ok_or_else(|| BartError::data(format!("column `{}` missing from new data", src.name)))?;
            if col.values.len() != n {
                return Err(BartError::data("ragged new-data columns"));
            }
            let mut missing = vec![false; n];
            match (&src.kind, &col.values) {
                (SourceKind::Numeric { column }, RawValues::Numeric(v)) => {
                    for i in 0..n {
                        match v[i] {
                            Some(x) => out[*column][i] = x,
                            None => missing[i] = true,
                        }
                    }
                }
                (SourceKind::Factor { levels, columns }, RawValues::Categorical { levels: new_levels, codes }) => {
                    for i in 0..n {
                        let pos = codes[i].and_then(|c| levels.iter().position(|l| *l == new_levels[c]));
                        match pos {
                            Some(k) => {
                                for (slot, &c) in columns.iter().enumerate() {
                                    out[c][i] = f64::from(u8::from(slot == k));
                                }
                            }
                            None => missing[i] = true,
                        }
                    }
                }
                (SourceKind::Factor { levels, columns }, RawValues::Numeric(v)) => {
                    // numeric-looking factor levels, e.g. a column of 0/1 codes
                    for i in 0..n {
                        let pos = v[i].and_then(|x| levels.iter().position(|l| l.parse::<f64>().ok() == Some(x)));
                        match pos {
                            Some(k) => {
                                for (slot, &c) in columns.iter().enumerate() {
                                    out[c][i] = f64::from(u8::from(slot == k));
                                }
                            }
                            None => missing[i] = true,
                        }
                    }
                }
                (SourceKind::Numeric { .. }, RawValues::Categorical { .. }) => {
                    return Err(BartError::data(format!("column `{}` was numeric at training time", src.name)));
                }
            }
            if missing.iter().any(|&m| m) && !self.use_missing_data {
                return Err(BartError::data(format!(
                    "column `{}` has missing or unseen values but the model was trained without missing-data support",
                    src.name
                )));
            }
            if let Some(md) = src.missing_dummy {
                for i in 0..n {
                    out[md][i] = f64::from(u8::from(missing[i]));
                }
            }
        }
        Ok(out)
    }
}

impl ModelFrame {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col][row].is_nan()
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.iter().any(|v| v.is_nan()))
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Builds a frame straight from numeric columns (no factors, no schema).
    pub fn from_columns(column_names: Vec<String>, columns: Vec<Vec<f64>>, y: Vec<f64>, task: Task) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(BartError::arg("column name count does not match column count"));
        }
        if columns.iter().any(|c| c.len() != y.len()) {
            return Err(BartError::arg("every column must have one value per response"));
        }
        if y.is_empty() {
            return Err(BartError::arg("frame needs at least one row"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(BartError::data("response has missing or non-finite values"));
        }
        if task.is_classification() && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(BartError::data("classification labels must be 0 or 1"));
        }
        check_unique(&column_names)?;
        let use_missing_data = columns.iter().any(|c| c.iter().any(|v| v.is_nan()));
        Ok(ModelFrame {
            columns,
            column_names,
            dummy_groups: Vec::new(),
            missing_dummy_columns: Vec::new(),
            y,
            response_name: "y".into(),
            task,
            use_missing_data,
            schema: None,
        })
    }

    /// Frame with the given rows, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> ModelFrame {
        ModelFrame {
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            ..self.clone_meta()
        }
    }

    /// Frame restricted to the given columns. Dummy groups are kept only for
    /// the columns that survive; the raw-table schema is dropped.
    pub fn select_columns(&self, cols: &[usize]) -> ModelFrame {
        let remap: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let dummy_groups = self
            .dummy_groups
            .iter()
            .filter_map(|g| {
                let c: Vec<usize> = g.columns.iter().filter_map(|c| remap.get(c).copied()).collect();
                (!c.is_empty()).then(|| DummyGroup { factor: g.factor.clone(), columns: c })
            })
            .collect();
        ModelFrame {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            dummy_groups,
            missing_dummy_columns: self.missing_dummy_columns.iter().filter_map(|c| remap.get(c).copied()).collect(),
            y: self.y.clone(),
            response_name: self.response_name.clone(),
            task: self.task.clone(),
            use_missing_data: self.use_missing_data,
            schema: None,
        }
    }

    pub fn with_response(&self, y: Vec<f64>) -> ModelFrame {
        ModelFrame { columns: self.columns.clone(), y, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> ModelFrame {
        ModelFrame {
            columns: Vec::new(),
            column_names: self.column_names.clone(),
            dummy_groups: self.dummy_groups.clone(),
            missing_dummy_columns: self.missing_dummy_columns.clone(),
            y: Vec::new(),
            response_name: self.response_name.clone(),
            task: self.task.clone(),
            use_missing_data: self.use_missing_data,
            schema: self.schema.clone(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Resolves a covariate name to its frame columns: a column name gives
    /// itself, a factor name gives its whole dummy group.
    pub fn resolve_covariate(&self, name: &str) -> Result<Vec<usize>> {
        if let Some(g) = self.dummy_groups.iter().find(|g| g.factor == name) {
            return Ok(g.columns.clone());
        }
        self.column_index(name)
            .map(|c| vec![c])
            .ok_or_else(|| BartError::arg(format!("unknown covariate `{name}`")))
    }

    /// Default split-variable weights: 1 per column, except that the dummies
    /// of an L-level factor get 1/L each.
    pub fn default_covariate_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.p()];
        for g in &self.dummy_groups {
            let share = 1.0 / g.columns.len() as f64;
            for &c in &g.columns {
                w[c] = share;
            }
        }
        w
    }

    /// Writes the frame as CSV, missing cells as `NA`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.column_names.clone();
        header.push(self.response_name.clone());
        w.write_record(&header).map_err(|e| BartError::Csv(e.to_string()))?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .columns
                .iter()
                .map(|c| if c[i].is_nan() { "NA".to_string() } else { format!("{}", c[i]) })
                .collect();
            rec.push(format!("{}", self.y[i]));
            w.write_record(&rec).map_err(|e| BartError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| BartError::Csv(e.to_string()))
    }
}

/// Fold label (1-based) for every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_index: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    /// Rows in fold `f` (1-based).
    pub fn rows_in(&self, f: usize) -> Vec<usize> {
        (0..self.fold_index.len()).filter(|&i| self.fold_index[i] == f).collect()
    }

    pub fn rows_not_in(&self, f: usize) -> Vec<usize> {
        (0..self.fold_index.len()).filter(|&i| self.fold_index[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_index {
            s[f - 1] += 1;
        }
        s
    }
}

/// Random balanced partition of `0..n` into `k` folds.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(BartError::arg(format!("fold count {k} must lie in [2, {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_index = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_index[row] = pos % k + 1;
    }
    Ok(FoldAssignment { fold_index, k, seed })
}

/// The Friedman test function of the first five inputs.
pub fn friedman_function(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// `n` rows of iid Uniform(0,1) predictors `x1..xp`; the response is the
/// Friedman function plus Normal(0, sigma^2) noise.
pub fn generate_friedman(n: usize, p: usize, sigma: f64, seed: u64) -> Result<ModelFrame> {
    if p < 5 {
        return Err(BartError::arg(format!("Friedman data needs p >= 5, got {p}")));
    }
    if n == 0 {
        return Err(BartError::arg("Friedman data needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = vec![Vec::with_capacity(n); p];
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rng.random::<f64>();
            columns[j].push(*v);
        }
        let noise: f64 = rng.sample(StandardNormal);
        y.push(friedman_function(&row) + sigma * noise);
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    ModelFrame::from_columns(names, columns, y, Task::Regression)
}

/// Applies one shared random permutation to the rows of `columns`.
/// A dummy group must be permuted whole or not at all.
pub fn permute_columns(frame: &ModelFrame, columns: &[usize], seed: u64) -> Result<ModelFrame> {
    let selected: BTreeSet<usize> = columns.iter().copied().collect();
    if let Some(&bad) = selected.iter().find(|&&c| c >= frame.p()) {
        return Err(BartError::arg(format!("column index {bad} out of range")));
    }
    for g in &frame.dummy_groups {
        let hit = g.columns.iter().filter(|c| selected.contains(c)).count();
        if hit != 0 && hit != g.columns.len() {
            return Err(BartError::arg(format!("factor `{}` must be permuted as a unit", g.factor)));
        }
    }
    let mut out = frame.clone();
    if selected.is_empty() {
        return Ok(out);
    }
    let mut perm: Vec<usize> = (0..frame.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for &c in &selected {
        out.columns[c] = perm.iter().map(|&i| frame.columns[c][i]).collect();
    }
    Ok(out)
}

/// Shuffled copy of the response.
pub fn permute_response(frame: &ModelFrame, seed: u64) -> ModelFrame {
    let mut perm: Vec<usize> = (0..frame.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    frame.with_response(perm.iter().map(|&i| frame.y[i]).collect())
}
