//! Public-use survey datasets: in-memory layout, CSV ingestion and weight
//! rescaling.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense row-major table of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Rows {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Rows {
    pub fn new(ncols: usize, data: Vec<f64>) -> Result<Self> {
        if ncols == 0 {
            if !data.is_empty() {
                return Err(Error::Dimension("zero columns with nonempty data".into()));
            }
            return Ok(Rows { nrows: 0, ncols, data });
        }
        if data.len() % ncols != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not fill rows of {ncols}",
                data.len()
            )));
        }
        Ok(Rows { nrows: data.len() / ncols, ncols, data })
    }

    /// Table with `nrows` rows and no columns.
    pub fn empty(nrows: usize) -> Self {
        Rows { nrows, ncols: 0, data: Vec::new() }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Rows { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Parse { row: i + 1, msg: "ragged row".into() });
            }
            data.extend_from_slice(r);
        }
        Ok(Rows { nrows: rows.len(), ncols, data })
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, |c| c.len());
        if cols.iter().any(|c| c.len() != nrows) {
            return Err(Error::Dimension("columns of unequal length".into()));
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for c in cols {
                data.push(c[i]);
            }
        }
        Ok(Rows { nrows, ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Rows {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Rows { nrows: idx.len(), ncols: self.ncols, data }
    }

    /// Keep only the listed columns.
    pub fn select_columns(&self, cols: &[usize]) -> Rows {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Rows { nrows: self.nrows, ncols: cols.len(), data }
    }

    /// Prepend a column of ones.
    pub fn with_intercept(&self) -> Rows {
        let mut data = Vec::with_capacity(self.nrows * (self.ncols + 1));
        for i in 0..self.nrows {
            data.push(1.0);
            data.extend_from_slice(self.row(i));
        }
        Rows { nrows: self.nrows, ncols: self.ncols + 1, data }
    }
}

/// Role map from the plain-text schema file.
///
/// ```text
/// y = y
/// x = x1, x2
/// weight = w
/// rep_prefix = w_rep_
/// intercept = true
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub y: Vec<String>,
    pub x: Vec<String>,
    pub weight: String,
    pub rep_prefix: Option<String>,
    pub intercept: bool,
    /// Calibration columns, consulted only when design weights are supplied.
    pub calib: Vec<String>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema> {
        let mut map: HashMap<String, String> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("line {}: expected key = value", lineno + 1))
            })?;
            map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        let list = |v: Option<&String>| -> Vec<String> {
            v.map(|s| {
                s.split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .unwrap_or_default()
        };
        let y = list(map.get("y"));
        if y.is_empty() {
            return Err(Error::Schema("no y column named".into()));
        }
        let weight = map
            .get("weight")
            .cloned()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Schema("no weight column named".into()))?;
        let intercept = match map.get("intercept").map(|s| s.to_ascii_lowercase()) {
            None => false,
            Some(s) if s == "true" || s == "1" || s == "yes" => true,
            Some(s) if s == "false" || s == "0" || s == "no" => false,
            Some(s) => return Err(Error::Schema(format!("intercept: bad boolean {s}"))),
        };
        for k in map.keys() {
            if !["y", "x", "weight", "rep_prefix", "intercept", "calib"].contains(&k.as_str()) {
                return Err(Error::Schema(format!("unknown key {k}")));
            }
        }
        Ok(Schema {
            y,
            x: list(map.get("x")),
            weight,
            rep_prefix: map.get("rep_prefix").cloned().filter(|s| !s.is_empty()),
            intercept,
            calib: list(map.get("calib")),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Schema> {
        Schema::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("y = {}\n", self.y.join(","));
        s += &format!("x = {}\n", self.x.join(","));
        s += &format!("weight = {}\n", self.weight);
        if let Some(p) = &self.rep_prefix {
            s += &format!("rep_prefix = {p}\n");
        }
        s += &format!("intercept = {}\n", self.intercept);
        if !self.calib.is_empty() {
            s += &format!("calib = {}\n", self.calib.join(","));
        }
        s
    }
}

/// A validated public-use survey file.
///
/// The file carries no population size; `n_hat = sum(final_weights)` stands
/// in for it everywhere.
#[derive(Debug, Clone)]
pub struct SurveyDataset {
    pub y: Rows,
    pub x: Rows,
    pub final_weights: Vec<f64>,
    /// `n x B` replication weights.
    pub rep_weights: Rows,
    pub n_hat: f64,
    pub y_names: Vec<String>,
    pub x_names: Vec<String>,
}

impl SurveyDataset {
    pub fn new(y: Rows, x: Rows, final_weights: Vec<f64>, rep_weights: Rows) -> Result<Self> {
        let n = final_weights.len();
        if n < 2 {
            return Err(Error::Validation(format!("need at least 2 records, got {n}")));
        }
        if y.nrows() != n {
            return Err(Error::Dimension(format!("y has {} rows, weights {n}", y.nrows())));
        }
        if x.nrows() != n {
            return Err(Error::Dimension(format!("x has {} rows, weights {n}", x.nrows())));
        }
        if rep_weights.nrows() != n {
            return Err(Error::Dimension(format!(
                "replication weights have {} rows, weights {n}",
                rep_weights.nrows()
            )));
        }
        for (i, &w) in final_weights.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "row {}: final weight {w} is not strictly positive",
                    i + 1
                )));
            }
        }
        for i in 0..rep_weights.nrows() {
            for (b, &w) in rep_weights.row(i).iter().enumerate() {
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {}: replication weight {} is {w}",
                        i + 1,
                        b + 1
                    )));
                }
            }
        }
        let n_hat = final_weights.iter().sum();
        let y_names = (1..=y.ncols()).map(|j| format!("y{j}")).collect();
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(SurveyDataset { y, x, final_weights, rep_weights, n_hat, y_names, x_names })
    }

    /// Same as [`SurveyDataset::new`] but accepts negative replication
    /// weights, which chi-square calibrated bootstrap columns can produce.
    pub fn new_allow_negative_replicates(
        y: Rows,
        x: Rows,
        final_weights: Vec<f64>,
        rep_weights: Rows,
    ) -> Result<Self> {
        let n = final_weights.len();
        let mut ds = SurveyDataset::new(y, x, final_weights, Rows::empty(n))?;
        if rep_weights.nrows() != ds.n() {
            return Err(Error::Dimension("replication weight rows".into()));
        }
        ds.rep_weights = rep_weights;
        Ok(ds)
    }

    pub fn with_names(mut self, y_names: Vec<String>, x_names: Vec<String>) -> Self {
        if y_names.len() == self.y.ncols() {
            self.y_names = y_names;
        }
        if x_names.len() == self.x.ncols() {
            self.x_names = x_names;
        }
        self
    }

    pub fn n(&self) -> usize {
        self.final_weights.len()
    }

    /// Number of replication-weight columns.
    pub fn n_replicates(&self) -> usize {
        self.rep_weights.ncols()
    }

    pub fn rep_column(&self, b: usize) -> Vec<f64> {
        self.rep_weights.column(b)
    }

    /// Replace the final weights (and `n_hat`), keeping everything else.
    pub fn with_final_weights(&self, w: Vec<f64>) -> Result<Self> {
        let mut ds = SurveyDataset::new_allow_negative_replicates(
            self.y.clone(),
            self.x.clone(),
            w,
            self.rep_weights.clone(),
        )?;
        ds.y_names = self.y_names.clone();
        ds.x_names = self.x_names.clone();
        Ok(ds)
    }

    /// Write as CSV using the given schema's column names.
    pub fn write_csv(&self, path: impl AsRef<Path>, schema: &Schema) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = schema.y.clone();
        let x_cols: Vec<String> = schema.x.clone();
        header.extend(x_cols.iter().cloned());
        header.push(schema.weight.clone());
        let prefix = schema.rep_prefix.clone().unwrap_or_else(|| "w_rep_".into());
        for b in 1..=self.n_replicates() {
            header.push(format!("{prefix}{b}"));
        }
        wtr.write_record(&header)?;
        let x_offset = usize::from(schema.intercept);
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.y.row(i).iter().map(|v| fmt_real(*v)).collect();
            if self.x.ncols() > 0 {
                rec.extend(self.x.row(i)[x_offset..].iter().map(|v| fmt_real(*v)));
            }
            rec.push(fmt_real(self.final_weights[i]));
            if self.n_replicates() > 0 {
                rec.extend(self.rep_weights.row(i).iter().map(|v| fmt_real(*v)));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest decimal representation that round-trips to the same `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v}")
}

/// A sample together with its design weights `d_i = 1/pi_i`. Only the
/// simulation lab and the bootstrap construction need these.
#[derive(Debug, Clone)]
pub struct DesignSample {
    pub y: Rows,
    pub x: Rows,
    pub design_weights: Vec<f64>,
    /// Index of each sampled unit in its source population, when known.
    pub unit_ids: Vec<usize>,
}

impl DesignSample {
    pub fn new(y: Rows, x: Rows, design_weights: Vec<f64>, unit_ids: Vec<usize>) -> Result<Self> {
        let n = design_weights.len();
        if let Some(i) = design_weights.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Validation(format!(
                "row {}: design weight {} is not positive",
                i + 1,
                design_weights[i]
            )));
        }
        if y.nrows() != n || x.nrows() != n {
            return Err(Error::Dimension("design sample columns differ in length".into()));
        }
        Ok(DesignSample { y, x, design_weights, unit_ids })
    }

    pub fn n(&self) -> usize {
        self.design_weights.len()
    }
}

/// Raw CSV table: header plus string records, as read from disk.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: impl AsRef<Path>) -> Result<RawTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Parse {
                    row: i + 1,
                    msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            records.push(rec.iter().map(|s| s.to_string()).collect());
        }
        Ok(RawTable { headers, records })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name}")))
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| parse_real(&r[j], i + 1, name))
            .collect()
    }

    /// Replication columns `<prefix>1..<prefix>B`, in index order.
    pub fn replicate_columns(&self, prefix: &str) -> Result<Vec<usize>> {
        let mut found: Vec<(usize, usize)> = self
            .headers
            .iter()
            .enumerate()
            .filter_map(|(j, h)| {
                h.strip_prefix(prefix)
                    .and_then(|rest| rest.parse::<usize>().ok())
                    .map(|b| (b, j))
            })
            .collect();
        found.sort();
        for (k, (b, _)) in found.iter().enumerate() {
            if *b != k + 1 {
                return Err(Error::Schema(format!(
                    "replication columns {prefix}1..: index {} missing",
                    k + 1
                )));
            }
        }
        Ok(found.into_iter().map(|(_, j)| j).collect())
    }
}

fn parse_real(s: &str, row: usize, col: &str) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Parse { row, msg: format!("missing value in column {col}") });
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { row, msg: format!("column {col}: cannot parse {s:?} as a real") }),
    }
}

/// Read a header-bearing CSV into a validated dataset. Row order is kept.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<SurveyDataset> {
    let raw = RawTable::read(path)?;
    dataset_from_raw(&raw, schema)
}

pub fn dataset_from_raw(raw: &RawTable, schema: &Schema) -> Result<SurveyDataset> {
    let n = raw.records.len();
    let y_cols = schema
        .y
        .iter()
        .map(|c| raw.numeric_column(c))
        .collect::<Result<Vec<_>>>()?;
    let x_cols = schema
        .x
        .iter()
        .map(|c| raw.numeric_column(c))
        .collect::<Result<Vec<_>>>()?;
    let w = raw.numeric_column(&schema.weight)?;
    if let Some(i) = w.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Validation(format!(
            "row {}: final weight {} is not strictly positive",
            i + 1,
            w[i]
        )));
    }
    let rep = match &schema.rep_prefix {
        Some(prefix) => {
            let idx = raw.replicate_columns(prefix)?;
            let mut data = Vec::with_capacity(n * idx.len());
            for (i, rec) in raw.records.iter().enumerate() {
                for &j in &idx {
                    data.push(parse_real(&rec[j], i + 1, &raw.headers[j])?);
                }
            }
            Rows::new(idx.len(), data)?
        }
        None => Rows::empty(n),
    };
    let y = Rows::from_columns(&y_cols)?;
    let mut x = if x_cols.is_empty() { Rows::empty(n) } else { Rows::from_columns(&x_cols)? };
    let mut x_names = schema.x.clone();
    if schema.intercept {
        x = x.with_intercept();
        x_names.insert(0, "(intercept)".into());
    }
    Ok(SurveyDataset::new(y, x, w, rep)?.with_names(schema.y.clone(), x_names))
}

/// Scale every weight column (final and each replicate) by its own factor so
/// that it sums to `target`.
pub fn rescale_weights(ds: &SurveyDataset, target: f64) -> Result<SurveyDataset> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("rescale target {target} must be positive")));
    }
    let f = target / ds.n_hat;
    let w: Vec<f64> = ds.final_weights.iter().map(|v| v * f).collect();
    let b = ds.n_replicates();
    let mut rep = ds.rep_weights.clone();
    for j in 0..b {
        let s: f64 = (0..ds.n()).map(|i| ds.rep_weights.get(i, j)).sum();
        if s != 0.0 {
            let g = target / s;
            for i in 0..ds.n() {
                rep.row_mut(i)[j] *= g;
            }
        }
    }
    let mut out = ds.with_final_weights(w)?;
    out.rep_weights = rep;
    Ok(out)
}
