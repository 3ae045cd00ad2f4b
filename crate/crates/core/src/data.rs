//! Observed data `O = (W, A, Y)` and CSV ingestion.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

/// Confounders, binary treatment and an outcome scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    w: Array2<f64>,
    a: Vec<f64>,
    y: Vec<f64>,
    y_bounds: (f64, f64),
}

impl Dataset {
    /// Builds a dataset from an outcome already on the `[0, 1]` scale.
    pub fn new(w: Array2<f64>, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_bounds(w, a, y, (0.0, 1.0))
    }

    /// Builds a dataset whose outcome was scaled from `y_bounds`.
    pub fn with_bounds(w: Array2<f64>, a: Vec<f64>, y: Vec<f64>, y_bounds: (f64, f64)) -> Result<Self> {
        let n = w.nrows();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 observations, got {n}")));
        }
        if a.len() != n || y.len() != n {
            return Err(Error::Data(format!(
                "length mismatch: W has {n} rows, A has {}, Y has {}",
                a.len(),
                y.len()
            )));
        }
        if w.ncols() == 0 {
            return Err(Error::Data("W must have at least one column".into()));
        }
        if let Some((i, _)) = w.axis_iter(Axis(0)).enumerate().find(|(_, r)| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data(format!("non-finite confounder in row {}", i + 1)));
        }
        if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
            return Err(Error::Data(format!("treatment must be 0 or 1, row {} has {v}", i + 1)));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("scaled outcome outside [0,1] in row {}: {v}", i + 1)));
        }
        Ok(Dataset { w, a, y, y_bounds })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_bounds(&self) -> (f64, f64) {
        self.y_bounds
    }

    /// Rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            w: self.w.select(Axis(0), rows),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            y_bounds: self.y_bounds,
        }
    }

    /// Fraction treated.
    pub fn treated_fraction(&self) -> f64 {
        self.a.iter().sum::<f64>() / self.n() as f64
    }
}

/// How the outcome column is mapped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OutcomeScaling {
    /// Leave as is when already in `[0, 1]`, otherwise min/max scale.
    Auto,
    /// Scale with user-supplied bounds.
    Bounds(f64, f64),
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSpec {
    pub treatment: String,
    pub outcome: String,
    /// Column holding a known propensity `g(1|W)`, excluded from `W`.
    pub known_g: Option<String>,
    /// Columns left out of `W`.
    pub ignore: Vec<String>,
    pub scaling: OutcomeScaling,
}

impl Default for CsvSpec {
    fn default() -> Self {
        CsvSpec {
            treatment: "A".into(),
            outcome: "Y".into(),
            known_g: None,
            ignore: Vec::new(),
            scaling: OutcomeScaling::Auto,
        }
    }
}

/// A parsed CSV: the dataset, the confounder column names, and the known
/// propensity column when one was named.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: Dataset,
    pub w_names: Vec<String>,
    pub known_g: Option<Vec<f64>>,
}

pub fn read_csv(path: &Path, spec: &CsvSpec) -> Result<LoadedData> {
    let bytes = std::fs::read(path)?;
    parse_csv(&bytes, spec)
}

pub fn parse_csv(bytes: &[u8], spec: &CsvSpec) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}' in header {header:?}")))
    };
    let a_col = find(&spec.treatment)?;
    let y_col = find(&spec.outcome)?;
    let g_col = spec.known_g.as_deref().map(find).transpose()?;
    let skip = spec.ignore.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let w_cols: Vec<usize> = (0..header.len())
        .filter(|c| *c != a_col && *c != y_col && Some(*c) != g_col && !skip.contains(c))
        .collect();
    if w_cols.is_empty() {
        return Err(Error::Data("no confounder columns besides treatment and outcome".into()));
    }

    let mut w_flat = Vec::new();
    let mut a = Vec::new();
    let mut y_raw = Vec::new();
    let mut g = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2; // 1-based, after the header line
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let num = |c: usize| -> Result<f64> {
            let s = &rec[c];
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Data(format!("row {row}, column '{}': not a number: '{s}'", header[c])))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {row}, column '{}': non-finite value", header[c])));
            }
            Ok(v)
        };
        for &c in &w_cols {
            w_flat.push(num(c)?);
        }
        let av = num(a_col)?;
        if av != 0.0 && av != 1.0 {
            return Err(Error::Data(format!("row {row}: treatment must be 0 or 1, found {av}")));
        }
        a.push(av);
        y_raw.push(num(y_col)?);
        if let Some(c) = g_col {
            let gv = num(c)?;
            if !(gv > 0.0 && gv < 1.0) {
                return Err(Error::Data(format!("row {row}: known propensity must lie in (0,1), found {gv}")));
            }
            g.push(gv);
        }
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 data rows, found {n}")));
    }

    let (y, bounds) = scale_outcome(&y_raw, spec.scaling)?;
    let w = Array2::from_shape_vec((n, w_cols.len()), w_flat).expect("shape matches");
    let data = Dataset::with_bounds(w, a, y, bounds)?;
    Ok(LoadedData {
        data,
        w_names: w_cols.iter().map(|&c| header[c].clone()).collect(),
        known_g: g_col.map(|_| g),
    })
}

/// Maps a raw outcome to `[0, 1]`, returning the bounds used.
pub fn scale_outcome(y: &[f64], scaling: OutcomeScaling) -> Result<(Vec<f64>, (f64, f64))> {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::Data(format!("outcome is constant ({lo})")));
    }
    let (blo, bhi) = match scaling {
        OutcomeScaling::Auto if lo >= 0.0 && hi <= 1.0 => return Ok((y.to_vec(), (0.0, 1.0))),
        OutcomeScaling::Auto => (lo, hi),
        OutcomeScaling::Bounds(a, b) => {
            if !(a < b) {
                return Err(Error::Argument(format!("outcome bounds must satisfy lo < hi, got ({a}, {b})")));
            }
            if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| **v < a || **v > b) {
                return Err(Error::Data(format!("row {}: outcome {v} outside bounds ({a}, {b})", i + 2)));
            }
            (a, b)
        }
    };
    Ok((y.iter().map(|v| (v - blo) / (bhi - blo)).collect(), (blo, bhi)))
}
