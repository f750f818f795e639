//! Reading a design matrix and response from CSV files.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use selsov::selection::Dataset;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}:{line}:{column}: {message}", file.display())]
    Parse { file: PathBuf, line: u64, column: usize, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Where the response comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseSource {
    /// A single-column CSV file with one row per observation.
    File(PathBuf),
    /// A column of the design file, by header name or 0-based index. The
    /// column is removed from the design.
    Column(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// First row of each file is a header.
    pub header: bool,
    /// Drop design columns with fewer nonzero entries than this.
    pub min_feature_count: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Names of the retained design columns (header names, or the original
    /// 0-based positions when there is no header).
    pub columns: Vec<String>,
}

struct Grid {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

fn read_grid(path: &Path, header: bool) -> Result<Grid, IngestError> {
    let io = |source| IngestError::Io { path: path.to_path_buf(), source };
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names = if header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = names.as_ref().map(Vec::len);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(IngestError::ShapeMismatch(format!(
                    "{}:{line}: expected {w} fields, found {}",
                    path.display(),
                    record.len()
                )))
            }
            None => width = Some(record.len()),
            _ => {}
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let bad = |message: String| IngestError::Parse {
                    file: path.to_path_buf(),
                    line,
                    column: c + 1,
                    message,
                };
                let v: f64 = cell.parse().map_err(|_| bad(format!("row {}: {cell:?} is not a number", rows.len())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("row {}: {cell:?} is not finite", rows.len())))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Grid { header: names, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    let (line, column) = e.position().map_or((0, 0), |p| (p.line(), 0));
    IngestError::Parse { file: path.to_path_buf(), line, column, message: e.to_string() }
}

fn column_index(spec: &str, header: Option<&[String]>, width: usize) -> Result<usize, IngestError> {
    if let Some(i) = header.and_then(|h| h.iter().position(|name| name == spec)) {
        return Ok(i);
    }
    match spec.parse::<usize>() {
        Ok(i) if i < width => Ok(i),
        _ => Err(IngestError::ShapeMismatch(format!(
            "response column {spec:?} not found among {width} columns"
        ))),
    }
}

/// Read a rectangular numeric design and its response.
pub fn ingest_csv(design: &Path, response: &ResponseSource, opts: &IngestOptions) -> Result<Ingested, IngestError> {
    let grid = read_grid(design, opts.header)?;
    let width = grid.rows.first().map(Vec::len).or(grid.header.as_ref().map(Vec::len)).unwrap_or(0);
    let mut names: Vec<String> = match &grid.header {
        Some(h) => h.clone(),
        None => (0..width).map(|j| j.to_string()).collect(),
    };

    let mut rows = grid.rows;
    let y: Vec<f64> = match response {
        ResponseSource::Column(spec) => {
            let k = column_index(spec, grid.header.as_deref(), width)?;
            names.remove(k);
            rows.iter_mut().map(|r| r.remove(k)).collect()
        }
        ResponseSource::File(path) => {
            let resp = read_grid(path, opts.header)?;
            if let Some(r) = resp.rows.iter().find(|r| r.len() != 1) {
                return Err(IngestError::ShapeMismatch(format!(
                    "{}: response must have one column, found {}",
                    path.display(),
                    r.len()
                )));
            }
            resp.rows.into_iter().map(|r| r[0]).collect()
        }
    };
    if y.len() != rows.len() {
        return Err(IngestError::ShapeMismatch(format!(
            "design has {} rows but response has {}",
            rows.len(),
            y.len()
        )));
    }

    let n = rows.len();
    let p = names.len();
    let keep: Vec<usize> = match opts.min_feature_count {
        Some(k) => (0..p).filter(|&j| rows.iter().filter(|r| r[j] != 0.0).count() >= k).collect(),
        None => (0..p).collect(),
    };
    let x = DMatrix::from_fn(n, keep.len(), |i, j| rows[i][keep[j]]);
    let dataset = Dataset::new(x, DVector::from_vec(y), None)
        .map_err(|e| IngestError::ShapeMismatch(e.to_string()))?;
    let columns = keep.into_iter().map(|j| std::mem::take(&mut names[j])).collect();
    Ok(Ingested { dataset, columns })
}
