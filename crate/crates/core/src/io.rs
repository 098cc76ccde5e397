//! Matrix ingestion, microarray preprocessing and result serialization.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gap::GapScanResult;
use crate::matrix::ExpressionMatrix;
use crate::msr::Bicluster;
use crate::pipeline::{PipelineConfig, PipelineResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    pub fn delimiter(self) -> u8 {
        match self {
            Format::Tsv => b'\t',
            Format::Csv => b',',
        }
    }

    /// `.csv` is comma separated, anything else tab separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSource {
    pub format: Format,
    pub has_header: bool,
    pub has_row_labels: bool,
}

pub fn read_matrix<R: Read>(reader: R, source: &MatrixSource) -> Result<ExpressionMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(source.format.delimiter())
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let label_offset = usize::from(source.has_row_labels);
    let mut header: Option<Vec<String>> = None;
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    let mut n_cols: Option<usize> = None;
    let mut n_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if source.has_header && header.is_none() {
            header = Some(record.iter().map(|f| f.trim().to_string()).collect());
            continue;
        }
        let cells = record.len().saturating_sub(label_offset);
        match n_cols {
            None => n_cols = Some(cells),
            Some(n) if n != cells => {
                return Err(Error::Parse {
                    line,
                    column: record.len() + 1,
                    message: format!("expected {n} values, found {cells}"),
                })
            }
            _ => {}
        }
        if source.has_row_labels {
            row_labels.push(record.get(0).unwrap_or("").trim().to_string());
        }
        for (k, field) in record.iter().enumerate().skip(label_offset) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                column: k + 1,
                message: format!("non-numeric cell {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: k + 1,
                    message: format!("non-finite cell {field:?}"),
                });
            }
            values.push(v);
        }
        n_rows += 1;
    }
    let n_cols = n_cols.unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Parse { line: 0, column: 0, message: "matrix is empty".into() });
    }
    let mut m = ExpressionMatrix::new(n_rows, n_cols, values)?;
    if let Some(mut h) = header {
        // a leading corner cell above the row labels is dropped
        if h.len() == n_cols + 1 {
            h.remove(0);
        }
        if h.len() != n_cols {
            return Err(Error::Parse {
                line: 1,
                column: 0,
                message: format!("header has {} names for {n_cols} columns", h.len()),
            });
        }
        m = m.with_col_labels(h)?;
    }
    if source.has_row_labels {
        m = m.with_row_labels(row_labels)?;
    }
    Ok(m)
}

pub fn load_matrix(path: &Path, source: &MatrixSource) -> Result<ExpressionMatrix> {
    read_matrix(std::fs::File::open(path)?, source)
}

/// Writes the matrix with its labels, if any. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_matrix<W: Write>(writer: W, m: &ExpressionMatrix, format: Format) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(writer);
    let map_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if let Some(cols) = m.col_labels() {
        let mut header: Vec<String> = Vec::new();
        if m.row_labels().is_some() {
            header.push(String::new());
        }
        header.extend(cols.iter().cloned());
        w.write_record(&header).map_err(map_err)?;
    }
    for i in 0..m.n_rows() {
        let mut rec: Vec<String> = Vec::with_capacity(m.n_cols() + 1);
        if let Some(labels) = m.row_labels() {
            rec.push(labels[i].clone());
        }
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(map_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Indices of the `ceil(top_frac * n_cols)` columns with the largest
/// standard deviation, in their original order. Ties keep the earlier column.
pub fn top_variance_columns(m: &ExpressionMatrix, top_frac: f64) -> Result<Vec<usize>> {
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::invalid(format!("top fraction {top_frac} outside (0, 1]")));
    }
    // guard against 0.15 * 200 = 30.000000000000004
    let keep = ((top_frac * m.n_cols() as f64) - 1e-9).ceil().max(1.0) as usize;
    let sd: Vec<f64> = (0..m.n_cols())
        .map(|j| {
            let col: Vec<f64> = m.column(j).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..m.n_cols()).collect();
    order.sort_by(|&x, &y| sd[y].total_cmp(&sd[x]).then(x.cmp(&y)));
    order.truncate(keep);
    order.sort_unstable();
    Ok(order)
}

/// Clamps every value into `[lower, upper]`, then keeps the most variable
/// columns (genes are columns).
pub fn preprocess_microarray(
    m: &ExpressionMatrix,
    lower: f64,
    upper: f64,
    top_frac: f64,
) -> Result<ExpressionMatrix> {
    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(Error::invalid(format!("invalid clamp bounds [{lower}, {upper}]")));
    }
    let clamped = m.map(|v| v.clamp(lower, upper))?;
    let keep = top_variance_columns(&clamped, top_frac)?;
    clamped.select_columns(&keep)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Where the matrix came from and how it was read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    #[serde(flatten)]
    pub source: MatrixSource,
    pub transpose: bool,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: InputRecord,
    /// MSR of the whole input matrix.
    pub delta_a: f64,
    pub config: PipelineConfig,
    pub seed: u64,
    /// Only recorded on request, so that repeated runs stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSettings {
    pub grid_points: usize,
    pub grid_max_frac: f64,
    pub replicates: usize,
}

impl RunManifest {
    pub fn new(command: &str, input: InputRecord, delta_a: f64, config: PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.floc.seed,
            input,
            delta_a,
            config,
            started_at_unix: None,
            finished_at_unix: None,
            gap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiclusterRecord {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub msr: f64,
    pub volume: usize,
}

impl From<&Bicluster> for BiclusterRecord {
    fn from(b: &Bicluster) -> Self {
        Self { rows: b.rows.clone(), cols: b.cols.clone(), msr: b.msr, volume: b.volume }
    }
}

impl From<BiclusterRecord> for Bicluster {
    fn from(r: BiclusterRecord) -> Self {
        Bicluster { rows: r.rows, cols: r.cols, msr: r.msr, volume: r.volume }
    }
}

/// JSON document written by `bicluster`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub manifest: RunManifest,
    pub biclusters: Vec<BiclusterRecord>,
    pub total_volume: usize,
    pub unclustered_rows: Vec<usize>,
    #[serde(default)]
    pub candidate_pool_size: usize,
}

impl ResultDocument {
    pub fn new(manifest: RunManifest, result: &PipelineResult) -> Self {
        Self {
            manifest,
            biclusters: result.chosen.iter().map(BiclusterRecord::from).collect(),
            total_volume: result.total_volume,
            unclustered_rows: result.unclustered_rows.clone(),
            candidate_pool_size: result.candidate_pool_size,
        }
    }

    pub fn biclusters(&self) -> Vec<Bicluster> {
        self.biclusters.iter().cloned().map(Bicluster::from).collect()
    }
}

/// JSON document written by `gap-scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDocument {
    pub manifest: RunManifest,
    pub selected_index: usize,
    pub selected_delta: f64,
    pub selected_delta_frac: f64,
    pub curve: GapScanResult,
}

pub const GAP_CSV_HEADER: [&str; 5] = ["delta", "v_data", "v_ref_mean", "v_ref_std", "gap"];

pub fn write_gap_csv<W: Write>(writer: W, scan: &GapScanResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(GAP_CSV_HEADER).map_err(map_err)?;
    for k in 0..scan.grid.len() {
        w.write_record([
            scan.grid[k].to_string(),
            scan.v_data[k].to_string(),
            scan.v_ref_mean[k].to_string(),
            scan.v_ref_std[k].to_string(),
            scan.gap[k].to_string(),
        ])
        .map_err(map_err)?;
    }
    w.flush()?;
    Ok(())
}
