//! Threshold selection with a volume gap statistic.
//!
//! For every threshold on an ascending grid the discovered exclusive volume
//! is compared with the mean volume found on reference matrices whose
//! columns are independent uniforms matching the mean and variance of the
//! entries left outside the discovered biclusters.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::msr::Bicluster;
use crate::pipeline::{check_grid, cumulative_scan, run_exclusive_biclustering, PipelineConfig};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Per-column mean and (unbiased) variance over the entries outside every
/// discovered bicluster. Columns with fewer than two such entries use the
/// whole column.
pub fn estimate_reference_model(a: &ExpressionMatrix, discovered: &[Bicluster]) -> ReferenceModel {
    let mut covered = vec![false; a.n_rows() * a.n_cols()];
    for b in discovered {
        for &i in &b.rows {
            for &j in &b.cols {
                covered[i * a.n_cols() + j] = true;
            }
        }
    }
    let (means, variances) = (0..a.n_cols())
        .map(|j| {
            let kept: Vec<f64> = (0..a.n_rows())
                .filter(|&i| !covered[i * a.n_cols() + j])
                .map(|i| a.get(i, j))
                .collect();
            if kept.len() >= 2 {
                mean_var(&kept)
            } else {
                mean_var(&a.column(j).collect::<Vec<_>>())
            }
        })
        .unzip();
    ReferenceModel { means, variances, n_rows: a.n_rows(), n_cols: a.n_cols() }
}

/// Entry `(i, j)` is uniform on `mean_j ± sqrt(3 var_j)`.
pub fn sample_reference(model: &ReferenceModel, rng: &mut Rng) -> Result<ExpressionMatrix> {
    if model.means.len() != model.n_cols || model.variances.len() != model.n_cols {
        return Err(Error::invalid("reference model column count mismatch"));
    }
    if model.variances.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("reference variances must be non-negative"));
    }
    let half_width: Vec<f64> = model.variances.iter().map(|v| (3.0 * v).sqrt()).collect();
    let mut values = Vec::with_capacity(model.n_rows * model.n_cols);
    for _ in 0..model.n_rows {
        for j in 0..model.n_cols {
            let u: f64 = rng.random();
            values.push(model.means[j] + half_width[j] * (2.0 * u - 1.0));
        }
    }
    ExpressionMatrix::new(model.n_rows, model.n_cols, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScanResult {
    pub grid: Vec<f64>,
    pub v_data: Vec<f64>,
    pub v_ref_mean: Vec<f64>,
    pub v_ref_std: Vec<f64>,
    pub gap: Vec<f64>,
    /// Zero-based grid position of the largest gap.
    pub selected_index: usize,
}

/// `points` evenly spaced thresholds `max/points, 2 max/points, ..., max`.
pub fn linear_grid(max: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(max > 0.0) || !max.is_finite() {
        return Err(Error::invalid("grid needs a positive maximum and at least one point"));
    }
    Ok((1..=points).map(|k| max * k as f64 / points as f64).collect())
}

/// Gap curve over `grid` with `replicates` reference matrices per threshold.
///
/// The data curve uses cumulative candidate pooling. At each threshold the
/// reference model is re-estimated from that threshold's discoveries, and
/// replicate `b` reuses the FLOC seed schedule derived from `(seed, b)`.
pub fn gap_scan(
    a: &ExpressionMatrix,
    grid: &[f64],
    replicates: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<GapScanResult> {
    check_grid(grid)?;
    if replicates == 0 {
        return Err(Error::invalid("at least one reference replicate is required"));
    }
    let data = cumulative_scan(a, grid, cfg)?;
    let jobs: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|k| (0..replicates).map(move |b| (k, b))).collect();
    let ref_volumes: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, b)| {
            let model = estimate_reference_model(a, &data[k].chosen);
            let mut sampler = rng::stream(seed, &[rng::TAG_REFERENCE, k as u64, b as u64]);
            let reference = sample_reference(&model, &mut sampler)?;
            let mut run_cfg = cfg.with_delta(grid[k]);
            run_cfg.floc.seed = rng::derive_seed(seed, &[rng::TAG_REFERENCE_RUN, b as u64]);
            Ok(run_exclusive_biclustering(&reference, &run_cfg)?.total_volume as f64)
        })
        .collect::<Result<_>>()?;

    let v_data: Vec<f64> = data.iter().map(|r| r.total_volume as f64).collect();
    let (v_ref_mean, v_ref_std): (Vec<f64>, Vec<f64>) = ref_volumes
        .chunks(replicates)
        .map(|v| {
            let (m, var) = mean_var(v);
            (m, var.sqrt())
        })
        .unzip();
    let gap: Vec<f64> = v_data.iter().zip(&v_ref_mean).map(|(d, r)| d - r).collect();
    let selected_index = argmax_first(&gap);
    Ok(GapScanResult { grid: grid.to_vec(), v_data, v_ref_mean, v_ref_std, gap, selected_index })
}

fn argmax_first(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Threshold with the largest gap; ties go to the smallest threshold.
pub fn select_threshold(result: &GapScanResult) -> Result<f64> {
    if result.grid.is_empty() || result.gap.len() != result.grid.len() {
        return Err(Error::invalid("empty or inconsistent gap scan"));
    }
    Ok(result.grid[argmax_first(&result.gap)])
}

/// Expected MSR of an `n_rows x n_cols` block of iid entries with the given
/// variance: `var (n_rows - 1)(n_cols - 1) / (n_rows n_cols)`.
pub fn expected_msr_iid(variance: f64, n_rows: usize, n_cols: usize) -> Result<f64> {
    if !(variance >= 0.0) || n_rows == 0 || n_cols == 0 {
        return Err(Error::invalid("variance must be non-negative and dimensions positive"));
    }
    let (r, c) = (n_rows as f64, n_cols as f64);
    Ok(variance * (r - 1.0) * (c - 1.0) / (r * c))
}
