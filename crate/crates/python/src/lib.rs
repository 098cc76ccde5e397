use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use ::exbic::{
    gap, msr, synth, wdp, EmbedSpec, Error, ExpressionMatrix, FlocConfig, GainRule,
    PipelineConfig,
};

fn to_py(err: Error) -> PyErr {
    let msg = format!("[{}] {err}", err.code());
    match err {
        Error::Io(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<ExpressionMatrix> {
    ExpressionMatrix::from_rows(&rows).map_err(to_py)
}

#[pyclass(name = "Bicluster", module = "exbic", get_all, frozen, from_py_object)]
#[derive(Clone)]
struct PyBicluster {
    rows: Vec<usize>,
    cols: Vec<usize>,
    msr: f64,
    volume: usize,
}

#[pymethods]
impl PyBicluster {
    fn __repr__(&self) -> String {
        format!(
            "Bicluster(rows={}, cols={}, msr={}, volume={})",
            self.rows.len(),
            self.cols.len(),
            self.msr,
            self.volume
        )
    }
}

impl From<&::exbic::Bicluster> for PyBicluster {
    fn from(b: &::exbic::Bicluster) -> Self {
        Self { rows: b.rows.clone(), cols: b.cols.clone(), msr: b.msr, volume: b.volume }
    }
}

impl From<&PyBicluster> for ::exbic::Bicluster {
    fn from(b: &PyBicluster) -> Self {
        Self { rows: b.rows.clone(), cols: b.cols.clone(), msr: b.msr, volume: b.volume }
    }
}

#[pyclass(name = "PipelineResult", module = "exbic", get_all, frozen)]
struct PyPipelineResult {
    chosen: Vec<PyBicluster>,
    total_volume: usize,
    unclustered_rows: Vec<usize>,
    candidate_pool_size: usize,
}

#[pyclass(name = "GapScan", module = "exbic", get_all, frozen)]
struct PyGapScan {
    grid: Vec<f64>,
    v_data: Vec<f64>,
    v_ref_mean: Vec<f64>,
    v_ref_std: Vec<f64>,
    gap: Vec<f64>,
    selected_index: usize,
    selected_delta: f64,
}

#[allow(clippy::too_many_arguments)]
fn pipeline_config(
    delta: f64,
    k: usize,
    restarts: usize,
    min_rows: usize,
    min_cols: usize,
    delta_ladder: Option<Vec<f64>>,
    max_iters: usize,
    seed: u64,
    gain_rule: &str,
) -> PyResult<PipelineConfig> {
    let mut floc = FlocConfig::new(delta);
    floc.k = k;
    floc.restarts = restarts;
    floc.min_rows = min_rows;
    floc.min_cols = min_cols;
    floc.max_iters = max_iters;
    floc.seed = seed;
    if let Some(ladder) = delta_ladder {
        floc.delta_fractions = ladder;
    }
    floc.gain_rule = match gain_rule {
        "normalized" => GainRule::Normalized,
        "printed" => GainRule::Printed,
        "floc" => GainRule::Floc,
        other => return Err(PyValueError::new_err(format!("unknown gain rule {other:?}"))),
    };
    let cfg = PipelineConfig::new(floc);
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Mean squared residue of the submatrix on `rows` x `cols`.
#[pyfunction]
fn mean_squared_residue(a: Vec<Vec<f64>>, rows: Vec<usize>, cols: Vec<usize>) -> PyResult<f64> {
    msr::msr(&matrix(a)?, &rows, &cols).map_err(to_py)
}

/// Mean squared residue of the whole matrix.
#[pyfunction]
fn matrix_msr(a: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(msr::matrix_msr(&matrix(a)?))
}

/// Optimal winners of an auction given as `(price, goods)` pairs; bid ids are
/// list positions. Returns `(winner ids, revenue)`.
#[pyfunction]
#[pyo3(signature = (bids, n_goods=None))]
fn solve_wdp(
    py: Python<'_>,
    bids: Vec<(f64, Vec<usize>)>,
    n_goods: Option<usize>,
) -> PyResult<(Vec<usize>, f64)> {
    let n_goods = n_goods.unwrap_or_else(|| {
        bids.iter().flat_map(|(_, g)| g.iter().copied()).max().map_or(0, |g| g + 1)
    });
    let bids = bids
        .into_iter()
        .enumerate()
        .map(|(id, (price, goods))| wdp::Bid::new(id, goods, price))
        .collect::<::exbic::Result<Vec<_>>>()
        .map_err(to_py)?;
    let auction = wdp::Auction::new(n_goods, bids).map_err(to_py)?;
    let alloc = py.detach(|| wdp::solve_wdp(&auction)).map_err(to_py)?;
    Ok((alloc.winners, alloc.revenue))
}

/// Harvest δ-biclusters and keep a maximal-volume row-exclusive subset.
#[pyfunction]
#[pyo3(signature = (a, delta, *, k=20, restarts=20, min_rows=4, min_cols=4,
                    delta_ladder=None, max_iters=50, seed=0, gain_rule="normalized"))]
#[allow(clippy::too_many_arguments)]
fn run_exclusive_biclustering(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    delta: f64,
    k: usize,
    restarts: usize,
    min_rows: usize,
    min_cols: usize,
    delta_ladder: Option<Vec<f64>>,
    max_iters: usize,
    seed: u64,
    gain_rule: &str,
) -> PyResult<PyPipelineResult> {
    let a = matrix(a)?;
    let cfg = pipeline_config(delta, k, restarts, min_rows, min_cols, delta_ladder, max_iters, seed, gain_rule)?;
    let r = py.detach(|| ::exbic::run_exclusive_biclustering(&a, &cfg)).map_err(to_py)?;
    Ok(PyPipelineResult {
        chosen: r.chosen.iter().map(PyBicluster::from).collect(),
        total_volume: r.total_volume,
        unclustered_rows: r.unclustered_rows,
        candidate_pool_size: r.candidate_pool_size,
    })
}

/// Volume gap curve over `grid` (absolute thresholds, ascending).
#[pyfunction]
#[pyo3(signature = (a, grid, replicates=10, *, k=20, restarts=20, min_rows=4, min_cols=4,
                    delta_ladder=None, max_iters=50, seed=0, gain_rule="normalized"))]
#[allow(clippy::too_many_arguments)]
fn gap_scan(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    grid: Vec<f64>,
    replicates: usize,
    k: usize,
    restarts: usize,
    min_rows: usize,
    min_cols: usize,
    delta_ladder: Option<Vec<f64>>,
    max_iters: usize,
    seed: u64,
    gain_rule: &str,
) -> PyResult<PyGapScan> {
    let a = matrix(a)?;
    let top = grid.last().copied().unwrap_or(1.0);
    let cfg = pipeline_config(top, k, restarts, min_rows, min_cols, delta_ladder, max_iters, seed, gain_rule)?;
    let r = py.detach(|| gap::gap_scan(&a, &grid, replicates, &cfg, seed)).map_err(to_py)?;
    let selected_delta = gap::select_threshold(&r).map_err(to_py)?;
    Ok(PyGapScan {
        selected_index: r.selected_index,
        selected_delta,
        grid: r.grid,
        v_data: r.v_data,
        v_ref_mean: r.v_ref_mean,
        v_ref_std: r.v_ref_std,
        gap: r.gap,
    })
}

/// Matrix with planted additive blocks. `preset` is `"ten_blocks"` or
/// `"five_blocks"`; otherwise `spec` holds the key-value spec text.
/// Returns `(matrix, ground truth as JSON)`.
#[pyfunction]
#[pyo3(signature = (preset=None, spec=None, seed=0))]
fn generate_synthetic(
    preset: Option<&str>,
    spec: Option<&str>,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, String)> {
    let spec = match (preset, spec) {
        (Some("ten_blocks"), None) => EmbedSpec::ten_perfect_blocks(seed),
        (Some("five_blocks"), None) => EmbedSpec::five_noisy_blocks(seed),
        (None, Some(text)) => EmbedSpec::parse(text).map_err(to_py)?,
        _ => return Err(PyValueError::new_err("give either a known preset or a spec")),
    };
    let (m, truth) = ::exbic::generate_synthetic(&spec).map_err(to_py)?;
    let truth = serde_json::to_string(&truth).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((m.to_rows(), truth))
}

/// Recovery report (as JSON) of `discovered` against a ground truth JSON.
#[pyfunction]
fn evaluate(discovered: Vec<PyBicluster>, truth: &str) -> PyResult<String> {
    let truth: synth::GroundTruth =
        serde_json::from_str(truth).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let found: Vec<::exbic::Bicluster> = discovered.iter().map(Into::into).collect();
    let report = ::exbic::evaluate(&found, &truth);
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "exbic")]
fn exbic_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyBicluster>()?;
    m.add_class::<PyPipelineResult>()?;
    m.add_class::<PyGapScan>()?;
    m.add_function(wrap_pyfunction!(mean_squared_residue, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_msr, m)?)?;
    m.add_function(wrap_pyfunction!(solve_wdp, m)?)?;
    m.add_function(wrap_pyfunction!(run_exclusive_biclustering, m)?)?;
    m.add_function(wrap_pyfunction!(gap_scan, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
