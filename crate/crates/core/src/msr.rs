//! Mean-square-residue coherence of a submatrix under the additive model
//! `a_ij = mu + alpha_i + beta_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;

fn check_set(indices: &[usize], bound: usize, what: &str) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    let mut seen = vec![false; bound];
    for &k in indices {
        if k >= bound {
            return Err(Error::invalid(format!("{what} index {k} out of range (< {bound})")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::invalid(format!("{what} index {k} repeated")));
        }
    }
    Ok(())
}

fn check_index(k: usize, bound: usize, what: &str) -> Result<()> {
    if k >= bound {
        return Err(Error::invalid(format!("{what} index {k} out of range (< {bound})")));
    }
    Ok(())
}

/// Mean of row `i` over the columns `cols`.
pub fn row_mean(a: &ExpressionMatrix, i: usize, cols: &[usize]) -> Result<f64> {
    check_index(i, a.n_rows(), "row")?;
    check_set(cols, a.n_cols(), "column")?;
    let row = a.row(i);
    Ok(cols.iter().map(|&j| row[j]).sum::<f64>() / cols.len() as f64)
}

/// Mean of column `j` over the rows `rows`.
pub fn col_mean(a: &ExpressionMatrix, rows: &[usize], j: usize) -> Result<f64> {
    check_set(rows, a.n_rows(), "row")?;
    check_index(j, a.n_cols(), "column")?;
    Ok(rows.iter().map(|&i| a.get(i, j)).sum::<f64>() / rows.len() as f64)
}

pub fn overall_mean(a: &ExpressionMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    check_set(rows, a.n_rows(), "row")?;
    check_set(cols, a.n_cols(), "column")?;
    Ok(block_sum(a, rows, cols) / (rows.len() * cols.len()) as f64)
}

fn block_sum(a: &ExpressionMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| {
            let row = a.row(i);
            cols.iter().map(|&j| row[j]).sum::<f64>()
        })
        .sum()
}

/// Residue of cell `(i, j)` inside the bicluster `(rows, cols)`.
pub fn residue(
    a: &ExpressionMatrix,
    rows: &[usize],
    cols: &[usize],
    i: usize,
    j: usize,
) -> Result<f64> {
    check_set(rows, a.n_rows(), "row")?;
    check_set(cols, a.n_cols(), "column")?;
    if !rows.contains(&i) || !cols.contains(&j) {
        return Err(Error::invalid(format!("cell ({i}, {j}) lies outside the bicluster")));
    }
    let row = a.row(i);
    let a_ij = row[j];
    let a_i = cols.iter().map(|&c| row[c]).sum::<f64>() / cols.len() as f64;
    let a_j = rows.iter().map(|&r| a.get(r, j)).sum::<f64>() / rows.len() as f64;
    let a_all = block_sum(a, rows, cols) / (rows.len() * cols.len()) as f64;
    Ok(a_ij - a_i - a_j + a_all)
}

/// Mean square residue `H(I, J)`.
pub fn msr(a: &ExpressionMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    check_set(rows, a.n_rows(), "row")?;
    check_set(cols, a.n_cols(), "column")?;
    Ok(msr_unchecked(a, rows, cols))
}

pub(crate) fn msr_unchecked(a: &ExpressionMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    let nr = rows.len() as f64;
    let nc = cols.len() as f64;
    let mut col_means = vec![0.0; cols.len()];
    let mut row_means = Vec::with_capacity(rows.len());
    let mut total = 0.0;
    for &i in rows {
        let row = a.row(i);
        let mut s = 0.0;
        for (k, &j) in cols.iter().enumerate() {
            s += row[j];
            col_means[k] += row[j];
        }
        total += s;
        row_means.push(s / nc);
    }
    for c in &mut col_means {
        *c /= nr;
    }
    let mean = total / (nr * nc);
    let mut ss = 0.0;
    for (&i, &ri) in rows.iter().zip(&row_means) {
        let row = a.row(i);
        for (&j, &cj) in cols.iter().zip(&col_means) {
            let r = row[j] - ri - cj + mean;
            ss += r * r;
        }
    }
    ss / (nr * nc)
}

/// MSR of the whole matrix, the unit in which thresholds are usually given.
pub fn matrix_msr(a: &ExpressionMatrix) -> f64 {
    let rows: Vec<usize> = (0..a.n_rows()).collect();
    let cols: Vec<usize> = (0..a.n_cols()).collect();
    msr_unchecked(a, &rows, &cols)
}

/// `true` iff `H(I, J) < delta`, `|I| > min_rows` and `|J| > min_cols`.
pub fn is_delta_bicluster(
    a: &ExpressionMatrix,
    rows: &[usize],
    cols: &[usize],
    delta: f64,
    min_rows: usize,
    min_cols: usize,
) -> Result<bool> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    if min_rows == 0 || min_cols == 0 {
        return Err(Error::invalid("minimum dimensions must be at least 1"));
    }
    let h = msr(a, rows, cols)?;
    Ok(h < delta && rows.len() > min_rows && cols.len() > min_cols)
}

/// A submatrix with sorted row/column index sets and its cached MSR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bicluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub msr: f64,
    pub volume: usize,
}

impl Bicluster {
    /// Sorts the index sets and evaluates the MSR.
    pub fn new(a: &ExpressionMatrix, mut rows: Vec<usize>, mut cols: Vec<usize>) -> Result<Self> {
        rows.sort_unstable();
        cols.sort_unstable();
        check_set(&rows, a.n_rows(), "row")?;
        check_set(&cols, a.n_cols(), "column")?;
        let msr = msr_unchecked(a, &rows, &cols);
        let volume = rows.len() * cols.len();
        Ok(Self { rows, cols, msr, volume })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Identity used for deduplication.
    pub fn key(&self) -> (&[usize], &[usize]) {
        (&self.rows, &self.cols)
    }

    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        self.rows.binary_search(&i).is_ok() && self.cols.binary_search(&j).is_ok()
    }

    pub fn rows_intersect(&self, other: &Bicluster) -> bool {
        let (mut x, mut y) = (0, 0);
        while x < self.rows.len() && y < other.rows.len() {
            match self.rows[x].cmp(&other.rows[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}
