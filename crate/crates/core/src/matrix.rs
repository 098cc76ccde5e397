use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense, row-major expression matrix. Rows are the exclusive dimension
/// (patients/samples), columns may be shared between biclusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl ExpressionMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "expected {} values for a {}x{} matrix, got {}",
                n_rows * n_cols,
                n_rows,
                n_cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / n_cols,
                pos % n_cols
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            row_labels: None,
            col_labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(Error::invalid(format!(
                "row {} has {} values, expected {}",
                i,
                rows[i].len(),
                n_cols
            )));
        }
        Self::new(n_rows, n_cols, rows.concat())
    }

    pub fn with_row_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_rows {
            return Err(Error::invalid(format!(
                "{} row labels for {} rows",
                labels.len(),
                self.n_rows
            )));
        }
        self.row_labels = Some(labels);
        Ok(self)
    }

    pub fn with_col_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_cols {
            return Err(Error::invalid(format!(
                "{} column labels for {} columns",
                labels.len(),
                self.n_cols
            )));
        }
        self.col_labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |i| self.get(i, j))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.n_cols {
            values.extend(self.column(j));
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            values,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::invalid("column selection is empty"));
        }
        if let Some(&j) = cols.iter().find(|&&j| j >= self.n_cols) {
            return Err(Error::invalid(format!("column {j} out of range")));
        }
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            values,
            row_labels: self.row_labels.clone(),
            col_labels: self
                .col_labels
                .as_ref()
                .map(|l| cols.iter().map(|&j| l[j].clone()).collect()),
        })
    }

    /// Applies `f` to every entry. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let mut out = Self::new(self.n_rows, self.n_cols, values)?;
        out.row_labels = self.row_labels.clone();
        out.col_labels = self.col_labels.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ExpressionMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(ExpressionMatrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ExpressionMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(ExpressionMatrix::new(0, 2, vec![]).is_err());
        assert!(ExpressionMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = ExpressionMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(m.clone().with_row_labels(vec![]).is_err());
        assert!(m.with_col_labels(vec!["a".into(), "b".into()]).is_ok());
    }

    #[test]
    fn transpose_and_select() {
        let m = ExpressionMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let t = m.transpose();
        assert_eq!(t.to_rows(), vec![vec![1.0, 4.0], vec![2.0, 5.0], vec![3.0, 6.0]]);
        let s = m.select_columns(&[2, 0]).unwrap();
        assert_eq!(s.to_rows(), vec![vec![3.0, 1.0], vec![6.0, 4.0]]);
        assert!(m.select_columns(&[3]).is_err());
    }
}
