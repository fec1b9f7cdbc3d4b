use super::LearnError;

/// Dense column-major feature matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    n_rows: usize,
    cols: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Self, LearnError> {
        let n_rows = cols.first().map_or(0, Vec::len);
        if let Some(bad) = cols.iter().find(|c| c.len() != n_rows) {
            return Err(LearnError::LengthMismatch(n_rows, bad.len()));
        }
        Ok(Self { n_rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LearnError> {
        let p = rows.first().map_or(0, Vec::len);
        let mut cols = vec![Vec::with_capacity(rows.len()); p];
        for r in rows {
            if r.len() != p {
                return Err(LearnError::LengthMismatch(p, r.len()));
            }
            for (c, v) in cols.iter_mut().zip(r) {
                c.push(*v);
            }
        }
        Ok(Self { n_rows: rows.len(), cols })
    }

    /// An `n_rows x 0` matrix.
    pub fn empty(n_rows: usize) -> Self {
        Self { n_rows, cols: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut Vec<f64> {
        &mut self.cols[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cols[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        Matrix {
            n_rows: rows.len(),
            cols: self.cols.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        Matrix { n_rows: self.n_rows, cols: cols.iter().map(|&j| self.cols[j].clone()).collect() }
    }

    pub fn push_col(&mut self, col: Vec<f64>) -> Result<(), LearnError> {
        if self.cols.is_empty() && self.n_rows == 0 {
            self.n_rows = col.len();
        }
        if col.len() != self.n_rows {
            return Err(LearnError::LengthMismatch(self.n_rows, col.len()));
        }
        self.cols.push(col);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.cols.iter().flatten().all(|v| v.is_finite())
    }
}
