use faer::Mat;

use crate::error::{CkpcaError, Result};

/// Dense `n x p` observation matrix stored row-major; one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * p {
            return Err(CkpcaError::DimensionMismatch {
                expected: n * p,
                found: values.len(),
            });
        }
        Ok(Self { n, p, values })
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            values: vec![0.0; n * p],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * p);
        for row in rows {
            let row = row.as_ref();
            if row.len() != p {
                return Err(CkpcaError::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            n: rows.len(),
            p,
            values,
        })
    }

    pub fn from_mat(m: faer::MatRef<'_, f64>) -> Self {
        let (n, p) = (m.nrows(), m.ncols());
        let mut values = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                values.push(m[(i, j)]);
            }
        }
        Self { n, p, values }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.p, |i, j| self.get(i, j))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            p: self.p,
            values,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &DataMatrix) -> Result<Self> {
        if self.p != other.p {
            return Err(CkpcaError::DimensionMismatch {
                expected: self.p,
                found: other.p,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self {
            n: self.n + other.n,
            p: self.p,
            values,
        })
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.p];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Unbiased (n - 1 denominator) column variances.
    pub fn column_variances(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut vars = vec![0.0; self.p];
        for row in self.rows() {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                let d = v - m;
                *s += d * d;
            }
        }
        let denom = (self.n as f64 - 1.0).max(1.0);
        vars.iter_mut().for_each(|s| *s /= denom);
        vars
    }
}

/// Builds an `n x q` [`DataMatrix`] from a faer matrix view of the same shape.
impl From<&Mat<f64>> for DataMatrix {
    fn from(m: &Mat<f64>) -> Self {
        Self::from_mat(m.as_ref())
    }
}
