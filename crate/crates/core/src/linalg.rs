//! Dense vector and matrix helpers: ridge-regularized inversion, Euclidean
//! projection onto the probability simplex and cosine distance.
//!
//! Everything here is small and allocation-happy; the largest matrices in the
//! crate are `C x C` confusion matrices and `C x D` weight matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::structural(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::structural("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::structural("ragged rows"));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::structural(format!(
                "matvec: {} columns vs vector of length {}",
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::structural(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.row_mut(i).iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Default ridge for inverting a confusion matrix: `1e-6 * trace(m) / n`.
pub fn default_ridge(m: &Matrix) -> f64 {
    1e-6 * m.trace() / m.rows().max(1) as f64
}

/// Computes `(m + lambda * I)^{-1}` by Gauss-Jordan elimination with partial
/// pivoting.
pub fn invert_ridge(m: &Matrix, lambda: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::structural(format!(
            "cannot invert a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::structural(format!(
            "ridge must be >= 0, got {lambda}"
        )));
    }
    let n = m.rows;
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let scale = a.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let tol = scale * n as f64 * f64::EPSILON;
    let mut inv = Matrix::identity(n);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .expect("non-empty pivot range");
        let pivot = a[(pivot_row, col)];
        if pivot.abs() <= tol || pivot == 0.0 {
            return Err(Error::Singular { pivot: col });
        }
        if pivot_row != col {
            swap_rows(&mut a, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let recip = 1.0 / pivot;
        a.row_mut(col).iter_mut().for_each(|x| *x *= recip);
        inv.row_mut(col).iter_mut().for_each(|x| *x *= recip);

        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for c in 0..n {
                let (pa, pi) = (a[(col, c)], inv[(col, c)]);
                a[(r, c)] -= factor * pa;
                inv[(r, c)] -= factor * pi;
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut Matrix, i: usize, j: usize) {
    for c in 0..m.cols {
        m.data.swap(i * m.cols + c, j * m.cols + c);
    }
}

/// Euclidean projection onto `{p : p >= 0, sum(p) = 1}` (sort-based).
///
/// Inputs already on the simplex are returned unchanged.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::structural("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::structural("simplex projection needs finite input"));
    }
    if is_on_simplex(v, 1e-12) {
        return Ok(v.to_vec());
    }

    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // absorb rounding so the result sums to one
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

pub fn is_on_simplex(v: &[f64], tol: f64) -> bool {
    v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// `1 - <a, b> / (|a| |b|)`, floored at zero against rounding.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::structural(format!(
            "cosine distance of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Degenerate("cosine distance of a zero vector".into()));
    }
    // sqrt of the product keeps cosine_distance(a, a) exactly zero
    Ok((1.0 - dot(a, b) / (aa * bb).sqrt()).max(0.0))
}
