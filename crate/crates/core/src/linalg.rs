//! Dense row-major matrix kernels.
//!
//! Just enough linear algebra for the forward and backward passes of a
//! bias-free MLP: plain matmul, the two transposed variants backprop needs,
//! elementwise maps, and in-place clipping. All scalars are `f64`; rows are
//! samples in batched passes.
//!
//! Kernels are pure (except [`Matrix::clip_in_place`], which mutates only
//! its receiver) and run single-threaded, so results are bitwise
//! deterministic for a fixed input.

use crate::error::{Error, Result};

/// Dense row-major 2-D array of `f64`.
#[derive(Debug, Clone, PartialEq)]
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows in matrix literal"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Iterator over row slices.
    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Copy one row into a new 1-row matrix.
    pub fn single_row(&self, r: usize) -> Matrix {
        Matrix {
            rows: 1,
            cols: self.cols,
            data: self.row(r).to_vec(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let n = other.cols;
        let mut out = Matrix::zeros(self.rows, n);
        for (a_row, out_row) in self
            .data
            .chunks_exact(self.cols.max(1))
            .zip(out.data.chunks_exact_mut(n.max(1)))
        {
            for (&aik, b_row) in a_row.iter().zip(other.data.chunks_exact(n.max(1))) {
                if aik != 0.0 {
                    axpy(out_row, aik, b_row);
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`, without materialising the transpose. Used for
    /// weight gradients, where `self` is a batch of activations.
    pub fn matmul_at(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape("matmul_at", self.shape(), other.shape()));
        }
        let m = self.cols;
        let n = other.cols;
        let mut out = Matrix::zeros(m, n);
        for (a_row, b_row) in self
            .data
            .chunks_exact(m.max(1))
            .zip(other.data.chunks_exact(n.max(1)))
        {
            for (&aki, out_row) in a_row.iter().zip(out.data.chunks_exact_mut(n.max(1))) {
                if aki != 0.0 {
                    axpy(out_row, aki, b_row);
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, without materialising the transpose. Used to push
    /// deltas back through a weight layer.
    pub fn matmul_bt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape("matmul_bt", self.shape(), other.shape()));
        }
        let k = self.cols;
        let n = other.rows;
        let mut out = Matrix::zeros(self.rows, n);
        for (a_row, out_row) in self
            .data
            .chunks_exact(k.max(1))
            .zip(out.data.chunks_exact_mut(n.max(1)))
        {
            for (b_row, o) in other.data.chunks_exact(k.max(1)).zip(out_row.iter_mut()) {
                *o = dot(a_row, b_row);
            }
        }
        Ok(out)
    }

    /// Elementwise map into a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise combination of two same-shaped matrices.
    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape("zip_map", self.shape(), other.shape()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Clamp every entry into `[lo, hi]`. Entries already inside are left
    /// bit-identical, so the operation is idempotent.
    pub fn clip_in_place(&mut self, lo: f64, hi: f64) -> Result<()> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("clip range [{lo}, {hi}] is empty")));
        }
        for x in &mut self.data {
            if *x < lo {
                *x = lo;
            } else if *x > hi {
                *x = hi;
            }
        }
        Ok(())
    }

    /// `self += alpha * other`, in place.
    pub fn axpy_in_place(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape("axpy_in_place", self.shape(), other.shape()));
        }
        axpy(&mut self.data, alpha, &other.data);
        Ok(())
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        for x in &mut self.data {
            *x *= alpha;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
fn axpy(out: &mut [f64], alpha: f64, xs: &[f64]) {
    for (o, &x) in out.iter_mut().zip(xs) {
        *o += alpha * x;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
