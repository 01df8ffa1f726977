//! Dense row-major f64 matrices with the elementwise and reduction
//! primitives the rest of the pipeline is built from.

use serde::{Deserialize, Serialize};

use super::TensorError;

/// Axis selector for [`DenseMatrix::concat`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major values. Panics if the length does not
    /// match `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            rows * cols,
            "value length {} does not match {}x{}",
            values.len(),
            rows,
            cols
        );
        let m = Self { rows, cols, values };
        m.debug_check_finite();
        m
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Single-row matrix from a slice.
    pub fn row_vector(values: &[f64]) -> Self {
        Self::from_vec(1, values.len(), values.to_vec())
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// NaN/Inf trips this assertion in debug builds; release builds skip it.
    pub fn debug_check_finite(&self) {
        debug_assert!(
            self.values.iter().all(|v| v.is_finite()),
            "non-finite value in {}x{} matrix",
            self.rows,
            self.cols
        );
    }

    fn shape_err(&self, op: &'static str, other: &Self) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.shape(),
            rhs: other.shape(),
        }
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        if self.cols != other.rows {
            return Err(self.shape_err("matmul", other));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let mut comp = vec![0.0f64; other.cols];
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.values[i * other.cols..(i + 1) * other.cols];
            comp.iter_mut().for_each(|c| *c = 0.0);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for ((o, c), &b) in out_row.iter_mut().zip(comp.iter_mut()).zip(b_row) {
                    let term = a * b;
                    let sum = *o + term;
                    // Neumaier compensation keeps each accumulated entry within
                    // one rounding of the exact sum, which the finite-difference
                    // gradient checks depend on.
                    *c += if o.abs() >= term.abs() {
                        (*o - sum) + term
                    } else {
                        (term - sum) + *o
                    };
                    *o = sum;
                }
            }
            for (o, c) in out_row.iter_mut().zip(comp.iter()) {
                *o += c;
            }
        }
        out.debug_check_finite();
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// Row-wise softmax with per-row max subtraction for stability.
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.values[r * self.cols..(r + 1) * self.cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn tanh_elem(&self) -> Self {
        self.map(f64::tanh)
    }

    pub fn sigmoid_elem(&self) -> Self {
        self.map(|v| 1.0 / (1.0 + (-v).exp()))
    }

    /// LeakyReLU(x) = x for x >= 0, `slope * x` otherwise.
    pub fn leaky_relu_elem(&self, slope: f64) -> Self {
        self.map(|v| if v >= 0.0 { v } else { slope * v })
    }

    /// Per-column mean across rows; returns a `1 x cols` row vector.
    pub fn mean_rows(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        let mut comp = vec![0.0f64; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let term = self.values[r * self.cols + c];
                let acc = out.values[c];
                let sum = acc + term;
                comp[c] += if acc.abs() >= term.abs() {
                    (acc - sum) + term
                } else {
                    (term - sum) + acc
                };
                out.values[c] = sum;
            }
        }
        let n = self.rows as f64;
        for (v, c) in out.values.iter_mut().zip(comp) {
            *v = (*v + c) / n;
        }
        out
    }

    pub fn sum_all(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn concat(&self, other: &Self, axis: Axis) -> Result<Self, TensorError> {
        match axis {
            Axis::Cols => {
                if self.rows != other.rows {
                    return Err(self.shape_err("concat_cols", other));
                }
                let cols = self.cols + other.cols;
                let mut out = Self::zeros(self.rows, cols);
                for r in 0..self.rows {
                    out.values[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
                    out.values[r * cols + self.cols..(r + 1) * cols].copy_from_slice(other.row(r));
                }
                Ok(out)
            }
            Axis::Rows => {
                if self.cols != other.cols {
                    return Err(self.shape_err("concat_rows", other));
                }
                let mut values = self.values.clone();
                values.extend_from_slice(&other.values);
                Ok(Self {
                    rows: self.rows + other.rows,
                    cols: self.cols,
                    values,
                })
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        if self.shape() != other.shape() {
            return Err(self.shape_err("add", other));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    /// Hadamard product.
    pub fn mul_elem(&self, other: &Self) -> Result<Self, TensorError> {
        if self.shape() != other.shape() {
            return Err(self.shape_err("mul_elem", other));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Adds a `1 x cols` row vector to every row.
    pub fn add_row_broadcast(&self, row: &Self) -> Result<Self, TensorError> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(self.shape_err("add_row_broadcast", row));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[r * self.cols + c] += row.values[c];
            }
        }
        Ok(out)
    }

    /// Columns `[start, start + len)` of every row.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Self, TensorError> {
        if start + len > self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                lhs: self.shape(),
                rhs: (start, len),
            });
        }
        let mut out = Self::zeros(self.rows, len);
        for r in 0..self.rows {
            out.values[r * len..(r + 1) * len]
                .copy_from_slice(&self.values[r * self.cols + start..r * self.cols + start + len]);
        }
        Ok(out)
    }

    /// Selects rows by index, in order; indices may repeat.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self, TensorError> {
        let mut out = Self::zeros(indices.len(), self.cols);
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= self.rows {
                return Err(TensorError::RowOutOfBounds {
                    index: idx,
                    rows: self.rows,
                });
            }
            out.values[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(idx));
        }
        Ok(out)
    }
}
