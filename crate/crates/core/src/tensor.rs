//! Dense row-major 2-D arrays of `f64`.
//!
//! Every value in the engine is a matrix; scalars are `1×1` and vectors are
//! either a single row or a single column. Kernels here are plain loops and
//! know nothing about differentiation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row/column extent of a [`Tensor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn numel(self) -> usize {
        self.rows * self.cols
    }

    pub fn transposed(self) -> Self {
        Shape::new(self.cols, self.rows)
    }

    pub fn dims(self) -> [usize; 2] {
        [self.rows, self.cols]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}x{}]", self.rows, self.cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::Shape(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape(format!("ragged rows: expected {c} columns, got {}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(Shape::new(r, c), data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: Shape::SCALAR, data: vec![v] }
    }

    /// A `1×n` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor { shape: Shape::new(1, values.len()), data: values }
    }

    /// An `n×1` column vector.
    pub fn column(values: Vec<f64>) -> Self {
        Tensor { shape: Shape::new(values.len(), 1), data: values }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, v: f64) -> Self {
        Tensor { shape, data: vec![v; shape.numel()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape.cols;
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a `1×1` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape != Shape::SCALAR {
            return Err(Error::Shape(format!("item() on non-scalar tensor {}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two equally shaped tensors. Callers check shapes.
    pub(crate) fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape, other.shape);
        Tensor { shape: self.shape, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor {
        let Shape { rows, cols } = self.shape;
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = self.data[r * cols + c];
            }
        }
        Tensor { shape: self.shape.transposed(), data: out }
    }

    pub(crate) fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k, n) = (self.shape.rows, self.shape.cols, other.shape.cols);
        debug_assert_eq!(k, other.shape.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor { shape: Shape::new(m, n), data: out }
    }

    /// `B×1` row sums.
    pub(crate) fn sum_rows(&self) -> Tensor {
        Tensor::column((0..self.shape.rows).map(|r| self.row_slice(r).iter().sum()).collect())
    }

    /// `1×C` column sums.
    pub(crate) fn sum_cols(&self) -> Tensor {
        let mut out = vec![0.0; self.shape.cols];
        for r in 0..self.shape.rows {
            for (o, v) in out.iter_mut().zip(self.row_slice(r)) {
                *o += v;
            }
        }
        Tensor::row(out)
    }

    pub(crate) fn row_softmax(&self) -> Tensor {
        let mut out = self.data.clone();
        for row in out.chunks_mut(self.shape.cols.max(1)) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Tensor { shape: self.shape, data: out }
    }

    pub(crate) fn row_log_softmax(&self) -> Tensor {
        let mut out = self.data.clone();
        for row in out.chunks_mut(self.shape.cols.max(1)) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Tensor { shape: self.shape, data: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::row(vec![1.0, 2.0]);
        let b = Tensor::column(vec![3.0, 4.0]);
        assert_eq!(a.matmul(&b).data(), &[11.0]);
    }

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor::new(Shape::new(2, 2), vec![1.0]).is_err());
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn softmax_rows_normalise() {
        let t = Tensor::from_rows(&[vec![0.0, 0.0], vec![1000.0, 1000.0 + 3f64.ln()]]).unwrap();
        let s = t.row_softmax();
        assert_eq!(s.row_slice(0), &[0.5, 0.5]);
        assert!((s.get(1, 1) - 0.75).abs() < 1e-12);
        let ls = t.row_log_softmax();
        assert!((ls.get(1, 0).exp() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn reductions() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(t.sum_rows().data(), &[6.0, 15.0]);
        assert_eq!(t.sum_cols().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(t.transpose().shape(), Shape::new(3, 2));
        assert_eq!(t.transpose().get(2, 1), 6.0);
    }
}
