//! Dense row-major `f64` tensors and the matrix kernels the engine runs on.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    /// Leading dimension, read as the batch size.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Elements per leading-dimension slice.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Gathers the given rows into a new tensor with the same trailing shape.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor { shape, data }
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

/// Matrix operand: a row-major `rows x cols` slice, optionally transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Mat {
            transposed: !self.transposed,
            ..self
        }
    }

    fn view(&self) -> ArrayView2<'a, f64> {
        let v = ArrayView2::from_shape((self.rows, self.cols), self.data)
            .expect("matrix slice length matches its shape");
        if self.transposed {
            v.reversed_axes()
        } else {
            v
        }
    }
}

/// `out = a * b + beta * out`, where `out` is row-major `m x n`.
pub(crate) fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f64, out: &mut [f64]) {
    let av = a.view();
    let bv = b.view();
    let (m, n) = (av.nrows(), bv.ncols());
    assert_eq!(av.ncols(), bv.nrows(), "inner dimensions differ");
    let mut cv = ArrayViewMut2::from_shape((m, n), out).expect("output length matches m x n");
    general_mat_mul(1.0, &av, &bv, beta, &mut cv);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn shape_product_must_match() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3x4
        let mut out = vec![0.0; 8];
        gemm(Mat::new(&a, 2, 3), Mat::new(&b, 3, 4), 0.0, &mut out);
        for (x, y) in out.iter().zip(naive(&a, &b, 2, 3, 4)) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T stored as 3x2
        let at: Vec<f64> = (0..3)
            .flat_map(|j| (0..2).map(move |i| (i, j)))
            .map(|(i, j)| a[i * 3 + j])
            .collect();
        let mut out2 = vec![1.0; 8];
        gemm(Mat::new(&at, 3, 2).t(), Mat::new(&b, 3, 4), 1.0, &mut out2);
        for (x, y) in out2.iter().zip(naive(&a, &b, 2, 3, 4)) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn select_rows_keeps_trailing_shape() {
        let t = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let s = t.select_rows(&[2, 0]);
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[5., 6., 1., 2.]);
    }
}
