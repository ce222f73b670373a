use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many multiply-adds a matmul is split across the rayon pool.
const PAR_FLOP_CUTOFF: usize = 1 << 21;

/// Dense row-major matrix of 64-bit reals.
///
/// Holds batches of embeddings (one row per vector) and every intermediate
/// activation in the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::dim("Matrix::from_rows", c, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    /// Single row vector.
    pub fn row_vector(data: Vec<f64>) -> Self {
        Matrix {
            rows: 1,
            cols: data.len(),
            data,
        }
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
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise combine with another matrix of the same shape.
    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!(self.shape(), other.shape(), "add_assign_scaled shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// C = self · rhs.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} · {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let n = rhs.cols;
        let mut out = Matrix::zeros(self.rows, n);
        let work = self.rows * self.cols * n;
        if work >= PAR_FLOP_CUTOFF && self.rows > 1 {
            out.data
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, orow)| Self::matmul_row(orow, self.row(i), rhs));
        } else {
            for (i, orow) in out.data.chunks_mut(n).enumerate() {
                Self::matmul_row(orow, self.row(i), rhs);
            }
        }
        out
    }

    #[inline]
    fn matmul_row(orow: &mut [f64], arow: &[f64], rhs: &Matrix) {
        let n = rhs.cols;
        for (k, &a) in arow.iter().enumerate() {
            let brow = &rhs.data[k * n..(k + 1) * n];
            for (o, &b) in orow.iter_mut().zip(brow) {
                *o += a * b;
            }
        }
    }

    /// C = selfᵀ · rhs, without materializing the transpose.
    pub fn matmul_at_b(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.rows, rhs.rows,
            "matmul_at_b shape mismatch: ({}x{})ᵀ · {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        let n = rhs.cols;
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = rhs.row(k);
            for (i, &a) in arow.iter().enumerate() {
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// C = self · rhsᵀ.
    pub fn matmul_a_bt(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.cols,
            "matmul_a_bt shape mismatch: {}x{} · ({}x{})ᵀ",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let n = rhs.rows;
        let mut out = Matrix::zeros(self.rows, n);
        let work = self.rows * self.cols * n;
        if work >= PAR_FLOP_CUTOFF && self.rows > 1 {
            out.data
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, orow)| {
                    let arow = self.row(i);
                    for (j, o) in orow.iter_mut().enumerate() {
                        *o = dot(arow, rhs.row(j));
                    }
                });
        } else {
            for (i, orow) in out.data.chunks_mut(n).enumerate() {
                let arow = self.row(i);
                for (j, o) in orow.iter_mut().enumerate() {
                    *o = dot(arow, rhs.row(j));
                }
            }
        }
        out
    }

    /// Sum of each column, as a 1×cols matrix.
    pub fn col_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite entries in {context}")))
        }
    }

    /// Scale every row to unit L2 norm. Rows with norm below `eps` are left
    /// untouched; returns their count.
    pub fn normalize_rows_in_place(&mut self, eps: f64) -> usize {
        let mut zeros = 0;
        for i in 0..self.rows {
            let row = self.row_mut(i);
            let norm = l2_norm(row);
            if norm < eps {
                zeros += 1;
            } else {
                for v in row {
                    *v /= norm;
                }
            }
        }
        zeros
    }

    /// Extract the given rows into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Convert to 32-bit reals, row-major.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::from_f32", rows * cols, data.len()));
        }
        Ok(Matrix {
            rows,
            cols,
            data: data.iter().map(|&v| v as f64).collect(),
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 0.5], vec![4.0, -3.0]]).unwrap();
        let c = a.matmul(&b);
        let c_via_at = a.transpose().matmul_at_b(&b);
        let c_via_bt = a.matmul_a_bt(&b.transpose());
        for (x, y) in c.data().iter().zip(c_via_at.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in c.data().iter().zip(c_via_bt.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_parallel_matches_serial() {
        // Big enough to cross the parallel cutoff.
        let n = 160;
        let mut a = Matrix::zeros(n, n);
        let mut b = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, ((i * 31 + j * 7) % 11) as f64 - 5.0);
                b.set(i, j, ((i * 13 + j * 3) % 7) as f64 - 3.0);
            }
        }
        let c = a.matmul(&b);
        // Serial reference on a few spot rows.
        for &i in &[0usize, 1, n / 2, n - 1] {
            for j in (0..n).step_by(37) {
                let mut s = 0.0;
                for k in 0..n {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn normalize_rows_counts_zero_rows() {
        let mut m = Matrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let zeros = m.normalize_rows_in_place(1e-12);
        assert_eq!(zeros, 1);
        assert!((m.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((m.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(m.row(1), &[0.0, 0.0]);
    }
}
