//! Dense row-major matrices and the two matrix-vector products the
//! iterations need.
//!
//! `A x` parallelises over rows and `A^T z` over fixed column blocks; in both
//! cases each output entry is accumulated in a fixed order, so the products
//! are bit-identical for any number of worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

static MATRIX_ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of dense matrices allocated by this process so far.
pub fn matrix_allocations() -> usize {
    MATRIX_ALLOCATIONS.load(Ordering::Relaxed)
}

const COLUMN_BLOCK: usize = 256;
const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MATRIX_ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len("matrix data", rows * cols, data.len())?;
        MATRIX_ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::InvalidDimension("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_len("matrix row", c, row.len())?;
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, T> {
        self.data.chunks_mut(self.cols)
    }

    pub(crate) fn par_rows_mut(&mut self) -> rayon::slice::ChunksMut<'_, T> {
        self.data.par_chunks_mut(self.cols)
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("A x", self.cols, x.len())?;
        let mut out = vec![T::zero(); self.rows];
        let dot = |(r, o): (usize, &mut T)| {
            let row = self.row(r);
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x) {
                acc = acc + *a * *b;
            }
            *o = acc;
        };
        if self.data.len() >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(dot);
        } else {
            out.iter_mut().enumerate().for_each(dot);
        }
        Ok(out)
    }

    /// `A^T z`, computed from the same row-major storage.
    pub fn mul_transpose_vec(&self, z: &[T]) -> Result<Vec<T>> {
        check_len("A^T z", self.rows, z.len())?;
        let mut out = vec![T::zero(); self.cols];
        let block = |(b, chunk): (usize, &mut [T])| {
            let c0 = b * COLUMN_BLOCK;
            for (r, &zr) in z.iter().enumerate() {
                let row = &self.row(r)[c0..c0 + chunk.len()];
                for (o, a) in chunk.iter_mut().zip(row) {
                    *o = *o + *a * zr;
                }
            }
        };
        if self.data.len() >= PAR_THRESHOLD {
            out.par_chunks_mut(COLUMN_BLOCK).enumerate().for_each(block);
        } else {
            out.chunks_mut(COLUMN_BLOCK).enumerate().for_each(block);
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Mean over columns of the squared column norm.
    pub fn mean_squared_column_norm(&self) -> T {
        let mut norms = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (n, a) in norms.iter_mut().zip(self.row(r)) {
                *n = *n + *a * *a;
            }
        }
        crate::scalar::mean(&norms)
    }
}

/// `u + s v` written into `u`.
pub(crate) fn axpy<T: Real>(u: &mut [T], s: T, v: &[T]) {
    for (a, b) in u.iter_mut().zip(v) {
        *a = *a + s * *b;
    }
}

pub(crate) fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap()
    }

    #[test]
    fn products_match_hand_computation() {
        let a = small();
        assert_eq!(a.mul_vec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(
            a.mul_transpose_vec(&[1.0, 1.0]).unwrap(),
            vec![5.0, 7.0, 9.0]
        );
        assert_eq!(a.transpose().mul_vec(&[1.0, 1.0]).unwrap(), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = small();
        assert!(matches!(
            a.mul_vec(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 1, .. })
        ));
        assert!(a.mul_transpose_vec(&[1.0; 3]).is_err());
    }

    #[test]
    fn transpose_product_is_thread_count_invariant() {
        let rows = 300;
        let cols = 700;
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| ((i * 7919) % 1013) as f64 / 1013.0 - 0.5)
            .collect();
        let a = DenseMatrix::from_row_major(rows, cols, data).unwrap();
        let z: Vec<f64> = (0..rows).map(|i| (i as f64).sin()).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = one.install(|| a.mul_transpose_vec(&z).unwrap());
        let r4 = four.install(|| a.mul_transpose_vec(&z).unwrap());
        assert_eq!(r1, r4);
    }
}
