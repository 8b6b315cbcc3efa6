//! Small dense matrices over any [`Scalar`], with row reduction.
//!
//! Meant for exact rational rank and null-space decisions at single sites.

use alloc::vec;
use alloc::vec::Vec;

use crate::algebra::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn mul(&self, o: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, o.rows);
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..o.cols {
                    out[(i, j)] = out[(i, j)] + a * o[(l, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Rows of `self` followed by rows of `o`.
    pub fn vstack(&self, o: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, o.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&o.data);
        Mat { rows: self.rows + o.rows, cols: self.cols, data }
    }

    /// Columns of `self` followed by columns of `o`.
    pub fn hstack(&self, o: &Mat<T>) -> Mat<T> {
        self.transpose().vstack(&o.transpose()).transpose()
    }

    /// Reduced row echelon form and pivot columns.
    pub fn rref(&self) -> (Mat<T>, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(pr) = (r..m.rows).find(|&i| m[(i, c)] != T::zero()) else { continue };
            for j in 0..m.cols {
                m.data.swap(pr * m.cols + j, r * m.cols + j);
            }
            let inv = T::one() / m[(r, c)];
            for j in 0..m.cols {
                m[(r, j)] = m[(r, j)] * inv;
            }
            for i in 0..m.rows {
                if i != r && m[(i, c)] != T::zero() {
                    let f = m[(i, c)];
                    for j in 0..m.cols {
                        m[(i, j)] = m[(i, j)] - f * m[(r, j)];
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of `{x : self·x = 0}` as columns.
    pub fn null_space(&self) -> Mat<T> {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = Mat::zeros(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            out[(f, k)] = T::one();
            for (row, &pc) in pivots.iter().enumerate() {
                out[(pc, k)] = -r[(row, f)];
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == T::zero())
    }
}

impl<T> core::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> core::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl Mat<f64> {
    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Rational;

    fn q(n: i64) -> Rational {
        Rational::from_i64(n)
    }

    #[test]
    fn rank_and_null_space_of_a_singular_matrix() {
        let m = Mat { rows: 3, cols: 3, data: vec![q(1), q(2), q(3), q(2), q(4), q(6), q(1), q(0), q(1)] };
        assert_eq!(m.rank(), 2);
        let n = m.null_space();
        assert_eq!(n.cols, 1);
        assert!(m.mul(&n).is_zero());
    }

    #[test]
    fn identity_has_full_rank() {
        let m = Mat::<Rational>::identity(5);
        assert_eq!(m.rank(), 5);
        assert_eq!(m.null_space().cols, 0);
    }
}
