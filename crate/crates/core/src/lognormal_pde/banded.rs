//! Symmetric positive definite band matrices and their Cholesky factors.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower band of a symmetric matrix: row `i` keeps columns `i - bw ..= i`.
#[derive(Clone, Debug)]
pub struct BandedSpd<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSpd<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            T::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` at `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            for j in lo..i {
                let a = row[self.bw + j - i];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += row[self.bw] * x[i];
        }
        y
    }

    /// In-place banded Cholesky `A = L L^T`.
    pub fn cholesky(mut self) -> Result<BandedCholesky<T>> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let jlo = j.saturating_sub(self.bw).max(lo);
                let mut s = self.data[i * w + self.bw + j - i];
                for k in jlo..j {
                    s -= self.data[i * w + self.bw + k - i] * self.data[j * w + self.bw + k - j];
                }
                if j == i {
                    if !(s > T::zero()) {
                        return Err(Error::InvalidInput(format!(
                            "matrix is not positive definite (pivot {i})"
                        )));
                    }
                    self.data[i * w + self.bw] = s.sqrt();
                } else {
                    self.data[i * w + self.bw + j - i] = s / self.data[j * w + self.bw];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    factor: BandedSpd<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let f = &self.factor;
        let (n, bw) = (f.n, f.bw);
        assert_eq!(b.len(), n);
        let w = bw + 1;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= f.data[i * w + bw + k - i] * x[k];
            }
            x[i] = s / f.data[i * w + bw];
        }
        for i in (0..n).rev() {
            x[i] /= f.data[i * w + bw];
            let lo = i.saturating_sub(bw);
            let xi = x[i];
            for k in lo..i {
                x[k] -= f.data[i * w + bw + k - i] * xi;
            }
        }
        x
    }
}
