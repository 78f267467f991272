//! Symmetric positive-definite banded solver used by the spline fits.

use crate::error::{KanError, Result};

/// Lower band of a symmetric matrix: `get(i, j)` for `i - bw <= j <= i`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Accumulate into the symmetric entry (i, j); either triangle may be addressed.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Banded Cholesky factorization `A = L L^T`.
    pub fn factor(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = self.data[self.idx(i, j)];
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    sum -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                let ij = self.idx(i, j);
                if i == j {
                    if !(sum > 0.0) {
                        return Err(KanError::NotPositiveDefinite);
                    }
                    self.data[ij] = sum.sqrt();
                } else {
                    self.data[ij] = sum / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }

    /// Solve `A x = rhs`, consuming the matrix.
    pub fn solve(self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(rhs))
    }
}

/// Cholesky factor of a [`BandedSpd`] matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let (n, bw) = (l.n, l.bw);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                y[i] -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] /= l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..(i + bw + 1).min(n) {
                y[i] -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] /= l.data[l.idx(i, i)];
        }
        y
    }
}

/// Dense symmetric positive-definite solve, for small systems.
pub fn solve_spd(n: usize, a: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let mut m = BandedSpd::zeros(n, n.saturating_sub(1));
    for i in 0..n {
        for j in 0..=i {
            m.add(i, j, a[i * n + j]);
        }
    }
    m.solve(rhs)
}
