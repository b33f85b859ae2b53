//! Small dense linear algebra: square matrices, Cholesky factorization and
//! log-determinants. Everything here is cubic; the algorithms built on top
//! only call it on desk-scale blocks.

use crate::error::{Error, Result};
use std::ops::{Index, IndexMut};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::param(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)].abs()).fold(0.0, f64::max)
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn principal(&self, idx: &[usize]) -> DenseMatrix {
        let k = idx.len();
        let mut out = DenseMatrix::zeros(k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * k + b] = self[(i, j)];
            }
        }
        out
    }

    /// Drops the last row and column.
    pub fn without_last(&self) -> DenseMatrix {
        let idx: Vec<usize> = (0..self.n.saturating_sub(1)).collect();
        self.principal(&idx)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails with [`Error::Singular`] when a pivot drops to
    /// `rel_tol * max|diag|` or below.
    pub fn factor(a: &DenseMatrix, rel_tol: f64) -> Result<Self> {
        let n = a.dim();
        let floor = rel_tol * a.max_abs_diagonal();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return Err(Error::Singular);
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Log-determinant by diagonally pivoted Cholesky.
///
/// Returns `None` when the largest remaining pivot falls to
/// `rel_tol * max|diag|` or below, i.e. the matrix is (numerically) singular.
pub fn pivoted_log_det(a: &DenseMatrix, rel_tol: f64) -> Option<f64> {
    let n = a.dim();
    if n == 0 {
        return Some(0.0);
    }
    let floor = rel_tol * a.max_abs_diagonal();
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut log_det = 0.0;
    for j in 0..n {
        // pick the largest remaining diagonal entry
        let (p, &best) = perm[j..]
            .iter()
            .enumerate()
            .max_by(|x, y| w[(*x.1, *x.1)].total_cmp(&w[(*y.1, *y.1)]))
            .unwrap();
        let pivot = w[(best, best)];
        if !(pivot > floor) {
            return None;
        }
        perm.swap(j, j + p);
        log_det += pivot.ln();
        let rest: Vec<usize> = perm[j + 1..].to_vec();
        for &r in &rest {
            let f = w[(r, best)] / pivot;
            if f == 0.0 {
                continue;
            }
            for &c in &rest {
                let delta = f * w[(best, c)];
                w[(r, c)] -= delta;
            }
        }
    }
    Some(log_det)
}
