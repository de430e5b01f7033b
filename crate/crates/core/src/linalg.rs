//! Small dense linear-algebra helpers.
//!
//! Curves are stored row-major (one voxel or one basis function per row), which
//! is the access pattern of every per-voxel loop in the crate. Heavier
//! factorizations are delegated to `nalgebra`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.iter_rows().map(|r| dot(r, x)).collect()
    }

    /// Index of the first non-finite entry.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.cols, k % self.cols))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Least squares `min ||b - A[:, cols] z||` by Householder QR on the selected
/// columns. Returns `None` when the selected columns are rank deficient.
pub fn lstsq_columns(a: &RowMatrix, cols: &[usize], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.rows();
    let k = cols.len();
    if k == 0 {
        return Some(Vec::new());
    }
    if k > m {
        return None;
    }
    // column-major working copy
    let mut q: Vec<Vec<f64>> = cols.iter().map(|&c| (0..m).map(|i| a.get(i, c)).collect()).collect();
    let mut rhs = b.to_vec();
    let scale = q.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let mut diag = vec![0.0; k];
    for j in 0..k {
        let alpha = {
            let col = &q[j][j..];
            let nrm = norm2(col);
            if q[j][j] > 0.0 {
                -nrm
            } else {
                nrm
            }
        };
        if alpha.abs() <= 1e-13 * scale {
            return None;
        }
        // v = x - alpha e1, stored in q[j][j..]
        q[j][j] -= alpha;
        let vnorm2 = dot(&q[j][j..], &q[j][j..]);
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let v: Vec<f64> = q[j][j..].to_vec();
        for c in q.iter_mut().skip(j + 1) {
            let f = 2.0 * dot(&v, &c[j..]) / vnorm2;
            axpy(-f, &v, &mut c[j..]);
        }
        let f = 2.0 * dot(&v, &rhs[j..]) / vnorm2;
        axpy(-f, &v, &mut rhs[j..]);
    }
    // back substitution with R (upper triangle: diag on the diagonal, q[c][r] above)
    let mut z = vec![0.0; k];
    for r in (0..k).rev() {
        let mut s = rhs[r];
        for c in r + 1..k {
            s -= q[c][r] * z[c];
        }
        z[r] = s / diag[r];
    }
    Some(z)
}

/// Solve the symmetric positive definite system `a x = b`.
pub fn cholesky_solve(a: &RowMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a.to_nalgebra().cholesky().ok_or(Error::Singular("matrix is not positive definite"))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).iter().copied().collect())
}

/// Inverse of a symmetric positive definite matrix.
pub fn cholesky_inverse(a: &RowMatrix) -> Result<RowMatrix> {
    let chol = a.to_nalgebra().cholesky().ok_or(Error::Singular("matrix is not positive definite"))?;
    Ok(RowMatrix::from_nalgebra(&chol.inverse()))
}

/// Eigenpairs of a symmetric matrix sorted by non-increasing eigenvalue.
/// Eigenvectors are returned as rows.
pub fn symmetric_eigen(a: &RowMatrix) -> (Vec<f64>, RowMatrix) {
    let eig = a.to_nalgebra().symmetric_eigen();
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = RowMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(c, order[r])]);
    (values, vectors)
}
