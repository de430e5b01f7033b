//! Lawson–Hanson active-set non-negative least squares.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{lstsq_columns, norm2, RowMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// `||b − A x||`.
    pub residual: f64,
    pub iterations: usize,
}

/// `min ||b − A x||` subject to `x ≥ 0`, with the default cap of `3 G` outer iterations.
pub fn nnls(a: &RowMatrix, b: &[f64]) -> Result<NnlsSolution> {
    nnls_with_cap(a, b, 3 * a.cols())
}

pub fn nnls_with_cap(a: &RowMatrix, b: &[f64], max_iter: usize) -> Result<NnlsSolution> {
    let (m, g) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::LengthMismatch { expected: m, found: b.len() });
    }
    if let Some((row, col)) = a.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    if let Some(k) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: k, col: 0 });
    }
    let col_norm1 = (0..g).map(|c| (0..m).map(|r| a.get(r, c).abs()).sum::<f64>()).fold(0.0, f64::max);
    let b_inf = b.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
    let tol = 10.0 * f64::EPSILON * col_norm1 * m.max(g) as f64 * b_inf.max(f64::MIN_POSITIVE);

    let mut x = vec![0.0; g];
    let mut passive = vec![false; g];
    let mut resid = b.to_vec();
    let mut w = vec![0.0; g];
    let mut iterations = 0;

    let gradient = |x: &[f64], resid: &mut Vec<f64>, w: &mut Vec<f64>| {
        resid.copy_from_slice(b);
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                for r in 0..m {
                    resid[r] -= a.get(r, c) * xc;
                }
            }
        }
        for c in 0..g {
            w[c] = (0..m).map(|r| a.get(r, c) * resid[r]).sum();
        }
    };
    gradient(&x, &mut resid, &mut w);

    let mut blocked = vec![false; g];
    loop {
        let candidate = (0..g)
            .filter(|&c| !passive[c] && !blocked[c] && w[c] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        if iterations >= max_iter {
            return Err(Error::NnlsIterationCap { iterations, residual: norm2(&resid) });
        }
        iterations += 1;
        passive[t] = true;

        loop {
            let cols: Vec<usize> = (0..g).filter(|&c| passive[c]).collect();
            let Some(z) = lstsq_columns(a, &cols, b) else {
                // the new column is dependent on the passive set
                passive[t] = false;
                blocked[t] = true;
                break;
            };
            if z.iter().all(|&v| v > 0.0) {
                for (k, &c) in cols.iter().enumerate() {
                    x[c] = z[k];
                }
                break;
            }
            // step back towards the feasible region; the blocking coordinate hits 0
            let mut alpha = f64::INFINITY;
            let mut blocking = None;
            for (k, &c) in cols.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = x[c] - z[k];
                    let ratio = if denom > 0.0 { x[c] / denom } else { 0.0 };
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(c);
                    }
                }
            }
            let scale = x.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
            for (k, &c) in cols.iter().enumerate() {
                x[c] += alpha * (z[k] - x[c]);
            }
            if let Some(c) = blocking {
                x[c] = 0.0;
            }
            for &c in &cols {
                if x[c] <= 16.0 * f64::EPSILON * scale {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
            if passive.iter().all(|p| !p) {
                break;
            }
        }
        if passive[t] {
            blocked.iter_mut().for_each(|v| *v = false);
        } else {
            // the entering column was dropped again; try the others first
            blocked[t] = true;
        }
        gradient(&x, &mut resid, &mut w);
    }
    Ok(NnlsSolution { residual: norm2(&resid), x, iterations })
}
