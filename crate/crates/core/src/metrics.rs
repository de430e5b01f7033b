//! Error metrics comparing estimated and true volumes of distribution or
//! impulse responses.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::DenseGrid;
use crate::linalg::RowMatrix;

/// Test-retest thresholds `δ`.
pub const DEFAULT_DELTAS: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMse {
    pub region: u8,
    pub mse: f64,
    pub count: usize,
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

/// Mean of `(v̂ − v)²` over the voxels of each region present in `labels`,
/// in increasing region order.
pub fn region_mse(vt_hat: &[f64], vt_true: &[f64], labels: &[u8]) -> Result<Vec<RegionMse>> {
    check_len(vt_true.len(), vt_hat.len())?;
    check_len(vt_true.len(), labels.len())?;
    let mut sums = [(0.0f64, 0usize); 256];
    for ((h, t), &r) in vt_hat.iter().zip(vt_true).zip(labels) {
        let e = h - t;
        sums[r as usize].0 += e * e;
        sums[r as usize].1 += 1;
    }
    Ok(sums
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(r, &(s, c))| RegionMse { region: r as u8, mse: s / c as f64, count: c })
        .collect())
}

/// Mean squared error over all voxels.
pub fn pooled_mse(vt_hat: &[f64], vt_true: &[f64]) -> Result<f64> {
    check_len(vt_true.len(), vt_hat.len())?;
    if vt_hat.is_empty() {
        return Err(Error::Empty("volume map"));
    }
    Ok(vt_hat.iter().zip(vt_true).map(|(h, t)| (h - t) * (h - t)).sum::<f64>() / vt_hat.len() as f64)
}

/// `(1/n) Σ_i ∫ (M̂_i − M_i)²` with the dense-grid quadrature; rows are
/// curves on `s_0..s_{m-1}`.
pub fn mise(m_hat: &RowMatrix, m_true: &RowMatrix, grid: &DenseGrid) -> Result<f64> {
    check_len(m_true.rows(), m_hat.rows())?;
    check_len(grid.m(), m_hat.cols())?;
    check_len(grid.m(), m_true.cols())?;
    if m_hat.rows() == 0 {
        return Err(Error::Empty("curve set"));
    }
    let w = grid.weights();
    let total: f64 = m_hat
        .iter_rows()
        .zip(m_true.iter_rows())
        .map(|(a, b)| a.iter().zip(b).zip(w).map(|((x, y), w)| w * (x - y) * (x - y)).sum::<f64>())
        .sum();
    Ok(total / m_hat.rows() as f64)
}

/// Squared error averaged over curves at each grid point.
pub fn pointwise_mse(m_hat: &RowMatrix, m_true: &RowMatrix) -> Result<Vec<f64>> {
    check_len(m_true.rows(), m_hat.rows())?;
    check_len(m_true.cols(), m_hat.cols())?;
    if m_hat.rows() == 0 {
        return Err(Error::Empty("curve set"));
    }
    let n = m_hat.rows() as f64;
    let mut out = alloc::vec![0.0; m_hat.cols()];
    for (a, b) in m_hat.iter_rows().zip(m_true.iter_rows()) {
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o += (x - y) * (x - y) / n;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestRetest {
    pub delta: f64,
    /// NaN when no voxel passes the threshold.
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Mean and sample standard deviation of `|v₁ − v₂| / v₂` over voxels with `v₂ > δ`.
pub fn test_retest(vt1: &[f64], vt2: &[f64], delta: f64) -> Result<TestRetest> {
    check_len(vt2.len(), vt1.len())?;
    let rel: Vec<f64> = vt1.iter().zip(vt2).filter(|(_, &b)| b > delta).map(|(a, b)| libm::fabs(a - b) / b).collect();
    let (mean, sd) = mean_sd(&rel);
    Ok(TestRetest { delta, mean, sd, count: rel.len() })
}

/// Sample mean and standard deviation (`n − 1` denominator); NaN entries
/// when there are too few values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

/// Mean and standard error of the mean; the error is 0 for a single value.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], 0.0),
        n => {
            let (m, sd) = mean_sd(values);
            (m, sd / libm::sqrt(n as f64))
        }
    }
}
