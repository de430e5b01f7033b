//! Curve-by-curve deconvolution: the exact triangular solve applied to each
//! voxel's smoothed curve, without any dimension reduction.

use alloc::vec::Vec;

use crate::deconv::ConvolutionOperator;
use crate::error::{Error, Result};
use crate::grid::{apply_plan, interpolation_plan, TimeGrid};
use crate::linalg::RowMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveByCurve {
    /// `n x m` impulse responses on `s_0..s_{m-1}`.
    pub irfs: RowMatrix,
    pub vt: Vec<f64>,
}

/// Deconvolve every row of `c_hat` (decay-corrected curves at the frame times).
pub fn curve_by_curve_deconvolve(c_hat: &RowMatrix, time: &TimeGrid, op: &ConvolutionOperator) -> Result<CurveByCurve> {
    if c_hat.cols() != time.len() {
        return Err(Error::LengthMismatch { expected: time.len(), found: c_hat.cols() });
    }
    let m = op.m();
    let plan = interpolation_plan(time.mid(), op.grid().right());
    let mut irfs = RowMatrix::zeros(c_hat.rows(), m);
    let mut vt = Vec::with_capacity(c_hat.rows());
    let mut rows = alloc::vec![0.0; m];
    for i in 0..c_hat.rows() {
        apply_plan(&plan, c_hat.row(i), &mut rows);
        let x = op.solve(&rows)?;
        vt.push(crate::linalg::dot(&x, op.grid().weights()));
        irfs.row_mut(i).copy_from_slice(&x);
    }
    Ok(CurveByCurve { irfs, vt })
}

/// Frame weights `g` with `V_T = g · c` for the curve-by-curve estimator,
/// so maps can be computed without solving per voxel.
pub fn cc_vt_weights(time: &TimeGrid, op: &ConvolutionOperator) -> Result<Vec<f64>> {
    let m = op.m();
    // y = A⁻ᵀ w by back substitution on the transpose
    op.solve(&alloc::vec![0.0; m])?;
    let w = op.grid().weights();
    let mut y = alloc::vec![0.0; m];
    for r in (0..m).rev() {
        let mut s = w[r];
        for q in r + 1..m {
            s -= op.get(q, r) * y[q];
        }
        y[r] = s / op.get(r, r);
    }
    // pull back through the interpolation from frames to rows
    let plan = interpolation_plan(time.mid(), op.grid().right());
    let p = time.len();
    let mut g = alloc::vec![0.0; p];
    for (iw, yv) in plan.iter().zip(&y) {
        iw.scatter(*yv, &mut g);
    }
    Ok(g)
}
