//! Multiplicative functional principal component analysis of the presmoothed
//! concentration curves.
//!
//! Each curve is modelled as `C_i(t) = A_i0 μ(t) + Σ_k A_ik φ_k(t)`. The mean
//! is the raw cross-sectional mean, the multiplier `A_i0` a projection onto
//! it, and the eigenfunctions come from the covariance of the residuals.
//! Eigenfunctions are piecewise linear between frame times; they are kept
//! both as frame values and sampled on the dense grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{apply_plan, interpolation_plan, DenseGrid, InterpWeight, TimeGrid};
use crate::linalg::{dot, symmetric_eigen, RowMatrix};
use crate::presmooth::SmoothedScan;
use crate::scan::DynamicScan;

/// Default maximum number of components.
pub const DEFAULT_K_MAX: usize = 10;
/// Default minimum R² gain for adding a component.
pub const DEFAULT_R2_THRESHOLD: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpcaOptions {
    pub k_max: usize,
    pub r2_threshold: f64,
}

impl Default for FpcaOptions {
    fn default() -> Self {
        Self { k_max: DEFAULT_K_MAX, r2_threshold: DEFAULT_R2_THRESHOLD }
    }
}

/// Eigenfunctions of the residual covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    /// Leading eigenvalues, non-increasing and non-negative.
    pub eigvals: Vec<f64>,
    /// Every eigenvalue of the weighted problem (length `p`).
    pub spectrum: Vec<f64>,
    /// `K x p` knot values of the piecewise-linear eigenfunctions.
    pub frames: RowMatrix,
    /// `K x m` eigenfunctions on `s_0..s_{m-1}`, orthonormal under the dense quadrature.
    pub dense: RowMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpcaModel {
    pub mu_frames: Vec<f64>,
    /// Mean on `s_0..s_{m-1}`.
    pub mu_dense: Vec<f64>,
    pub a0: Vec<f64>,
    pub gamma: RowMatrix,
    pub basis: Eigenbasis,
    /// `n x K` scores.
    pub scores: RowMatrix,
    /// Selected number of components per voxel.
    pub n_components: Vec<usize>,
    /// `n x (K+1)` R² for `L = 0..K`; NaN rows for flat voxels.
    pub r2: RowMatrix,
    /// Voxels whose raw curve has zero variance.
    pub flat: Vec<bool>,
    pub dense: DenseGrid,
    pub time: TimeGrid,
}

impl FpcaModel {
    pub fn k(&self) -> usize {
        self.basis.eigvals.len()
    }

    pub fn n_voxels(&self) -> usize {
        self.a0.len()
    }

    /// Fitted concentration of voxel `i` at the frame times using `l` components.
    pub fn fitted_frames(&self, i: usize, l: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.mu_frames.iter().map(|m| self.a0[i] * m).collect();
        for k in 0..l.min(self.k()) {
            crate::linalg::axpy(self.scores.get(i, k), self.basis.frames.row(k), &mut out);
        }
        out
    }
}

/// Cross-sectional mean of the raw data over masked-in voxels, decay corrected.
pub fn estimate_mean(scan: &DynamicScan) -> Result<Vec<f64>> {
    let active = scan.active();
    if active.is_empty() {
        return Err(Error::EmptyMask);
    }
    let p = scan.n_frames();
    let mut sum = vec![0.0; p];
    for &i in &active {
        crate::linalg::axpy(1.0, scan.values().row(i), &mut sum);
    }
    let n = active.len() as f64;
    Ok(sum.iter().zip(scan.decay_factors()).map(|(s, f)| s / n * f).collect())
}

/// `∫ C μ / ∫ μ²` under the dense quadrature.
pub fn estimate_multiplier(c_dense: &[f64], mu_dense: &[f64], grid: &DenseGrid) -> Result<f64> {
    let m = grid.m();
    for v in [c_dense.len(), mu_dense.len()] {
        if v != m {
            return Err(Error::LengthMismatch { expected: m, found: v });
        }
    }
    let w = grid.weights();
    let norm = crate::linalg::weighted_dot(w, mu_dense, mu_dense);
    if !(norm > 0.0) {
        return Err(Error::ZeroNormMean);
    }
    Ok(crate::linalg::weighted_dot(w, c_dense, mu_dense) / norm)
}

/// Covariance of `Ĉ_i − A_i0 μ` at the frame times over masked-in voxels.
pub fn estimate_covariance(c_hat: &RowMatrix, mask: &[bool], mu_frames: &[f64], a0: &[f64]) -> Result<RowMatrix> {
    let n = c_hat.rows();
    let p = c_hat.cols();
    if mu_frames.len() != p {
        return Err(Error::LengthMismatch { expected: p, found: mu_frames.len() });
    }
    for len in [mask.len(), a0.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, found: len });
        }
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mut gamma = RowMatrix::zeros(p, p);
    let mut r = vec![0.0; p];
    for i in (0..n).filter(|&i| mask[i]) {
        for j in 0..p {
            r[j] = c_hat.get(i, j) - a0[i] * mu_frames[j];
        }
        for j in 0..p {
            let rj = r[j];
            let row = gamma.row_mut(j);
            for k in j..p {
                row[k] += rj * r[k];
            }
        }
    }
    let inv = 1.0 / count as f64;
    for j in 0..p {
        for k in j..p {
            let v = gamma.get(j, k) * inv;
            gamma.set(j, k, v);
            gamma.set(k, j, v);
        }
    }
    Ok(gamma)
}

/// Quadrature-weighted eigendecomposition of `gamma` keeping `k_max` components.
pub fn eigendecompose(gamma: &RowMatrix, time: &TimeGrid, dense: &DenseGrid, k_max: usize) -> Result<Eigenbasis> {
    let p = time.len();
    if gamma.rows() != p || gamma.cols() != p {
        return Err(Error::LengthMismatch { expected: p, found: gamma.rows() });
    }
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    if let Some((row, col)) = gamma.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let scale = gamma.max_abs();
    let mut asym: f64 = 0.0;
    for j in 0..p {
        for k in j + 1..p {
            asym = asym.max((gamma.get(j, k) - gamma.get(k, j)).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }

    let w = time.quadrature_weights();
    let sw: Vec<f64> = w.iter().map(|x| libm::sqrt(*x)).collect();
    let weighted = RowMatrix::from_fn(p, p, |j, k| sw[j] * 0.5 * (gamma.get(j, k) + gamma.get(k, j)) * sw[k]);
    let (mut spectrum, vecs) = symmetric_eigen(&weighted);
    for v in spectrum.iter_mut() {
        // Γ is positive semidefinite; negatives are round-off
        *v = v.max(0.0);
    }
    let k = k_max.min(p);

    let plan = interpolation_plan(time.mid(), dense.left());
    let m = dense.m();
    let mut frames = RowMatrix::zeros(k, p);
    let mut dvals = RowMatrix::zeros(k, m);
    for r in 0..k {
        for j in 0..p {
            frames.set(r, j, vecs.get(r, j) / sw[j]);
        }
        apply_plan(&plan, frames.row(r), dvals.row_mut(r));
    }

    // modified Gram-Schmidt under the dense quadrature, applied to the knot
    // values too so both representations describe the same functions
    let dw = dense.weights();
    for r in 0..k {
        for q in 0..r {
            let c = crate::linalg::weighted_dot(dw, dvals.row(r), dvals.row(q));
            let (qd, qf) = (dvals.row(q).to_vec(), frames.row(q).to_vec());
            crate::linalg::axpy(-c, &qd, dvals.row_mut(r));
            crate::linalg::axpy(-c, &qf, frames.row_mut(r));
        }
        let nrm = libm::sqrt(crate::linalg::weighted_dot(dw, dvals.row(r), dvals.row(r)));
        if !(nrm > 1e-12) {
            return Err(Error::Singular("eigenfunctions are not resolved by the dense grid"));
        }
        let sign = sign_of(dvals.row(r), dw, nrm);
        let f = sign / nrm;
        dvals.row_mut(r).iter_mut().for_each(|v| *v *= f);
        frames.row_mut(r).iter_mut().for_each(|v| *v *= f);
    }
    Ok(Eigenbasis { eigvals: spectrum[..k].to_vec(), spectrum, frames, dense: dvals })
}

/// `+1` when the function has a non-negative integral (ties: non-negative at
/// the first clearly non-zero node), else `-1`.
fn sign_of(values: &[f64], w: &[f64], nrm: f64) -> f64 {
    let integral = dot(values, w);
    let tiny = 1e-12 * nrm * w.iter().sum::<f64>();
    if integral.abs() > tiny {
        return if integral > 0.0 { 1.0 } else { -1.0 };
    }
    match values.iter().find(|v| v.abs() > 1e-12 * nrm) {
        Some(v) if *v < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// `∫ (C − a0 μ) φ_k` for every eigenfunction, by dense quadrature.
pub fn compute_scores(c_dense: &[f64], a0: f64, mu_dense: &[f64], eigfuncs: &RowMatrix, dense: &DenseGrid) -> Result<Vec<f64>> {
    let m = dense.m();
    for len in [c_dense.len(), mu_dense.len(), eigfuncs.cols()] {
        if len != m {
            return Err(Error::LengthMismatch { expected: m, found: len });
        }
    }
    let resid: Vec<f64> = c_dense.iter().zip(mu_dense).map(|(c, u)| c - a0 * u).collect();
    Ok(eigfuncs.iter_rows().map(|phi| crate::linalg::weighted_dot(dense.weights(), &resid, phi)).collect())
}

/// Population variance.
fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `R²(L) = 1 − var(Y − Ĉ(·, L) e^{−λt}) / var(Y)` for `L = 0..K`, against the raw
/// decayed data. `None` when `Y` has zero variance.
///
/// `decay_inv[j] = e^{−λ t_j}`; `fitted(l)` gives the decay-corrected fit with `l` components.
pub fn r2_sequence(y: &[f64], decay_inv: &[f64], k: usize, mut fitted: impl FnMut(usize) -> Vec<f64>) -> Option<Vec<f64>> {
    let vy = variance(y);
    if !(vy > 0.0) {
        return None;
    }
    let mut resid = vec![0.0; y.len()];
    Some(
        (0..=k)
            .map(|l| {
                let f = fitted(l);
                for j in 0..y.len() {
                    resid[j] = y[j] - f[j] * decay_inv[j];
                }
                1.0 - variance(&resid) / vy
            })
            .collect(),
    )
}

/// Smallest `k` with `R²(k+1) − R²(k) < threshold`, else the last index.
pub fn select_components(r2: &[f64], threshold: f64) -> usize {
    let k_max = r2.len().saturating_sub(1);
    (0..k_max).find(|&k| r2[k + 1] - r2[k] < threshold).unwrap_or(k_max)
}

/// Row operator `v -> Σ_k w_k v(s_k)` for frame-valued piecewise-linear curves:
/// returns `g` with `∫ interp(v) f = g · v` for the given dense function `f`.
fn pullback(plan: &[InterpWeight], weights: &[f64], f: &[f64], p: usize) -> Vec<f64> {
    let mut g = vec![0.0; p];
    for ((iw, w), fv) in plan.iter().zip(weights).zip(f) {
        iw.scatter(w * fv, &mut g);
    }
    g
}

/// Full estimation step: mean, multipliers, covariance, eigenfunctions,
/// scores and per-voxel component counts.
pub fn fit_fpca(scan: &DynamicScan, smoothed: &SmoothedScan, dense: &DenseGrid, options: &FpcaOptions) -> Result<FpcaModel> {
    let n = scan.n_voxels();
    let p = scan.n_frames();
    if smoothed.c_hat.rows() != n || smoothed.c_hat.cols() != p {
        return Err(Error::LengthMismatch { expected: n * p, found: smoothed.c_hat.rows() * smoothed.c_hat.cols() });
    }
    if !(options.r2_threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!("R² threshold {} is not finite", options.r2_threshold)));
    }
    let time = scan.grid();
    let mu_frames = estimate_mean(scan)?;
    let plan = interpolation_plan(time.mid(), dense.left());
    let mut mu_dense = vec![0.0; dense.m()];
    apply_plan(&plan, &mu_frames, &mut mu_dense);
    let w = dense.weights();
    let mu_norm = crate::linalg::weighted_dot(w, &mu_dense, &mu_dense);
    if !(mu_norm > 0.0) {
        return Err(Error::ZeroNormMean);
    }

    let g_mu = pullback(&plan, w, &mu_dense, p);
    let c_hat = &smoothed.c_hat;
    let a0: Vec<f64> = (0..n).map(|i| dot(&g_mu, c_hat.row(i)) / mu_norm).collect();

    let gamma = estimate_covariance(c_hat, scan.mask(), &mu_frames, &a0)?;
    let basis = eigendecompose(&gamma, time, dense, options.k_max)?;
    let k = basis.eigvals.len();
    let g_phi: Vec<Vec<f64>> = (0..k).map(|r| pullback(&plan, w, basis.dense.row(r), p)).collect();

    let decay_inv: Vec<f64> = scan.decay_factors().iter().map(|f| 1.0 / f).collect();
    let mut scores = RowMatrix::zeros(n, k);
    let mut r2 = RowMatrix::zeros(n, k + 1);
    let mut n_components = vec![0; n];
    let mut flat = vec![false; n];
    let mut resid = vec![0.0; p];
    for i in 0..n {
        let c = c_hat.row(i);
        for j in 0..p {
            resid[j] = c[j] - a0[i] * mu_frames[j];
        }
        for r in 0..k {
            scores.set(i, r, dot(&g_phi[r], &resid));
        }
        let fitted = |l: usize| {
            let mut f: Vec<f64> = mu_frames.iter().map(|m| a0[i] * m).collect();
            for r in 0..l {
                crate::linalg::axpy(scores.get(i, r), basis.frames.row(r), &mut f);
            }
            f
        };
        match r2_sequence(scan.values().row(i), &decay_inv, k, fitted) {
            Some(seq) => {
                n_components[i] = select_components(&seq, options.r2_threshold);
                r2.row_mut(i).copy_from_slice(&seq);
            }
            None => {
                flat[i] = true;
                r2.row_mut(i).iter_mut().for_each(|v| *v = f64::NAN);
            }
        }
    }

    Ok(FpcaModel {
        mu_frames,
        mu_dense,
        a0,
        gamma,
        basis,
        scores,
        n_components,
        r2,
        flat,
        dense: dense.clone(),
        time: time.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::Layout;

    #[test]
    fn selection_rule() {
        assert_eq!(select_components(&[0.90, 0.91], 0.025), 0);
        assert_eq!(select_components(&[0.5, 0.8, 0.9, 0.91], 0.025), 2);
        assert_eq!(select_components(&[0.1, 0.5, 0.9], 0.025), 2);
        assert_eq!(select_components(&[0.7], 0.025), 0);
    }

    #[test]
    fn mean_of_two_voxels() {
        let grid = TimeGrid::equally_spaced(3, 300.0).unwrap();
        let values = RowMatrix::from_rows(&[vec![0.0; 3], vec![4.0; 3]]).unwrap();
        let scan = DynamicScan::new(values, Layout::Curves, None, grid.clone(), 1e-3).unwrap();
        let mu = estimate_mean(&scan).unwrap();
        for (j, t) in grid.mid().iter().enumerate() {
            assert!((mu[j] - 2.0 * libm::exp(1e-3 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplier_examples() {
        let d = DenseGrid::uniform(50, 100.0).unwrap();
        let mu: Vec<f64> = d.left().iter().map(|t| 1.0 + t / 50.0).collect();
        assert!((estimate_multiplier(&mu, &mu, &d).unwrap() - 1.0).abs() < 1e-14);
        let two: Vec<f64> = mu.iter().map(|v| 2.0 * v).collect();
        assert!((estimate_multiplier(&two, &mu, &d).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(estimate_multiplier(&mu, &vec![0.0; 50], &d), Err(Error::ZeroNormMean));
    }

    #[test]
    fn rank_one_covariance() {
        let time = TimeGrid::default_schedule();
        let dense = DenseGrid::uniform(250, time.tau()).unwrap();
        let r: Vec<f64> = time.mid().iter().map(|t| libm::sin(t / 900.0) + 0.2).collect();
        let gamma = RowMatrix::from_fn(32, 32, |j, k| r[j] * r[k]);
        let b = eigendecompose(&gamma, &time, &dense, 3).unwrap();
        assert!(b.eigvals[0] > 0.0);
        assert!(b.eigvals[1].abs() < 1e-10 * b.eigvals[0]);
        let nrm: f64 = crate::linalg::weighted_dot(dense.weights(), b.dense.row(0), b.dense.row(0));
        assert!((nrm - 1.0).abs() < 1e-12);
        // proportional to r at the knots
        let ratio = b.frames.get(0, 5) / r[5];
        for j in 0..32 {
            assert!((b.frames.get(0, j) - ratio * r[j]).abs() < 1e-9 * ratio.abs());
        }
        assert!(ratio > 0.0);
    }

    #[test]
    fn zero_covariance() {
        let time = TimeGrid::equally_spaced(8, 80.0).unwrap();
        let dense = DenseGrid::uniform(40, 80.0).unwrap();
        let b = eigendecompose(&RowMatrix::zeros(8, 8), &time, &dense, 3).unwrap();
        assert!(b.spectrum.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn asymmetric_rejected() {
        let time = TimeGrid::equally_spaced(3, 30.0).unwrap();
        let dense = DenseGrid::uniform(30, 30.0).unwrap();
        let mut g = RowMatrix::zeros(3, 3);
        g.set(0, 1, 1.0);
        assert!(matches!(eigendecompose(&g, &time, &dense, 2), Err(Error::NotSymmetric { .. })));
    }
}
