//! Discretized convolution with the input function and basis-level deconvolution.
//!
//! On a dense grid `s_0 < ... < s_m` the convolution `(I ⊗ M)(s_j)` is
//! approximated by `Σ_{k<j} I(s_j − s_k) w_k M(s_k)`, a square lower-triangular
//! system mapping `M(s_0..s_{m-1})` to the curve at `s_1..s_m`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fpca::FpcaModel;
use crate::grid::{apply_plan, interpolation_plan, DenseGrid};
use crate::input::InputFunction;
use crate::linalg::RowMatrix;

/// Diagonal entries below this fraction of the largest entry make the plain solve unsafe.
pub const ILL_CONDITIONED_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionOperator {
    /// Packed lower triangle, row `r` holds columns `0..=r`.
    packed: Vec<f64>,
    m: usize,
    grid: DenseGrid,
}

#[inline]
fn row_start(r: usize) -> usize {
    r * (r + 1) / 2
}

impl ConvolutionOperator {
    pub fn build(input: &InputFunction, grid: &DenseGrid) -> Result<Self> {
        input.validate_for(grid.tau())?;
        let m = grid.m();
        let s = grid.nodes();
        let w = grid.weights();
        let mut packed = Vec::with_capacity(row_start(m));
        for r in 0..m {
            let sj = s[r + 1];
            for k in 0..=r {
                packed.push(input.eval(sj - s[k]) * w[k]);
            }
        }
        Ok(Self { packed, m, grid: grid.clone() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &DenseGrid {
        &self.grid
    }

    /// Row `r` (curve at `s_{r+1}`), columns `0..=r`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.packed[row_start(r)..row_start(r + 1)]
    }

    /// Entry in row `r` (node `s_{r+1}`) and column `k` (node `s_k`).
    pub fn get(&self, r: usize, k: usize) -> f64 {
        if k > r {
            0.0
        } else {
            self.packed[row_start(r) + k]
        }
    }

    pub fn to_dense(&self) -> RowMatrix {
        RowMatrix::from_fn(self.m, self.m, |r, k| self.get(r, k))
    }

    pub fn max_entry(&self) -> f64 {
        self.packed.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.m).map(|r| self.get(r, r)).fold(f64::INFINITY, f64::min)
    }

    /// `A x`: values on `s_0..s_{m-1}` to values on `s_1..s_m`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, found: x.len() });
        }
        Ok((0..self.m).map(|r| crate::linalg::dot(self.row(r), &x[..=r])).collect())
    }

    /// Forward substitution for `A x = c`.
    pub fn solve(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, found: c.len() });
        }
        self.check_conditioning()?;
        let mut x = vec![0.0; self.m];
        for r in 0..self.m {
            let row = self.row(r);
            let s = crate::linalg::dot(&row[..r], &x[..r]);
            x[r] = (c[r] - s) / row[r];
        }
        Ok(x)
    }

    /// `min ||c − A x||² + eps² ||x||²`.
    pub fn solve_ridge(&self, c: &[f64], eps: f64) -> Result<Vec<f64>> {
        if eps == 0.0 {
            return self.solve(c);
        }
        self.ridge_solver(eps)?.solve(c)
    }

    /// Factorized normal equations for repeated ridge solves.
    pub fn ridge_solver(&self, eps: f64) -> Result<RidgeSolver> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("ridge parameter must be >= 0, got {eps}")));
        }
        let a = self.to_dense();
        let mut normal = RowMatrix::zeros(self.m, self.m);
        for u in 0..self.m {
            for v in 0..=u {
                // (AᵀA)_{uv} = Σ_r A_{ru} A_{rv}, rows r ≥ max(u, v)
                let s: f64 = (u..self.m).map(|r| a.get(r, u) * a.get(r, v)).sum();
                normal.set(u, v, s);
                normal.set(v, u, s);
            }
            normal.set(u, u, normal.get(u, u) + eps * eps);
        }
        let inverse = crate::linalg::cholesky_inverse(&normal)?;
        Ok(RidgeSolver { op: self.clone(), inverse })
    }

    fn check_conditioning(&self) -> Result<()> {
        let max_entry = self.max_entry();
        let min_diagonal = self.min_diagonal();
        if !(min_diagonal > ILL_CONDITIONED_RATIO * max_entry) {
            return Err(Error::IllConditioned { min_diagonal, max_entry });
        }
        Ok(())
    }
}

/// Ridge-regularized deconvolution with a precomputed `(AᵀA + eps² I)⁻¹`.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    op: ConvolutionOperator,
    inverse: RowMatrix,
}

impl RidgeSolver {
    pub fn solve(&self, c: &[f64]) -> Result<Vec<f64>> {
        let m = self.op.m;
        if c.len() != m {
            return Err(Error::LengthMismatch { expected: m, found: c.len() });
        }
        let mut atc = vec![0.0; m];
        for r in 0..m {
            crate::linalg::axpy(c[r], self.op.row(r), &mut atc[..=r]);
        }
        Ok(self.inverse.mul_vec(&atc))
    }
}

/// Deconvolved mean and eigenfunctions on `s_0..s_{m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconvolvedBasis {
    pub mu_d: Vec<f64>,
    /// `K x m`.
    pub phi_d: RowMatrix,
    /// `∫ μᵈ` followed by `∫ φᵈ_k`.
    pub integrals: Vec<f64>,
    /// `||A x − c|| / ||c||` per curve (0 for a zero curve).
    pub residuals: Vec<f64>,
}

impl DeconvolvedBasis {
    pub fn k(&self) -> usize {
        self.phi_d.rows()
    }
}

/// Deconvolve each row of `curves` (row 0 the mean, then the eigenfunctions),
/// all sampled on `s_1..s_m`. `ridge = 0` gives the exact triangular solve.
pub fn deconvolve_basis(op: &ConvolutionOperator, curves: &RowMatrix, ridge: f64) -> Result<DeconvolvedBasis> {
    let m = op.m();
    if curves.cols() != m {
        return Err(Error::LengthMismatch { expected: m, found: curves.cols() });
    }
    if curves.rows() == 0 {
        return Err(Error::Empty("basis curves"));
    }
    if let Some((row, col)) = curves.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let ridge_solver = if ridge > 0.0 { Some(op.ridge_solver(ridge)?) } else { None };
    let mut solved = RowMatrix::zeros(curves.rows(), m);
    let mut residuals = Vec::with_capacity(curves.rows());
    let mut integrals = Vec::with_capacity(curves.rows());
    for (r, c) in curves.iter_rows().enumerate() {
        let x = match &ridge_solver {
            Some(s) => s.solve(c)?,
            None => op.solve(c)?,
        };
        let back = op.apply(&x)?;
        let cn = crate::linalg::norm2(c);
        let diff: Vec<f64> = back.iter().zip(c).map(|(a, b)| a - b).collect();
        residuals.push(if cn > 0.0 { crate::linalg::norm2(&diff) / cn } else { 0.0 });
        integrals.push(crate::linalg::dot(&x, op.grid().weights()));
        solved.row_mut(r).copy_from_slice(&x);
    }
    let mu_d = solved.row(0).to_vec();
    let phi_d = RowMatrix::from_fn(curves.rows() - 1, m, |r, k| solved.get(r + 1, k));
    Ok(DeconvolvedBasis { mu_d, phi_d, integrals, residuals })
}

/// Mean and eigenfunctions of a fitted model sampled on `s_1..s_m`, ready for
/// [`deconvolve_basis`].
pub fn model_curves_on_rows(model: &FpcaModel) -> RowMatrix {
    let plan = interpolation_plan(model.time.mid(), model.dense.right());
    let m = model.dense.m();
    let k = model.k();
    let mut out = RowMatrix::zeros(k + 1, m);
    apply_plan(&plan, &model.mu_frames, out.row_mut(0));
    for r in 0..k {
        apply_plan(&plan, model.basis.frames.row(r), out.row_mut(r + 1));
    }
    out
}

/// `a0 μᵈ + Σ_{k<L} score_k φᵈ_k`.
pub fn reconstruct_irf(basis: &DeconvolvedBasis, a0: f64, scores: &[f64], l: usize) -> Result<Vec<f64>> {
    if l > basis.k() || l > scores.len() {
        return Err(Error::InvalidParameter(alloc::format!("{l} components requested, basis has {}", basis.k())));
    }
    let mut out: Vec<f64> = basis.mu_d.iter().map(|v| a0 * v).collect();
    for k in 0..l {
        crate::linalg::axpy(scores[k], basis.phi_d.row(k), &mut out);
    }
    Ok(out)
}

/// `V_T(i) = a0_i ∫μᵈ + Σ_{k<L_i} A_ik ∫φᵈ_k` for every voxel.
pub fn compute_vt_map(model: &FpcaModel, basis: &DeconvolvedBasis) -> Result<Vec<f64>> {
    if basis.k() != model.k() || basis.mu_d.len() != model.dense.m() {
        return Err(Error::LengthMismatch { expected: model.k(), found: basis.k() });
    }
    Ok((0..model.n_voxels())
        .map(|i| {
            let l = model.n_components[i];
            let mut v = model.a0[i] * basis.integrals[0];
            for k in 0..l {
                v += model.scores.get(i, k) * basis.integrals[k + 1];
            }
            v
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_interval_operator() {
        let input = InputFunction::new(vec![0.0, 10.0], vec![0.0, 5.0]).unwrap();
        let grid = DenseGrid::uniform(1, 4.0).unwrap();
        let op = ConvolutionOperator::build(&input, &grid).unwrap();
        // I(s1) s1 / 2 = 2 * 4 / 2
        assert!((op.get(0, 0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_telescopes() {
        let input = InputFunction::new(vec![0.0, 100.0], vec![1.0, 1.0]).unwrap();
        let grid = DenseGrid::uniform(20, 50.0).unwrap();
        let op = ConvolutionOperator::build(&input, &grid).unwrap();
        let y = op.apply(&vec![1.0; 20]).unwrap();
        let s = grid.nodes();
        for j in 1..=20 {
            assert!((y[j - 1] - (s[j] + s[j - 1]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_round_trip() {
        let input = InputFunction::default_gamma(1000.0);
        let grid = DenseGrid::uniform(100, 1000.0).unwrap();
        let op = ConvolutionOperator::build(&input, &grid).unwrap();
        let x: Vec<f64> = grid.left().iter().map(|t| libm::cos(t / 70.0) + 0.3).collect();
        let back = op.solve(&op.apply(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(op.solve(&vec![0.0; 100]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ridge_satisfies_normal_equations() {
        let input = InputFunction::default_gamma(600.0);
        let grid = DenseGrid::uniform(30, 600.0).unwrap();
        let op = ConvolutionOperator::build(&input, &grid).unwrap();
        let c: Vec<f64> = grid.right().iter().map(|t| libm::sin(t / 100.0)).collect();
        let eps = 0.5;
        let x = op.solve_ridge(&c, eps).unwrap();
        let a = op.to_dense();
        let r: Vec<f64> = op.apply(&x).unwrap().iter().zip(&c).map(|(u, v)| u - v).collect();
        for u in 0..30 {
            let g: f64 = (0..30).map(|k| a.get(k, u) * r[k]).sum::<f64>() + eps * eps * x[u];
            assert!(g.abs() < 1e-9, "{g}");
        }
    }

    #[test]
    fn zero_input_near_origin_is_ill_conditioned() {
        // input vanishes over the first interval, so every diagonal entry is 0
        let input = InputFunction::new(vec![0.0, 20.0, 30.0], vec![0.0, 0.0, 1.0]).unwrap();
        let grid = DenseGrid::uniform(10, 100.0).unwrap();
        let op = ConvolutionOperator::build(&input, &grid).unwrap();
        assert!(matches!(op.solve(&vec![1.0; 10]), Err(Error::IllConditioned { .. })));
    }
}
