//! Penalized cubic B-spline deconvolution with a generalized cross-validation
//! choice of the penalty.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::deconv::ConvolutionOperator;
use crate::error::{Error, Result};
use crate::grid::{apply_plan, interpolation_plan, DenseGrid, TimeGrid};
use crate::linalg::{cholesky_inverse, dot, RowMatrix};

pub const DEFAULT_N_KNOTS: usize = 12;
pub const DEFAULT_PENALTY_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineOptions {
    pub n_knots: usize,
    /// Relative penalties; each is multiplied by `tr(XᵀX) / tr(DᵀD)`.
    pub penalties: Vec<f64>,
}

impl Default for SplineOptions {
    fn default() -> Self {
        // 10^-6 .. 10^3
        let penalties = (0..DEFAULT_PENALTY_POINTS).map(|k| libm::pow(10.0, -6.0 + k as f64)).collect();
        Self { n_knots: DEFAULT_N_KNOTS, penalties }
    }
}

/// Cardinal cubic B-spline supported on `[0, 4]`.
fn cardinal_cubic(x: f64) -> f64 {
    if !(0.0..4.0).contains(&x) {
        0.0
    } else if x < 1.0 {
        x * x * x / 6.0
    } else if x < 2.0 {
        (-3.0 * x * x * x + 12.0 * x * x - 12.0 * x + 4.0) / 6.0
    } else if x < 3.0 {
        (3.0 * x * x * x - 24.0 * x * x + 60.0 * x - 44.0) / 6.0
    } else {
        let y = 4.0 - x;
        y * y * y / 6.0
    }
}

/// Cubic B-spline basis on a uniform knot vector extended past `[0, tau]`,
/// `n_knots` interior knots, `n_knots + 4` functions.
pub fn bspline_basis(times: &[f64], tau: f64, n_knots: usize) -> RowMatrix {
    let nb = n_knots + 4;
    let h = tau / (n_knots + 1) as f64;
    RowMatrix::from_fn(times.len(), nb, |i, j| {
        let x = (times[i] - (j as f64 - 3.0) * h) / h;
        // close the support on the right end so t = tau is covered
        if x == 4.0 { 0.0 } else { cardinal_cubic(x) }
    })
}

fn second_difference_penalty(nb: usize) -> RowMatrix {
    let mut p = RowMatrix::zeros(nb, nb);
    for r in 0..nb - 2 {
        let d = [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)];
        for &(a, x) in &d {
            for &(b, y) in &d {
                p.set(a, b, p.get(a, b) + x * y);
            }
        }
    }
    p
}

/// Precomputed penalized fits for every penalty on the grid; each voxel
/// then costs a few small matrix-vector products.
#[derive(Debug, Clone)]
pub struct SplineDeconvolver {
    /// `m x nb` design `A B` over the convolution rows.
    design: RowMatrix,
    /// `m x nb` basis on `s_0..s_{m-1}`.
    basis: RowMatrix,
    gram: RowMatrix,
    /// Per penalty: `(XᵀX + λ P)⁻¹` and the trace of the hat matrix.
    solvers: Vec<(f64, RowMatrix, f64)>,
    /// `∫ B_j` by dense quadrature.
    integrals: Vec<f64>,
    plan_rows: Vec<crate::grid::InterpWeight>,
    m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub coeffs: Vec<f64>,
    pub penalty: f64,
    pub gcv: f64,
    pub vt: f64,
}

impl SplineDeconvolver {
    pub fn new(op: &ConvolutionOperator, time: &TimeGrid, options: &SplineOptions) -> Result<Self> {
        if options.n_knots < 4 {
            return Err(Error::InvalidParameter(format!("spline needs at least 4 interior knots, got {}", options.n_knots)));
        }
        if options.penalties.is_empty() || options.penalties.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter("spline penalties must be non-negative and non-empty".into()));
        }
        let grid: &DenseGrid = op.grid();
        let m = op.m();
        let nb = options.n_knots + 4;
        let basis = bspline_basis(grid.left(), grid.tau(), options.n_knots);
        let mut design = RowMatrix::zeros(m, nb);
        let mut col = vec![0.0; m];
        for j in 0..nb {
            for k in 0..m {
                col[k] = basis.get(k, j);
            }
            let conv = op.apply(&col)?;
            for r in 0..m {
                design.set(r, j, conv[r]);
            }
        }
        let mut gram = RowMatrix::zeros(nb, nb);
        for u in 0..nb {
            for v in 0..nb {
                gram.set(u, v, (0..m).map(|r| design.get(r, u) * design.get(r, v)).sum());
            }
        }
        let pen = second_difference_penalty(nb);
        let scale = (0..nb).map(|u| gram.get(u, u)).sum::<f64>() / (0..nb).map(|u| pen.get(u, u)).sum::<f64>();
        let mut solvers = Vec::with_capacity(options.penalties.len());
        for &rel in &options.penalties {
            let lambda = rel * scale;
            let sys = RowMatrix::from_fn(nb, nb, |u, v| gram.get(u, v) + lambda * pen.get(u, v));
            let inv = cholesky_inverse(&sys)?;
            // tr(X S Xᵀ) = tr(S XᵀX)
            let trace: f64 = (0..nb).map(|u| (0..nb).map(|v| inv.get(u, v) * gram.get(v, u)).sum::<f64>()).sum();
            solvers.push((lambda, inv, trace));
        }
        let integrals = (0..nb).map(|j| (0..m).map(|k| basis.get(k, j) * grid.weights()[k]).sum()).collect();
        let plan_rows = interpolation_plan(time.mid(), grid.right());
        Ok(Self { design, basis, gram, solvers, integrals, plan_rows, m })
    }

    /// Fit one curve given on the convolution rows `s_1..s_m`.
    pub fn fit_rows(&self, c: &[f64]) -> Result<SplineFit> {
        if c.len() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, found: c.len() });
        }
        let nb = self.gram.rows();
        let mut xtc = vec![0.0; nb];
        for r in 0..self.m {
            crate::linalg::axpy(c[r], self.design.row(r), &mut xtc);
        }
        let ctc = dot(c, c);
        let mut best: Option<SplineFit> = None;
        for (lambda, inv, trace) in &self.solvers {
            let theta = inv.mul_vec(&xtc);
            let g_theta = self.gram.mul_vec(&theta);
            let rss = (ctc - 2.0 * dot(&theta, &xtc) + dot(&theta, &g_theta)).max(0.0);
            let dof = self.m as f64 - trace;
            let gcv = self.m as f64 * rss / (dof * dof);
            if best.as_ref().map_or(true, |b| gcv < b.gcv) {
                let vt = dot(&theta, &self.integrals);
                best = Some(SplineFit { coeffs: theta, penalty: *lambda, gcv, vt });
            }
        }
        best.ok_or(Error::Singular("no spline penalty could be evaluated"))
    }

    /// Fit one decay-corrected curve given at the frame times.
    pub fn fit_frames(&self, curve: &[f64]) -> Result<SplineFit> {
        let mut rows = vec![0.0; self.m];
        apply_plan(&self.plan_rows, curve, &mut rows);
        self.fit_rows(&rows)
    }

    /// Impulse response on `s_0..s_{m-1}`.
    pub fn irf(&self, fit: &SplineFit) -> Vec<f64> {
        self.basis.mul_vec(&fit.coeffs)
    }

    /// Impulse response for one fixed absolute penalty `lambda`.
    pub fn fit_rows_with_penalty(&self, c: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let nb = self.gram.rows();
        let pen = second_difference_penalty(nb);
        let sys = RowMatrix::from_fn(nb, nb, |u, v| self.gram.get(u, v) + lambda * pen.get(u, v));
        let mut xtc = vec![0.0; nb];
        for r in 0..self.m {
            crate::linalg::axpy(c[r], self.design.row(r), &mut xtc);
        }
        let theta = crate::linalg::cholesky_solve(&sys, &xtc)?;
        Ok(self.basis.mul_vec(&theta))
    }
}
