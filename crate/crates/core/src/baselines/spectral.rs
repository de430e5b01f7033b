//! Spectral analysis: each curve is a non-negative mixture of input-convolved
//! exponentials `(I ⊗ e^{−βt})(t)` over a fixed logarithmic grid of rates.

use alloc::format;
use alloc::vec::Vec;

use super::nnls::nnls_with_cap;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::input::InputFunction;
use crate::linalg::RowMatrix;

pub const DEFAULT_SPECTRAL_SIZE: usize = 100;

/// Logarithmically spaced decay rates in 1/s.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    betas: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Empty("spectral grid"));
        }
        if betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) || betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("spectral rates must be positive and strictly increasing".into()));
        }
        Ok(Self { betas })
    }

    pub fn logspace(lo: f64, hi: f64, size: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || size < 2 {
            return Err(Error::InvalidParameter(format!("invalid spectral range [{lo}, {hi}] with {size} points")));
        }
        let (a, b) = (libm::log(lo), libm::log(hi));
        let mut betas: Vec<f64> = (0..size).map(|k| libm::exp(a + (b - a) * k as f64 / (size - 1) as f64)).collect();
        betas[0] = lo;
        betas[size - 1] = hi;
        Self::new(betas)
    }

    /// `[0.1 / tau, 10 / min frame spacing]`.
    pub fn default_for(time: &TimeGrid, size: usize) -> Result<Self> {
        Self::logspace(0.1 / time.tau(), 10.0 / time.min_spacing(), size)
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Design matrix shared by every voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDesign {
    pub grid: SpectralGrid,
    /// `p x G`, column `g` is `(I ⊗ e^{−β_g t})` at the frame times.
    pub matrix: RowMatrix,
    /// `(1 − e^{−β_g τ}) / β_g`.
    pub vt_weights: Vec<f64>,
    pub max_iter: usize,
}

impl SpectralDesign {
    pub fn new(input: &InputFunction, time: &TimeGrid, grid: SpectralGrid) -> Result<Self> {
        input.validate_for(time.tau())?;
        let cols: Vec<Vec<f64>> = grid.betas().iter().map(|&b| input.convolve_exponential(b, time.mid())).collect();
        let matrix = RowMatrix::from_fn(time.len(), grid.len(), |j, g| cols[g][j]);
        let tau = time.tau();
        let vt_weights = grid.betas().iter().map(|&b| -libm::expm1(-b * tau) / b).collect();
        let max_iter = 3 * grid.len();
        Ok(Self { grid, matrix, vt_weights, max_iter })
    }

    pub fn fit(&self, curve: &[f64]) -> Result<SpectralFit> {
        let sol = nnls_with_cap(&self.matrix, curve, self.max_iter)?;
        let vt = crate::linalg::dot(&sol.x, &self.vt_weights);
        Ok(SpectralFit { alphas: sol.x, vt, residual: sol.residual })
    }

    /// Impulse response `Σ α_g e^{−β_g t}` at `times`.
    pub fn irf(&self, alphas: &[f64], times: &[f64]) -> Vec<f64> {
        times
            .iter()
            .map(|&t| alphas.iter().zip(self.grid.betas()).filter(|(a, _)| **a != 0.0).map(|(a, b)| a * libm::exp(-b * t)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFit {
    pub alphas: Vec<f64>,
    /// `∫_0^τ Σ α_g e^{−β_g t} dt`.
    pub vt: f64,
    pub residual: f64,
}

/// Per-curve spectral fits of decay-corrected frame data (one row per voxel).
pub fn spectral_analysis(curves: &RowMatrix, design: &SpectralDesign) -> Vec<Result<SpectralFit>> {
    curves.iter_rows().map(|c| design.fit(c)).collect()
}
