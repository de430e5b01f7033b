//! Dynamic scans: a voxel-by-frame activity matrix plus spatial layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::RowMatrix;

/// Spatial arrangement of the voxels.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Independent curves with no spatial neighbourhood (1-D functional data).
    Curves,
    /// Voxels on a regular lattice. `dims` unused axes are 1.
    Lattice {
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        /// Lattice position of each voxel.
        positions: Vec<[usize; 3]>,
    },
}

impl Layout {
    /// Full 2-D image in row-major order (`x` fastest).
    pub fn image_2d(nx: usize, ny: usize, spacing_mm: [f64; 2]) -> Self {
        Self::volume([nx, ny, 1], [spacing_mm[0], spacing_mm[1], 1.0])
    }

    /// Full volume in `x`-fastest order.
    pub fn volume(dims: [usize; 3], spacing_mm: [f64; 3]) -> Self {
        let mut positions = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    positions.push([x, y, z]);
                }
            }
        }
        Layout::Lattice { dims, spacing_mm, positions }
    }

    /// Axes along which the lattice actually extends.
    pub fn spatial_axes(&self) -> Vec<usize> {
        match self {
            Layout::Curves => Vec::new(),
            Layout::Lattice { dims, .. } => (0..3).filter(|&a| dims[a] > 1).collect(),
        }
    }
}

/// Measured activity `Y_ij` (decayed domain), one row per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScan {
    values: RowMatrix,
    layout: Layout,
    mask: Vec<bool>,
    grid: TimeGrid,
    decay_lambda: f64,
}

impl DynamicScan {
    pub fn new(values: RowMatrix, layout: Layout, mask: Option<Vec<bool>>, grid: TimeGrid, decay_lambda: f64) -> Result<Self> {
        let n = values.rows();
        if n == 0 {
            return Err(Error::Empty("scan has no voxels"));
        }
        if values.cols() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), found: values.cols() });
        }
        if let Some((row, col)) = values.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if !(decay_lambda >= 0.0 && decay_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("decay constant must be >= 0, got {decay_lambda}")));
        }
        let mask = mask.unwrap_or_else(|| vec![true; n]);
        if mask.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: mask.len() });
        }
        if let Layout::Lattice { dims, spacing_mm, positions } = &layout {
            if positions.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: positions.len() });
            }
            if spacing_mm.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidParameter("lattice spacing must be positive".into()));
            }
            if let Some(k) = positions.iter().position(|p| (0..3).any(|a| p[a] >= dims[a])) {
                return Err(Error::InvalidParameter(format!("voxel {k} lies outside the lattice")));
            }
        }
        Ok(Self { values, layout, mask, grid, decay_lambda })
    }

    pub fn values(&self) -> &RowMatrix {
        &self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn decay_lambda(&self) -> f64 {
        self.decay_lambda
    }

    pub fn n_voxels(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }

    /// Indices of masked-in voxels.
    pub fn active(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    /// `exp(λ t_j)` for every frame.
    pub fn decay_factors(&self) -> Vec<f64> {
        self.grid.mid().iter().map(|&t| libm::exp(self.decay_lambda * t)).collect()
    }

    /// Same scan with different activity values.
    pub fn with_values(&self, values: RowMatrix) -> Result<Self> {
        Self::new(values, self.layout.clone(), Some(self.mask.clone()), self.grid.clone(), self.decay_lambda)
    }
}

/// `out[i][j] = values[i][j] * exp(lambda * t_j)`. A negative `lambda`
/// undoes a previous correction.
pub fn decay_correct(values: &RowMatrix, grid: &TimeGrid, lambda: f64) -> Result<RowMatrix> {
    if values.cols() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: values.cols() });
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("decay constant {lambda} is not finite")));
    }
    if let Some((row, col)) = values.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let factors: Vec<f64> = grid.mid().iter().map(|&t| libm::exp(lambda * t)).collect();
    let mut out = values.clone();
    for i in 0..out.rows() {
        for (v, f) in out.row_mut(i).iter_mut().zip(&factors) {
            *v *= f;
        }
    }
    Ok(out)
}
