//! Comparison estimators: spectral analysis by non-negative least squares
//! (raw and presmoothed data), curve-by-curve deconvolution and
//! penalized-spline deconvolution.

mod cc;
mod nnls;
mod spectral;
mod spline;

pub use cc::{cc_vt_weights, curve_by_curve_deconvolve, CurveByCurve};
pub use nnls::{nnls, nnls_with_cap, NnlsSolution};
pub use spectral::{spectral_analysis, SpectralDesign, SpectralFit, SpectralGrid, DEFAULT_SPECTRAL_SIZE};
pub use spline::{bspline_basis, SplineDeconvolver, SplineFit, SplineOptions, DEFAULT_N_KNOTS, DEFAULT_PENALTY_POINTS};
