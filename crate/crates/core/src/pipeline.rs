//! End-to-end estimators: the FPCA deconvolution and the comparison methods,
//! each producing a per-voxel volume-of-distribution map.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::{
    cc_vt_weights, spectral_analysis, SpectralDesign, SpectralGrid, SplineDeconvolver, SplineOptions, DEFAULT_SPECTRAL_SIZE,
};
use crate::deconv::{compute_vt_map, deconvolve_basis, model_curves_on_rows, ConvolutionOperator, DeconvolvedBasis};
use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, FpcaModel, FpcaOptions};
use crate::grid::{DenseGrid, DenseSpacing};
use crate::input::InputFunction;
use crate::presmooth::{
    calibrate_beta_cv, calibrate_space_cv, default_anchor_count, default_cv_voxels, fit_time_bandwidth_profile, smooth_scan,
    BandwidthProfile, SmoothedScan,
};
use crate::scan::{decay_correct, DynamicScan, Layout};

/// Default number of dense-grid intervals.
pub const DEFAULT_M: usize = 250;
/// Default minimum number of frames inside a time window.
pub const DEFAULT_MIN_OBS: usize = 4;
/// Default multipliers searched for the time bandwidth.
pub const DEFAULT_BETA_GRID: [f64; 7] = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
/// Default spatial bandwidths in units of the smallest voxel spacing.
pub const DEFAULT_SPACE_MULTIPLES: [f64; 3] = [1.0, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub m: usize,
    pub spacing: DenseSpacing,
    pub fpca: FpcaOptions,
    /// Anchors of the time bandwidth; `None` uses about a third of the frames.
    pub n_b: Option<usize>,
    pub min_obs: usize,
    pub beta_grid: Vec<f64>,
    /// Spatial bandwidths in mm; `None` uses multiples of the voxel spacing.
    pub h_space_grid: Option<Vec<f64>>,
    /// Voxels used by cross-validation; `None` uses `min(n, 2000)`.
    pub n_cv: Option<usize>,
    pub cv_seed: u64,
    /// Ridge penalty `ε` of the deconvolution; 0 gives the exact solve.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            m: DEFAULT_M,
            spacing: DenseSpacing::Uniform,
            fpca: FpcaOptions::default(),
            n_b: None,
            min_obs: DEFAULT_MIN_OBS,
            beta_grid: DEFAULT_BETA_GRID.to_vec(),
            h_space_grid: None,
            n_cv: None,
            cv_seed: 0,
            ridge: 0.0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if self.fpca.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        if self.beta_grid.is_empty() || self.beta_grid.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidParameter("beta grid must be non-empty and positive".into()));
        }
        if let Some(h) = &self.h_space_grid {
            if h.is_empty() || h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter("spatial bandwidth grid must be non-empty and positive".into()));
            }
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge {} must be finite and >= 0", self.ridge)));
        }
        Ok(())
    }

    pub fn dense_grid(&self, tau: f64) -> Result<DenseGrid> {
        DenseGrid::with_spacing(self.spacing, self.m, tau)
    }
}

/// Bandwidth selection followed by smoothing.
pub fn presmooth(scan: &DynamicScan, options: &FitOptions) -> Result<SmoothedScan> {
    options.validate()?;
    let grid = scan.grid();
    let n_b = options.n_b.unwrap_or_else(|| default_anchor_count(grid.len()));
    let time = fit_time_bandwidth_profile(grid, n_b, options.min_obs)?;
    let n_cv = options.n_cv.unwrap_or_else(|| default_cv_voxels(scan.n_voxels()));
    let h_space = match scan.layout() {
        Layout::Lattice { spacing_mm, .. } => {
            let h_grid = match &options.h_space_grid {
                Some(h) => h.clone(),
                None => {
                    let base = scan.layout().spatial_axes().iter().map(|&a| spacing_mm[a]).fold(f64::INFINITY, f64::min);
                    DEFAULT_SPACE_MULTIPLES.iter().map(|k| k * base).collect()
                }
            };
            calibrate_space_cv(scan, &h_grid, n_cv, options.cv_seed)?
        }
        Layout::Curves => 1.0,
    };
    let mut profile = BandwidthProfile::new(time, 1.0, h_space)?;
    profile.beta = calibrate_beta_cv(scan, &profile, &options.beta_grid, n_cv, options.cv_seed)?;
    smooth_scan(scan, &profile)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub smoothed: SmoothedScan,
    pub model: FpcaModel,
    pub basis: DeconvolvedBasis,
    pub vt: Vec<f64>,
    pub op: ConvolutionOperator,
}

impl FitResult {
    /// Deconvolved response of voxel `i` on `s_0..s_{m-1}` with its selected components.
    pub fn irf(&self, i: usize) -> Result<Vec<f64>> {
        let k = self.model.k();
        let scores: Vec<f64> = (0..k).map(|r| self.model.scores.get(i, r)).collect();
        crate::deconv::reconstruct_irf(&self.basis, self.model.a0[i], &scores, self.model.n_components[i])
    }
}

/// Presmooth, then estimate and deconvolve the functional basis.
pub fn fit(scan: &DynamicScan, input: &InputFunction, options: &FitOptions) -> Result<FitResult> {
    let smoothed = presmooth(scan, options)?;
    fit_smoothed(scan, smoothed, input, options)
}

/// FPCA and deconvolution of an already smoothed scan.
pub fn fit_smoothed(scan: &DynamicScan, smoothed: SmoothedScan, input: &InputFunction, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    let dense = options.dense_grid(scan.grid().tau())?;
    let op = ConvolutionOperator::build(input, &dense)?;
    let model = fit_fpca(scan, &smoothed, &dense, &options.fpca)?;
    let curves = model_curves_on_rows(&model);
    let basis = deconvolve_basis(&op, &curves, options.ridge)?;
    let vt = compute_vt_map(&model, &basis)?;
    Ok(FitResult { smoothed, model, basis, vt, op })
}

/// Comparison estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Fpca,
    Depict,
    PDepict,
    Cc,
    Sp,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Fpca, Method::Depict, Method::PDepict, Method::Cc, Method::Sp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fpca => "FPCA",
            Method::Depict => "DEPICT",
            Method::PDepict => "pDEPICT",
            Method::Cc => "CC",
            Method::Sp => "SP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Settings of the comparison methods.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOptions {
    /// `None` spans `[0.1/τ, 10/Δt_min]`.
    pub spectral_bounds: Option<(f64, f64)>,
    pub spectral_size: usize,
    pub spline: SplineOptions,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self { spectral_bounds: None, spectral_size: DEFAULT_SPECTRAL_SIZE, spline: SplineOptions::default() }
    }
}

impl BaselineOptions {
    pub fn spectral_design(&self, scan: &DynamicScan, input: &InputFunction) -> Result<SpectralDesign> {
        let grid = match self.spectral_bounds {
            Some((lo, hi)) => SpectralGrid::logspace(lo, hi, self.spectral_size)?,
            None => SpectralGrid::default_for(scan.grid(), self.spectral_size)?,
        };
        SpectralDesign::new(input, scan.grid(), grid)
    }
}

/// One method's map; voxels whose fit failed hold NaN and are counted.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMap {
    pub method: Method,
    pub vt: Vec<f64>,
    pub failures: usize,
}

fn collect_fits<T>(fits: Vec<Result<T>>, vt: impl Fn(&T) -> f64) -> (Vec<f64>, usize) {
    let mut failures = 0;
    let out = fits
        .iter()
        .map(|f| match f {
            Ok(fit) => vt(fit),
            Err(_) => {
                failures += 1;
                f64::NAN
            }
        })
        .collect();
    (out, failures)
}

/// Spectral analysis of the raw decay-corrected frames.
pub fn run_depict(scan: &DynamicScan, design: &SpectralDesign) -> Result<MethodMap> {
    let corrected = decay_correct(scan.values(), scan.grid(), scan.decay_lambda())?;
    let (vt, failures) = collect_fits(spectral_analysis(&corrected, design), |f| f.vt);
    Ok(MethodMap { method: Method::Depict, vt, failures })
}

/// Spectral analysis of the presmoothed curves.
pub fn run_pdepict(smoothed: &SmoothedScan, design: &SpectralDesign) -> Result<MethodMap> {
    let (vt, failures) = collect_fits(spectral_analysis(&smoothed.c_hat, design), |f| f.vt);
    Ok(MethodMap { method: Method::PDepict, vt, failures })
}

/// Curve-by-curve exact deconvolution of the presmoothed curves.
pub fn run_cc(smoothed: &SmoothedScan, op: &ConvolutionOperator) -> Result<MethodMap> {
    let g = cc_vt_weights(&smoothed.grid, op)?;
    let vt = smoothed.c_hat.iter_rows().map(|c| crate::linalg::dot(&g, c)).collect();
    Ok(MethodMap { method: Method::Cc, vt, failures: 0 })
}

/// Penalized-spline deconvolution of the presmoothed curves.
pub fn run_sp(smoothed: &SmoothedScan, op: &ConvolutionOperator, options: &SplineOptions) -> Result<MethodMap> {
    let sp = SplineDeconvolver::new(op, &smoothed.grid, options)?;
    let fits: Vec<_> = smoothed.c_hat.iter_rows().map(|c| sp.fit_frames(c)).collect();
    let (vt, failures) = collect_fits(fits, |f| f.vt);
    Ok(MethodMap { method: Method::Sp, vt, failures })
}

/// Run every requested method on one scan, sharing the smoothing and operator.
pub fn run_methods(
    scan: &DynamicScan,
    input: &InputFunction,
    methods: &[Method],
    fit_options: &FitOptions,
    baseline: &BaselineOptions,
) -> Result<Vec<Result<MethodMap>>> {
    let needs_smoothing = methods.iter().any(|m| *m != Method::Depict);
    let smoothed = if needs_smoothing { Some(presmooth(scan, fit_options)?) } else { None };
    let dense = fit_options.dense_grid(scan.grid().tau())?;
    let op = ConvolutionOperator::build(input, &dense)?;
    let design = if methods.iter().any(|m| matches!(m, Method::Depict | Method::PDepict)) {
        Some(baseline.spectral_design(scan, input)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let s = || smoothed.as_ref().expect("smoothing computed for this method");
        let d = || design.as_ref().expect("design computed for this method");
        out.push(match method {
            Method::Fpca => fit_smoothed(scan, s().clone(), input, fit_options).map(|r| MethodMap {
                method,
                failures: 0,
                vt: r.vt,
            }),
            Method::Depict => run_depict(scan, d()),
            Method::PDepict => run_pdepict(s(), d()),
            Method::Cc => run_cc(s(), &op),
            Method::Sp => run_sp(s(), &op, &baseline.spline),
        });
    }
    Ok(out)
}

/// All voxels flagged as failed.
pub fn failed_map(method: Method, n: usize) -> MethodMap {
    MethodMap { method, vt: vec![f64::NAN; n], failures: n }
}
