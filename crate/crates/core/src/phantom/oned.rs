//! One-dimensional functional dataset: random responses around a
//! bi-exponential mean, convolved with the input and observed with white noise.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::synth::convolve_numeric;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::input::InputFunction;
use crate::linalg::RowMatrix;
use crate::rng::{stream, Purpose};
use crate::scan::{DynamicScan, Layout};

const MEAN_TERMS: [(f64, f64); 2] = [(0.0049, 0.0005), (0.0018, 0.0112)];
const PERIOD: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OneDConfig {
    pub n_curves: usize,
    pub n_times: usize,
    pub t_max: f64,
    pub noise_sd: f64,
    pub var_b1: f64,
    pub var_b2: f64,
    /// Peak of the gamma-variate input.
    pub input_peak: f64,
}

impl Default for OneDConfig {
    fn default() -> Self {
        Self { n_curves: 200, n_times: 200, t_max: 2000.0, noise_sd: 2.0, var_b1: 0.01, var_b2: 0.05, input_peak: 200.0 }
    }
}

impl OneDConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_curves < 2 || self.n_times < 4 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 curves and 4 times, got {} and {}",
                self.n_curves, self.n_times
            )));
        }
        let nonneg = [self.noise_sd, self.var_b1, self.var_b2];
        if !(self.t_max > 0.0 && self.input_peak > 0.0) || nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("1-D settings must be finite, t_max and peak positive".into()));
        }
        Ok(())
    }

    pub fn input(&self) -> InputFunction {
        InputFunction::gamma_variate(60.0, self.input_peak, self.t_max, 0.5).expect("validated parameters")
    }
}

/// `ψ₁(t) = sin(2πt/2000)/√1000`.
pub fn psi1(t: f64) -> f64 {
    libm::sin(2.0 * core::f64::consts::PI * t / PERIOD) / libm::sqrt(PERIOD / 2.0)
}

/// `ψ₂(t) = cos(2πt/2000)/√1000`.
pub fn psi2(t: f64) -> f64 {
    libm::cos(2.0 * core::f64::consts::PI * t / PERIOD) / libm::sqrt(PERIOD / 2.0)
}

pub fn mean_irf(t: f64) -> f64 {
    MEAN_TERMS.iter().map(|(a, b)| a * libm::exp(-b * t)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneDDataset {
    pub scan: DynamicScan,
    pub input: InputFunction,
    /// `(B₁, B₂)` per curve.
    pub coeffs: Vec<[f64; 2]>,
    pub truth_vt: Vec<f64>,
}

impl OneDDataset {
    /// True response of curve `i` at `times`.
    pub fn true_irf(&self, i: usize, times: &[f64]) -> Vec<f64> {
        let [b1, b2] = self.coeffs[i];
        times.iter().map(|&t| mean_irf(t) + b1 * psi1(t) + b2 * psi2(t)).collect()
    }
}

/// Curves `Y_i = I ⊗ (μ + B₁ψ₁ + B₂ψ₂) + ε` on `n_times` equally spaced times.
pub fn generate_1d_dataset(config: &OneDConfig, seed: u64) -> Result<OneDDataset> {
    config.validate()?;
    let grid = TimeGrid::equally_spaced(config.n_times, config.t_max)?;
    let input = config.input();
    let t = grid.mid();
    let tau = config.t_max;

    let mut mean_c = alloc::vec![0.0; t.len()];
    for &(a, b) in &MEAN_TERMS {
        crate::linalg::axpy(a, &input.convolve_exponential(b, t), &mut mean_c);
    }
    let fine = 20 * config.n_times.max(200);
    let c1 = convolve_numeric(&input, psi1, t, tau, fine);
    let c2 = convolve_numeric(&input, psi2, t, tau, fine);

    let mean_vt: f64 = MEAN_TERMS.iter().map(|(a, b)| -a * libm::expm1(-b * tau) / b).sum();
    let w = libm::sqrt(PERIOD / 2.0);
    let k = 2.0 * core::f64::consts::PI / PERIOD;
    let int1 = (1.0 - libm::cos(k * tau)) / (k * w);
    let int2 = libm::sin(k * tau) / (k * w);

    let (sd1, sd2) = (libm::sqrt(config.var_b1), libm::sqrt(config.var_b2));
    let mut values = RowMatrix::zeros(config.n_curves, t.len());
    let mut coeffs = Vec::with_capacity(config.n_curves);
    let mut truth_vt = Vec::with_capacity(config.n_curves);
    for i in 0..config.n_curves {
        let mut rng = stream(seed, Purpose::Coefficients, i as u64);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let (b1, b2) = (sd1 * z1, sd2 * z2);
        let mut noise = stream(seed, Purpose::Noise, i as u64);
        for (j, v) in values.row_mut(i).iter_mut().enumerate() {
            let e: f64 = noise.sample(StandardNormal);
            *v = mean_c[j] + b1 * c1[j] + b2 * c2[j] + config.noise_sd * e;
        }
        coeffs.push([b1, b2]);
        truth_vt.push(mean_vt + b1 * int1 + b2 * int2);
    }
    let scan = DynamicScan::new(values, Layout::Curves, None, grid, 0.0)?;
    Ok(OneDDataset { scan, input, coeffs, truth_vt })
}
