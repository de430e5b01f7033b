//! Dynamic image synthesis: convolution with the input, Gaussian blur,
//! radioactive decay and signal-proportional noise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::irf::{analytic_vt, GammaMixture, IrfKind, IrfSpec, Jitter};
use super::labels::LabelImage;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::input::InputFunction;
use crate::linalg::RowMatrix;
use crate::rng::{stream, Purpose};
use crate::scan::{DynamicScan, Layout};

/// Noise proportionality constant used when none is configured. Puts the
/// background MSE of spectral analysis on simulation 1 near 0.13.
pub const DEFAULT_C_NOISE: f64 = 0.75;
/// Intervals of the fine grid used for numerical convolution.
pub const DEFAULT_SYNTH_M: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub labels: LabelImage,
    /// Region id to response; regions without an entry have a zero response.
    pub regions: Vec<(u8, IrfSpec)>,
    pub psf_fwhm_mm: f64,
    pub pixel_mm: [f64; 2],
    pub c_noise: f64,
    pub frames: TimeGrid,
    pub input: InputFunction,
    pub decay_lambda: f64,
    pub synth_m: usize,
}

const VT_JITTER: f64 = 0.065;

fn exp_region(terms: &[(f64, f64)]) -> IrfSpec {
    IrfSpec { kind: IrfKind::Exponentials(terms.to_vec()), jitter: Jitter::Multiplicative { sd: VT_JITTER } }
}

impl PhantomSpec {
    fn base(regions: Vec<(u8, IrfSpec)>, c_noise: f64) -> Self {
        let frames = TimeGrid::default_schedule();
        let input = InputFunction::default_gamma(frames.tau());
        Self {
            labels: LabelImage::bundled(),
            regions,
            psf_fwhm_mm: 6.0,
            pixel_mm: [2.0, 2.0],
            c_noise,
            frames,
            input,
            decay_lambda: crate::LAMBDA_C11,
            synth_m: DEFAULT_SYNTH_M,
        }
    }

    /// Compartmental responses in every region.
    pub fn simulation1(c_noise: f64) -> Self {
        Self::base(
            vec![
                (2, exp_region(&[(0.0060, 0.0030)])),
                (3, exp_region(&[(0.0040, 0.0008), (0.0023, 0.0103)])),
                (4, exp_region(&[(0.0068, 0.0007), (0.0009, 0.0203)])),
                (5, exp_region(&[(0.0007, 0.0377)])),
            ],
            c_noise,
        )
    }

    /// Gamma-mixture responses in regions 2 and 4, compartmental elsewhere.
    pub fn simulation2(c_noise: f64) -> Self {
        let region2 = IrfSpec {
            kind: IrfKind::GammaMixture(GammaMixture { weights: [0.7, 0.3], shapes: [1.5, 10.0], scales: [2.0, 1.5], c: 200.0 }),
            jitter: Jitter::GammaParameters { shape_sd: [0.05, 0.5], scale_sd: [0.2, 0.1] },
        };
        let region4 = IrfSpec {
            kind: IrfKind::GammaMixture(GammaMixture { weights: [0.8, 0.2], shapes: [2.0, 15.0], scales: [2.5, 2.0], c: 70.0 }),
            jitter: Jitter::GammaParameters { shape_sd: [0.15, 0.1], scale_sd: [0.2, 0.15] },
        };
        Self::base(
            vec![
                (2, region2),
                (3, exp_region(&[(0.0040, 0.0008), (0.0023, 0.0103)])),
                (4, region4),
                (5, exp_region(&[(0.0007, 0.0377)])),
            ],
            c_noise,
        )
    }

    pub fn region_spec(&self, id: u8) -> Option<&IrfSpec> {
        self.regions.iter().find(|(r, _)| *r == id).map(|(_, s)| s)
    }

    pub fn validate(&self) -> Result<()> {
        for (_, s) in &self.regions {
            s.validate()?;
        }
        if !(self.psf_fwhm_mm >= 0.0) || self.pixel_mm.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidParameter("PSF width must be >= 0 and pixel size > 0".into()));
        }
        if !(self.c_noise >= 0.0 && self.c_noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise constant {} must be >= 0", self.c_noise)));
        }
        if !(self.decay_lambda >= 0.0) {
            return Err(Error::InvalidParameter("decay constant must be >= 0".into()));
        }
        if self.synth_m < 10 {
            return Err(Error::InvalidParameter(format!("synthesis grid too coarse: {}", self.synth_m)));
        }
        self.input.validate_for(self.frames.tau())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomScan {
    pub scan: DynamicScan,
    /// Blurred, decayed signal before noise.
    pub noiseless: RowMatrix,
    /// `∫_0^τ M_i` of each voxel's own (unblurred) response.
    pub truth_vt: Vec<f64>,
    /// `truth_vt` blurred with the PSF: the volume of distribution of the
    /// response mixture each observed voxel actually carries.
    pub blurred_vt: Vec<f64>,
    pub irfs: Vec<IrfKind>,
    pub labels: LabelImage,
}

/// `∫_0^t I(t − u) M(u) du` at each time, with `M` replaced by its linear
/// interpolant on the nodes `k tau / n` (and `t`); the input is integrated
/// exactly against each linear piece.
pub fn convolve_numeric(input: &InputFunction, irf: impl Fn(f64) -> f64, times: &[f64], tau: f64, n: usize) -> Vec<f64> {
    let h = tau / n as f64;
    let t_max = times.iter().fold(0.0, |a: f64, &t| a.max(t));
    let n_eval = ((t_max / h) as usize + 1).min(n + 1).max(1);
    let m_nodes: Vec<f64> = (0..n_eval).map(|k| irf(k as f64 * h)).collect();
    times
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return 0.0;
            }
            // ∫_a^b I(t−u) (fa + slope (u − a)) du via the input moments
            let piece = |a: f64, b: f64, fa: f64, fb: f64| {
                let (i1a, i2a) = input.moments(t - a);
                let (i1b, i2b) = input.moments(t - b);
                let j0 = i1a - i1b;
                let j1 = (t - a) * j0 - (i2a - i2b);
                fa * j0 + (fb - fa) / (b - a) * j1
            };
            let mut s = 0.0;
            let mut k = 0;
            while k + 1 < m_nodes.len() && ((k + 1) as f64) * h < t {
                s += piece(k as f64 * h, (k + 1) as f64 * h, m_nodes[k], m_nodes[k + 1]);
                k += 1;
            }
            let a = k as f64 * h;
            s + piece(a, t, m_nodes[k], irf(t))
        })
        .collect()
}

fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    let r = libm::ceil(4.0 * sigma_px) as i64;
    let mut k: Vec<f64> = (-r..=r).map(|x| libm::exp(-(x * x) as f64 / (2.0 * sigma_px * sigma_px))).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur of one `nx x ny` image (x fastest) with zero
/// padding; the kernel is truncated at 4σ and renormalized.
pub fn gaussian_blur(image: &[f64], nx: usize, ny: usize, fwhm_mm: f64, pixel_mm: [f64; 2]) -> Vec<f64> {
    if fwhm_mm == 0.0 {
        return image.to_vec();
    }
    let sigma = fwhm_mm / 2.3548;
    let kx = gaussian_kernel(sigma / pixel_mm[0]);
    let ky = gaussian_kernel(sigma / pixel_mm[1]);
    let (rx, ry) = ((kx.len() / 2) as i64, (ky.len() / 2) as i64);
    let mut tmp = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut s = 0.0;
            for (d, w) in kx.iter().enumerate() {
                let xx = x as i64 + d as i64 - rx;
                if (0..nx as i64).contains(&xx) {
                    s += w * image[y * nx + xx as usize];
                }
            }
            tmp[y * nx + x] = s;
        }
    }
    let mut out = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut s = 0.0;
            for (d, w) in ky.iter().enumerate() {
                let yy = y as i64 + d as i64 - ry;
                if (0..ny as i64).contains(&yy) {
                    s += w * tmp[yy as usize * nx + x];
                }
            }
            out[y * nx + x] = s;
        }
    }
    out
}

/// Generate one seeded dynamic image. Voxel `i` draws its response from
/// stream `(seed, IrfParameters, i)` and its noise from `(seed, Noise, i)`.
pub fn synthesize_scan(spec: &PhantomSpec, seed: u64) -> Result<PhantomScan> {
    spec.validate()?;
    let labels = &spec.labels;
    let n = labels.len();
    let frames = &spec.frames;
    let p = frames.len();
    let tau = frames.tau();
    let t = frames.mid();

    // convolved templates for regions whose draws are scaled copies
    let templates: Vec<(u8, Vec<f64>)> = spec
        .regions
        .iter()
        .map(|(id, s)| (*id, convolve_irf(&spec.input, &s.kind, t, tau, spec.synth_m)))
        .collect();

    let mut clean = RowMatrix::zeros(n, p);
    let mut irfs = Vec::with_capacity(n);
    let mut truth_vt = Vec::with_capacity(n);
    for i in 0..n {
        let region = labels.labels[i];
        let Some(s) = spec.region_spec(region) else {
            irfs.push(IrfKind::zero());
            truth_vt.push(0.0);
            continue;
        };
        let mut rng = stream(seed, Purpose::IrfParameters, i as u64);
        let (irf, factor) = s.sample_with_factor(&mut rng);
        let curve = match factor {
            Some(f) => {
                let tpl = &templates.iter().find(|(id, _)| *id == region).expect("template per region").1;
                tpl.iter().map(|v| f * v).collect()
            }
            None => convolve_irf(&spec.input, &irf, t, tau, spec.synth_m),
        };
        clean.row_mut(i).copy_from_slice(&curve);
        truth_vt.push(analytic_vt(&irf, tau));
        irfs.push(irf);
    }

    // blur each frame, then decay
    let mut frame = vec![0.0; n];
    for j in 0..p {
        for i in 0..n {
            frame[i] = clean.get(i, j);
        }
        let blurred = gaussian_blur(&frame, labels.nx, labels.ny, spec.psf_fwhm_mm, spec.pixel_mm);
        let decay = libm::exp(-spec.decay_lambda * t[j]);
        for i in 0..n {
            clean.set(i, j, blurred[i] * decay);
        }
    }

    let mut noisy = clean.clone();
    if spec.c_noise > 0.0 {
        for i in 0..n {
            let mean = clean.row(i).iter().sum::<f64>() / p as f64;
            let sd = libm::sqrt(spec.c_noise * mean.max(0.0));
            if sd == 0.0 {
                continue;
            }
            let mut rng = stream(seed, Purpose::Noise, i as u64);
            for v in noisy.row_mut(i) {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd * z;
            }
        }
    }

    let layout = Layout::image_2d(labels.nx, labels.ny, spec.pixel_mm);
    let scan = DynamicScan::new(noisy, layout, None, frames.clone(), spec.decay_lambda)?;
    let blurred_vt = gaussian_blur(&truth_vt, labels.nx, labels.ny, spec.psf_fwhm_mm, spec.pixel_mm);
    Ok(PhantomScan { scan, noiseless: clean, truth_vt, blurred_vt, irfs, labels: labels.clone() })
}

/// `(I ⊗ M)` at the frame times: exact for exponentials, trapezoid otherwise.
fn convolve_irf(input: &InputFunction, irf: &IrfKind, times: &[f64], tau: f64, synth_m: usize) -> Vec<f64> {
    match irf {
        IrfKind::Exponentials(terms) => {
            let mut out = vec![0.0; times.len()];
            for &(a, b) in terms {
                let c = input.convolve_exponential(b, times);
                crate::linalg::axpy(a, &c, &mut out);
            }
            out
        }
        IrfKind::GammaMixture(g) => convolve_numeric(input, |u| g.eval(u), times, tau, synth_m),
    }
}
