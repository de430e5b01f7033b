//! Synthetic data: the 1-D functional curve experiment and 2-D region
//! phantoms with compartmental or gamma-mixture impulse responses, Gaussian
//! blur and signal-proportional noise.

mod irf;
mod labels;
mod oned;
mod synth;

pub use irf::{analytic_vt, GammaMixture, IrfKind, IrfSpec, Jitter};
pub use labels::{parse_pgm, LabelImage, BUNDLED_REGION_SIZES};
pub use oned::{generate_1d_dataset, mean_irf, psi1, psi2, OneDConfig, OneDDataset};
pub use synth::{convolve_numeric, gaussian_blur, synthesize_scan, PhantomScan, PhantomSpec, DEFAULT_C_NOISE, DEFAULT_SYNTH_M};
