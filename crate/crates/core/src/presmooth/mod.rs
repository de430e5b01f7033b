//! Spatio-temporal local-linear presmoothing with a locally adaptive time bandwidth.

mod bandwidth;
mod cv;
mod kernel;
mod smooth;

pub use bandwidth::{default_anchor_count, fit_time_bandwidth_profile, window_radius, BandwidthProfile, TimeBandwidth};
pub use cv::{beta_cv_scores, calibrate_beta_cv, calibrate_space_cv, cv_subsample, default_cv_voxels, space_cv_scores};
pub use kernel::{epanechnikov, local_linear_weights, Window, ENLARGE_FACTOR};
pub use smooth::{smooth_scan, smooth_scan_product_kernel, time_smoother_matrix, SmoothDiagnostics, SmoothedScan};
