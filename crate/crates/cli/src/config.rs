//! Run configuration. Every tunable has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fpcadeconv_core::baselines::{SplineOptions, DEFAULT_N_KNOTS, DEFAULT_SPECTRAL_SIZE};
use fpcadeconv_core::fpca::{FpcaOptions, DEFAULT_K_MAX, DEFAULT_R2_THRESHOLD};
use fpcadeconv_core::grid::DenseSpacing;
use fpcadeconv_core::phantom::{parse_pgm, OneDConfig, PhantomSpec, DEFAULT_C_NOISE, DEFAULT_SYNTH_M};
use fpcadeconv_core::pipeline::{BaselineOptions, FitOptions, Method, DEFAULT_BETA_GRID, DEFAULT_M, DEFAULT_MIN_OBS};
use fpcadeconv_core::TimeGrid;

use crate::error::{CliError, Result};

/// Environment variable overriding `threads`.
pub const THREADS_ENV: &str = "FPCADECONV_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub fit: FitConfig,
    pub baselines: BaselineConfig,
    pub phantom: PhantomConfig,
    pub oned: OneDSettings,
    pub bench: BenchConfig,
    pub calibrate: CalibrateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Uniform,
    LogEarly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub m: usize,
    pub spacing: Spacing,
    pub k_max: usize,
    pub r2_threshold: f64,
    /// Bandwidth anchors; 0 uses a third of the frames.
    pub n_b: usize,
    pub min_obs: usize,
    pub beta_grid: Vec<f64>,
    /// Spatial bandwidths in mm; empty uses 1, 2 and 3 voxel spacings.
    pub h_space_grid: Vec<f64>,
    /// Cross-validation voxels; 0 uses min(n, 2000).
    pub n_cv: usize,
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_M,
            spacing: Spacing::Uniform,
            k_max: DEFAULT_K_MAX,
            r2_threshold: DEFAULT_R2_THRESHOLD,
            n_b: 0,
            min_obs: DEFAULT_MIN_OBS,
            beta_grid: DEFAULT_BETA_GRID.to_vec(),
            h_space_grid: Vec::new(),
            n_cv: 0,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Spectral rate bounds in 1/s; both 0 span `[0.1/τ, 10/Δt_min]`.
    pub spectral_lo: f64,
    pub spectral_hi: f64,
    pub spectral_size: usize,
    pub spline_knots: usize,
    pub spline_penalties: Vec<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            spectral_lo: 0.0,
            spectral_hi: 0.0,
            spectral_size: DEFAULT_SPECTRAL_SIZE,
            spline_knots: DEFAULT_N_KNOTS,
            spline_penalties: SplineOptions::default().penalties,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub c_noise: f64,
    pub psf_fwhm_mm: f64,
    pub pixel_mm: [f64; 2],
    /// Apply carbon-11 decay to the simulated frames.
    pub decay: bool,
    pub synth_m: usize,
    /// Frame durations in s; empty uses the default 32-frame schedule.
    pub frame_durations: Vec<f64>,
    /// PGM label image; empty uses the bundled phantom.
    pub label_image: String,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            c_noise: DEFAULT_C_NOISE,
            psf_fwhm_mm: 6.0,
            pixel_mm: [2.0, 2.0],
            decay: true,
            synth_m: DEFAULT_SYNTH_M,
            frame_durations: Vec::new(),
            label_image: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OneDSettings {
    pub n_curves: usize,
    pub n_times: usize,
    pub t_max: f64,
    pub noise_sd: f64,
    pub var_b1: f64,
    pub var_b2: f64,
    pub input_peak: f64,
}

impl Default for OneDSettings {
    fn default() -> Self {
        let d = OneDConfig::default();
        Self {
            n_curves: d.n_curves,
            n_times: d.n_times,
            t_max: d.t_max,
            noise_sd: d.noise_sd,
            var_b1: d.var_b1,
            var_b2: d.var_b2,
            input_peak: d.input_peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub runs: usize,
    pub methods: Vec<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { runs: 20, methods: Method::ALL.iter().map(|m| m.name().to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// Target DEPICT MSE in `region`.
    pub target_mse: f64,
    pub region: u8,
    pub runs: usize,
    pub c_lo: f64,
    pub c_hi: f64,
    pub iterations: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self { target_mse: 0.1306, region: 1, runs: 4, c_lo: 0.01, c_hi: 10.0, iterations: 12 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 0,
            fit: FitConfig::default(),
            baselines: BaselineConfig::default(),
            phantom: PhantomConfig::default(),
            oned: OneDSettings::default(),
            bench: BenchConfig::default(),
            calibrate: CalibrateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Simulation {
    Sim1,
    Sim2,
}

impl Simulation {
    pub fn name(self) -> &'static str {
        match self {
            Simulation::Sim1 => "sim1",
            Simulation::Sim2 => "sim2",
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.fit_options(0)?.validate()?;
        self.methods()?;
        if self.bench.runs == 0 {
            return Err(CliError::Config("bench.runs must be at least 1".into()));
        }
        let c = &self.calibrate;
        if !(c.target_mse > 0.0 && c.c_lo > 0.0 && c.c_hi > c.c_lo && c.runs > 0) {
            return Err(CliError::Config("calibrate needs target_mse > 0, 0 < c_lo < c_hi and runs >= 1".into()));
        }
        let b = &self.baselines;
        if (b.spectral_lo, b.spectral_hi) != (0.0, 0.0) && !(b.spectral_lo > 0.0 && b.spectral_hi > b.spectral_lo) {
            return Err(CliError::Config("spectral bounds need 0 < spectral_lo < spectral_hi".into()));
        }
        self.oned_config().validate()?;
        Ok(())
    }

    /// Effective thread count after the environment override.
    pub fn thread_count(&self) -> Result<usize> {
        let n = match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a count")))?,
            Err(_) => self.threads,
        };
        Ok(if n == 0 { std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) } else { n })
    }

    pub fn fit_options(&self, cv_seed: u64) -> Result<FitOptions> {
        let f = &self.fit;
        Ok(FitOptions {
            m: f.m,
            spacing: match f.spacing {
                Spacing::Uniform => DenseSpacing::Uniform,
                Spacing::LogEarly => DenseSpacing::LogEarly,
            },
            fpca: FpcaOptions { k_max: f.k_max, r2_threshold: f.r2_threshold },
            n_b: (f.n_b > 0).then_some(f.n_b),
            min_obs: f.min_obs,
            beta_grid: f.beta_grid.clone(),
            h_space_grid: (!f.h_space_grid.is_empty()).then(|| f.h_space_grid.clone()),
            n_cv: (f.n_cv > 0).then_some(f.n_cv),
            cv_seed,
            ridge: f.ridge,
        })
    }

    pub fn baseline_options(&self) -> BaselineOptions {
        let b = &self.baselines;
        BaselineOptions {
            spectral_bounds: (b.spectral_lo > 0.0).then_some((b.spectral_lo, b.spectral_hi)),
            spectral_size: b.spectral_size,
            spline: SplineOptions { n_knots: b.spline_knots, penalties: b.spline_penalties.clone() },
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in &self.bench.methods {
            let m = Method::parse(name).ok_or_else(|| CliError::Config(format!("unknown method {name:?}")))?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(CliError::Config("bench.methods is empty".into()));
        }
        Ok(out)
    }

    pub fn oned_config(&self) -> OneDConfig {
        let o = &self.oned;
        OneDConfig {
            n_curves: o.n_curves,
            n_times: o.n_times,
            t_max: o.t_max,
            noise_sd: o.noise_sd,
            var_b1: o.var_b1,
            var_b2: o.var_b2,
            input_peak: o.input_peak,
        }
    }

    /// Phantom specification with this configuration's overrides applied.
    pub fn phantom_spec(&self, sim: Simulation, c_noise: Option<f64>) -> Result<PhantomSpec> {
        let p = &self.phantom;
        let c = c_noise.unwrap_or(p.c_noise);
        let mut spec = match sim {
            Simulation::Sim1 => PhantomSpec::simulation1(c),
            Simulation::Sim2 => PhantomSpec::simulation2(c),
        };
        spec.psf_fwhm_mm = p.psf_fwhm_mm;
        spec.pixel_mm = p.pixel_mm;
        spec.synth_m = p.synth_m;
        if !p.decay {
            spec.decay_lambda = 0.0;
        }
        if !p.frame_durations.is_empty() {
            spec.frames = TimeGrid::from_durations(&p.frame_durations)?;
            spec.input = fpcadeconv_core::InputFunction::default_gamma(spec.frames.tau());
        }
        if !p.label_image.is_empty() {
            let path = PathBuf::from(&p.label_image);
            let data = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            spec.labels = parse_pgm(&data)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[fit]\nmm = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg: RunConfig = toml::from_str("[fit]\nm = 120\n").unwrap();
        assert_eq!(cfg.fit.m, 120);
        assert_eq!(cfg.fit.k_max, DEFAULT_K_MAX);
        assert_eq!(cfg.bench.runs, 20);
    }
}
