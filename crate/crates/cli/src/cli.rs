//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use fpcadeconv_core::metrics::{test_retest, DEFAULT_DELTAS};
use fpcadeconv_core::phantom::{generate_1d_dataset, synthesize_scan};
use fpcadeconv_core::pipeline::{fit, run_methods, Method};

use crate::bench::{calibrate_noise, run_oned_benchmark, run_phantom_benchmark};
use crate::config::{RunConfig, Simulation};
use crate::error::{CliError, Result};
use crate::io::{
    basis_table, csv_bytes, fmt_f64, read_input, read_map, read_scan, write_atomic, write_input, write_json, write_map, write_scan,
    write_table, Manifest, ModelFile, Table, Versions,
};

#[derive(Debug, Parser)]
#[command(name = "fpcadeconv", version, about = "FPCA deconvolution of dynamic tracer scans")]
pub struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhantomArg {
    Sim1,
    Sim2,
}

impl From<PhantomArg> for Simulation {
    fn from(p: PhantomArg) -> Self {
        match p {
            PhantomArg::Sim1 => Simulation::Sim1,
            PhantomArg::Sim2 => Simulation::Sim2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchArg {
    Sim1,
    Sim2,
    #[value(name = "1d")]
    OneD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Depict,
    Pdepict,
    Cc,
    Sp,
}

impl From<BaselineArg> for Method {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Depict => Method::Depict,
            BaselineArg::Pdepict => Method::PDepict,
            BaselineArg::Cc => Method::Cc,
            BaselineArg::Sp => Method::Sp,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Configuration file helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Simulate the 1-D functional curve dataset.
    #[command(name = "simulate-1d")]
    Simulate1d {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one dynamic phantom image.
    SimulatePhantom {
        which: PhantomArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `phantom.c_noise`.
        #[arg(long)]
        c_noise: Option<f64>,
    },
    /// Presmooth, FPCA, deconvolve and map V_T.
    Fit {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Seeds the cross-validation subsample.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one comparison method.
    Baseline {
        method: BaselineArg,
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated benchmark with seeded runs.
    Benchmark {
        which: BenchArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `bench.runs`.
        #[arg(long)]
        runs: Option<usize>,
        /// Overrides `phantom.c_noise`.
        #[arg(long)]
        c_noise: Option<f64>,
    },
    /// Relative test-retest differences between two V_T maps.
    TestRetest {
        #[arg(long)]
        vt1: PathBuf,
        #[arg(long)]
        vt2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Thresholds on the second map.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Find the noise constant matching a target DEPICT region MSE.
    CalibrateNoise {
        #[arg(value_enum, default_value = "sim1")]
        which: PhantomArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        region: Option<u8>,
        #[arg(long)]
        runs: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Write the full default configuration.
    Init {
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `argv`, run the command and return the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Path of `name` inside the output directory, recorded for the manifest.
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(self, command: &str, seed: Option<u64>, cfg: &RunConfig, start: Instant) -> Result<()> {
        let manifest = Manifest {
            command: command.into(),
            seed,
            config_hash: cfg.hash(),
            versions: Versions::current(),
            outputs: self.files,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        write_json(&self.dir.join("manifest.json"), &manifest)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.thread_count()?)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    match command {
        Command::Config { action: ConfigAction::Init { out } } => {
            let text = RunConfig::default().to_toml();
            match out {
                Some(p) => write_atomic(&p, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Simulate1d { seed, out } => {
            let d = generate_1d_dataset(&cfg.oned_config(), seed)?;
            let mut o = Outputs::new(&out)?;
            write_scan(&o.path("scan.json"), &d.scan)?;
            o.files.push("scan.f32".into());
            write_input(&o.path("input.csv"), &d.input)?;
            let mut t = Table::new(&["curve", "b1", "b2", "vt"]);
            t.rows = d.coeffs.iter().zip(&d.truth_vt).enumerate().map(|(i, (b, v))| vec![i as f64, b[0], b[1], *v]).collect();
            write_table(&o.path("truth.csv"), &t)?;
            o.finish("simulate-1d", Some(seed), cfg, start)
        }
        Command::SimulatePhantom { which, seed, out, c_noise } => {
            let spec = cfg.phantom_spec(which.into(), c_noise)?;
            let ph = synthesize_scan(&spec, seed)?;
            let mut o = Outputs::new(&out)?;
            let layout = ph.scan.layout().clone();
            write_scan(&o.path("scan.json"), &ph.scan)?;
            o.files.push("scan.f32".into());
            write_input(&o.path("input.csv"), &spec.input)?;
            write_map(&o.path("truth_vt.json"), "vt", &ph.truth_vt, &layout)?;
            write_map(&o.path("blurred_vt.json"), "vt", &ph.blurred_vt, &layout)?;
            let labels: Vec<f64> = ph.labels.labels.iter().map(|l| *l as f64).collect();
            write_map(&o.path("labels.json"), "labels", &labels, &layout)?;
            o.files.extend(["truth_vt.f32", "blurred_vt.f32", "labels.f32"].map(String::from));
            o.finish("simulate-phantom", Some(seed), cfg, start)
        }
        Command::Fit { scan, input, seed, out } => {
            let scan = read_scan(&scan)?;
            let input = read_input(&input)?;
            let res = fit(&scan, &input, &cfg.fit_options(seed)?)?;
            let mut o = Outputs::new(&out)?;
            write_map(&o.path("vt.json"), "vt", &res.vt, scan.layout())?;
            o.files.push("vt.f32".into());
            write_table(&o.path("basis.csv"), &basis_table(&res))?;
            write_json(&o.path("model.json"), &ModelFile::from_fit(&res))?;
            o.finish("fit", Some(seed), cfg, start)
        }
        Command::Baseline { method, scan, input, seed, out } => {
            let method: Method = method.into();
            let scan = read_scan(&scan)?;
            let input = read_input(&input)?;
            let mut maps = run_methods(&scan, &input, &[method], &cfg.fit_options(seed)?, &cfg.baseline_options())?;
            let map = maps.remove(0)?;
            let mut o = Outputs::new(&out)?;
            let name = method.name().to_ascii_lowercase();
            write_map(&o.path(&format!("{name}_vt.json")), "vt", &map.vt, scan.layout())?;
            o.files.push(format!("{name}_vt.f32"));
            if map.failures > 0 {
                eprintln!("warning: {} of {} voxels failed", map.failures, map.vt.len());
            }
            o.finish(&format!("baseline {name}"), Some(seed), cfg, start)
        }
        Command::Benchmark { which, seed, out, runs, c_noise } => {
            let runs = runs.unwrap_or(cfg.bench.runs);
            if runs == 0 {
                return Err(CliError::Usage("--runs must be at least 1".into()));
            }
            let mut o = Outputs::new(&out)?;
            match which {
                BenchArg::OneD => {
                    let report = run_oned_benchmark(cfg, runs, seed)?;
                    write_atomic(&o.path("mise.csv"), &report.summary_csv())?;
                    write_atomic(&o.path("mise_runs.csv"), &report.runs_csv())?;
                    write_atomic(&o.path("pointwise_mse.csv"), &report.pointwise_csv())?;
                    let sidecar = serde_json::json!({
                        "experiment": "1d",
                        "seed": seed,
                        "runs": runs,
                        "run_seeds": report.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
                        "config_hash": cfg.hash(),
                        "versions": Versions::current(),
                    });
                    write_json(&o.path("report.json"), &sidecar)?;
                    o.finish("benchmark 1d", Some(seed), cfg, start)
                }
                BenchArg::Sim1 | BenchArg::Sim2 => {
                    let sim = if which == BenchArg::Sim1 { Simulation::Sim1 } else { Simulation::Sim2 };
                    let report = run_phantom_benchmark(cfg, sim, c_noise, runs, seed)?;
                    write_atomic(&o.path("region_mse.csv"), &report.csv())?;
                    let sidecar = serde_json::json!({
                        "experiment": sim.name(),
                        "seed": seed,
                        "runs": runs,
                        "run_seeds": report.run_seeds,
                        "c_noise": report.c_noise,
                        "tau": report.tau,
                        "config_hash": cfg.hash(),
                        "versions": Versions::current(),
                        "truth": "mse scores each voxel against the analytic V_T of its own response over [0, tau]; \
                                  mse_blurred scores against that map blurred with the PSF; reference_vt is the tabulated \
                                  region value, shown for comparison only",
                        "spectral_vt": "spectral-analysis V_T is integrated over [0, tau], not to infinity",
                    });
                    write_json(&o.path("report.json"), &sidecar)?;
                    o.finish(&format!("benchmark {}", sim.name()), Some(seed), cfg, start)
                }
            }
        }
        Command::TestRetest { vt1, vt2, out, deltas } => {
            let (h1, a) = read_map(&vt1)?;
            let (h2, b) = read_map(&vt2)?;
            if h1.dims != h2.dims {
                return Err(CliError::Usage(format!("map sizes differ: {:?} vs {:?}", h1.dims, h2.dims)));
            }
            let deltas = deltas.unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
            let mut o = Outputs::new(&out)?;
            let header: Vec<String> = ["delta", "mean", "sd", "count"].iter().map(|s| s.to_string()).collect();
            let records = deltas
                .iter()
                .map(|&d| {
                    let r = test_retest(&a, &b, d)?;
                    Ok(vec![fmt_f64(d), fmt_f64(r.mean), fmt_f64(r.sd), r.count.to_string()])
                })
                .collect::<Result<Vec<_>>>()?;
            write_atomic(&o.path("test_retest.csv"), &csv_bytes(&header, &records))?;
            o.finish("test-retest", None, cfg, start)
        }
        Command::CalibrateNoise { which, seed, out, target, region, runs } => {
            let mut cfg = cfg.clone();
            if let Some(t) = target {
                cfg.calibrate.target_mse = t;
            }
            if let Some(r) = region {
                cfg.calibrate.region = r;
            }
            if let Some(r) = runs {
                cfg.calibrate.runs = r;
            }
            cfg.validate()?;
            let cal = calibrate_noise(&cfg, which.into(), seed)?;
            let mut o = Outputs::new(&out)?;
            let header: Vec<String> = ["step", "c_noise", "mse"].iter().map(|s| s.to_string()).collect();
            let records: Vec<Vec<String>> =
                cal.history.iter().enumerate().map(|(k, (c, m))| vec![k.to_string(), fmt_f64(*c), fmt_f64(*m)]).collect();
            write_atomic(&o.path("calibration.csv"), &csv_bytes(&header, &records))?;
            write_json(&o.path("calibration.json"), &cal)?;
            println!("c_noise = {} (DEPICT region {} MSE {} against target {})", cal.c_noise, cal.region, cal.mse, cal.target);
            o.finish("calibrate-noise", Some(seed), &cfg, start)
        }
    }
}
