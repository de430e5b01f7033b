//! Seeded experiment runner: replicate phantom and 1-D benchmarks, aggregate
//! per-region errors and calibrate the phantom noise level.
//!
//! Replicates run in parallel on the current rayon pool; each draws from its
//! own seed `run_seed(seed, r)`, and aggregation sorts per-run values before
//! summing, so reports do not depend on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fpcadeconv_core::baselines::{curve_by_curve_deconvolve, SplineDeconvolver};
use fpcadeconv_core::metrics::{mean_se, mise, pointwise_mse, region_mse};
use fpcadeconv_core::phantom::{generate_1d_dataset, synthesize_scan, PhantomScan, PhantomSpec};
use fpcadeconv_core::pipeline::{fit, run_methods, Method, MethodMap};
use fpcadeconv_core::rng::run_seed;
use fpcadeconv_core::RowMatrix;

use crate::config::{RunConfig, Simulation};
use crate::error::{CliError, Result};
use crate::io::{csv_bytes, fmt_f64};

/// Tabulated region volumes of distribution of the two phantom simulations
/// (regions 1 to 5), reported next to the analytic truth.
pub const REFERENCE_VT_SIM1: [f64; 5] = [0.0, 2.00, 4.98, 9.24, 0.02];
pub const REFERENCE_VT_SIM2: [f64; 5] = [0.0, 1.97, 4.98, 8.54, 0.02];

pub fn reference_vt(sim: Simulation, region: u8) -> Option<f64> {
    let table = match sim {
        Simulation::Sim1 => &REFERENCE_VT_SIM1,
        Simulation::Sim2 => &REFERENCE_VT_SIM2,
    };
    table.get((region as usize).checked_sub(1)?).copied()
}

/// Mean and standard error after sorting, so the result is independent of
/// the order in which runs finished.
fn sorted_mean_se(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    mean_se(&v)
}

/// Region MSEs over the voxels a method produced a value for.
fn finite_region_mse(vt_hat: &[f64], vt_true: &[f64], labels: &[u8]) -> Result<(Vec<(u8, f64)>, f64)> {
    let keep: Vec<usize> = (0..vt_hat.len()).filter(|&i| vt_hat[i].is_finite()).collect();
    let h: Vec<f64> = keep.iter().map(|&i| vt_hat[i]).collect();
    let t: Vec<f64> = keep.iter().map(|&i| vt_true[i]).collect();
    let l: Vec<u8> = keep.iter().map(|&i| labels[i]).collect();
    let regions = region_mse(&h, &t, &l)?;
    let total: f64 = regions.iter().map(|r| r.mse * r.count as f64).sum();
    let count: usize = regions.iter().map(|r| r.count).sum();
    let pooled = if count == 0 { f64::NAN } else { total / count as f64 };
    Ok((regions.iter().map(|r| (r.region, r.mse)).collect(), pooled))
}

/// Errors of one method in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    /// `None` when the method failed outright.
    pub regions: Option<Vec<(u8, f64)>>,
    pub pooled: f64,
    pub regions_blurred: Option<Vec<(u8, f64)>>,
    pub pooled_blurred: f64,
    pub failed_voxels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomRun {
    pub seed: u64,
    pub methods: Vec<MethodRun>,
    /// Mean analytic V_T per region.
    pub region_truth: Vec<(u8, f64)>,
}

fn region_means(values: &[f64], labels: &[u8]) -> Vec<(u8, f64)> {
    let mut acc: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for (v, &r) in values.iter().zip(labels) {
        let e = acc.entry(r).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(r, (s, c))| (r, s / c as f64)).collect()
}

fn score_method(map: Result<MethodMap, fpcadeconv_core::Error>, method: Method, ph: &PhantomScan) -> Result<MethodRun> {
    let labels = &ph.labels.labels;
    match map {
        Ok(m) => {
            let (regions, pooled) = finite_region_mse(&m.vt, &ph.truth_vt, labels)?;
            let (regions_blurred, pooled_blurred) = finite_region_mse(&m.vt, &ph.blurred_vt, labels)?;
            let failed_voxels = m.vt.iter().filter(|v| !v.is_finite()).count();
            Ok(MethodRun { method, regions: Some(regions), pooled, regions_blurred: Some(regions_blurred), pooled_blurred, failed_voxels })
        }
        Err(e) if e.is_numerical() => Ok(MethodRun {
            method,
            regions: None,
            pooled: f64::NAN,
            regions_blurred: None,
            pooled_blurred: f64::NAN,
            failed_voxels: ph.truth_vt.len(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// One replicate: simulate, estimate with every method, score.
pub fn phantom_run(spec: &PhantomSpec, cfg: &RunConfig, methods: &[Method], seed: u64) -> Result<PhantomRun> {
    let ph = synthesize_scan(spec, seed)?;
    let fit_options = cfg.fit_options(seed)?;
    let maps = run_methods(&ph.scan, &spec.input, methods, &fit_options, &cfg.baseline_options())?;
    let methods = maps.into_iter().zip(methods).map(|(m, &method)| score_method(m, method, &ph)).collect::<Result<Vec<_>>>()?;
    Ok(PhantomRun { seed, methods, region_truth: region_means(&ph.truth_vt, &ph.labels.labels) })
}

/// One row of a phantom report; `region` is `None` for the pooled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub region: Option<u8>,
    pub mse: f64,
    pub se: f64,
    /// Runs contributing to the cell.
    pub runs: usize,
    pub failed_runs: usize,
    pub failed_voxels: usize,
    pub mse_blurred: f64,
    pub se_blurred: f64,
    /// Mean analytic V_T of the region.
    pub truth_vt: f64,
    pub reference_vt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomReport {
    pub simulation: Simulation,
    pub seed: u64,
    pub run_seeds: Vec<u64>,
    pub c_noise: f64,
    pub tau: f64,
    pub cells: Vec<CellSummary>,
}

impl PhantomReport {
    pub fn cell(&self, method: Method, region: Option<u8>) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method.name() && c.region == region)
    }

    pub fn mse(&self, method: Method, region: u8) -> f64 {
        self.cell(method, Some(region)).map_or(f64::NAN, |c| c.mse)
    }

    pub fn csv(&self) -> Vec<u8> {
        let header: Vec<String> = [
            "method", "region", "mse", "se", "runs", "failed_runs", "failed_voxels", "mse_blurred", "se_blurred", "truth_vt",
            "reference_vt",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let records: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.method.clone(),
                    c.region.map_or("all".into(), |r| r.to_string()),
                    fmt_f64(c.mse),
                    fmt_f64(c.se),
                    c.runs.to_string(),
                    c.failed_runs.to_string(),
                    c.failed_voxels.to_string(),
                    fmt_f64(c.mse_blurred),
                    fmt_f64(c.se_blurred),
                    fmt_f64(c.truth_vt),
                    c.reference_vt.map_or(String::new(), fmt_f64),
                ]
            })
            .collect();
        csv_bytes(&header, &records)
    }
}

/// Combine replicates into per-method, per-region cells. The order of `runs`
/// does not matter.
pub fn aggregate_phantom(sim: Simulation, runs: &[PhantomRun], methods: &[Method]) -> Vec<CellSummary> {
    let mut truth: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for &(region, v) in &r.region_truth {
            truth.entry(region).or_default().push(v);
        }
    }
    let regions: Vec<u8> = truth.keys().copied().collect();
    let mut cells = Vec::new();
    for &method in methods {
        let per_method: Vec<&MethodRun> = runs.iter().flat_map(|r| r.methods.iter().filter(move |m| m.method == method)).collect();
        let ok: Vec<&&MethodRun> = per_method.iter().filter(|m| m.regions.is_some()).collect();
        let failed_runs = per_method.len() - ok.len();
        let failed_voxels: usize = per_method.iter().map(|m| m.failed_voxels).sum();
        let pick = |m: &MethodRun, region: u8, blurred: bool| {
            let list = if blurred { &m.regions_blurred } else { &m.regions };
            list.as_ref().and_then(|l| l.iter().find(|(r, _)| *r == region).map(|(_, v)| *v))
        };
        let keys: Vec<Option<u8>> = regions.iter().map(|r| Some(*r)).chain(std::iter::once(None)).collect();
        for &region in &keys {
            let collect = |blurred: bool| -> Vec<f64> {
                ok.iter()
                    .filter_map(|m| match region {
                        Some(r) => pick(m, r, blurred),
                        None => Some(if blurred { m.pooled_blurred } else { m.pooled }),
                    })
                    .collect()
            };
            let own = collect(false);
            let blurred = collect(true);
            let (mse, se) = sorted_mean_se(&own);
            let (mse_blurred, se_blurred) = sorted_mean_se(&blurred);
            let truth_vt = match region {
                Some(r) => sorted_mean_se(&truth[&r]).0,
                None => f64::NAN,
            };
            cells.push(CellSummary {
                method: method.name().into(),
                region,
                mse,
                se,
                runs: own.len(),
                failed_runs,
                failed_voxels,
                mse_blurred,
                se_blurred,
                truth_vt,
                reference_vt: region.and_then(|r| reference_vt(sim, r)),
            });
        }
    }
    cells
}

/// `runs` seeded replicates of a phantom simulation.
pub fn run_phantom_benchmark(cfg: &RunConfig, sim: Simulation, c_noise: Option<f64>, runs: usize, seed: u64) -> Result<PhantomReport> {
    let spec = cfg.phantom_spec(sim, c_noise)?;
    let methods = cfg.methods()?;
    let run_seeds: Vec<u64> = (0..runs as u64).map(|r| run_seed(seed, r)).collect();
    let results: Vec<PhantomRun> =
        run_seeds.par_iter().map(|&s| phantom_run(&spec, cfg, &methods, s)).collect::<Result<Vec<_>>>()?;
    Ok(PhantomReport {
        simulation: sim,
        seed,
        run_seeds,
        c_noise: spec.c_noise,
        tau: spec.frames.tau(),
        cells: aggregate_phantom(sim, &results, &methods),
    })
}

/// Methods compared on the 1-D benchmark.
pub const ONED_METHODS: [Method; 3] = [Method::Fpca, Method::Cc, Method::Sp];

#[derive(Debug, Clone, PartialEq)]
pub struct OneDRun {
    pub seed: u64,
    /// `(method, MISE)`; NaN when the method failed.
    pub mise: Vec<(Method, f64)>,
    /// Pointwise squared error per method on the dense grid.
    pub pointwise: Vec<(Method, Vec<f64>)>,
}

/// One 1-D replicate: FPCA, CC and SP reconstructions against the true responses.
pub fn oned_run(cfg: &RunConfig, methods: &[Method], seed: u64) -> Result<OneDRun> {
    let d = generate_1d_dataset(&cfg.oned_config(), seed)?;
    let res = fit(&d.scan, &d.input, &cfg.fit_options(seed)?)?;
    let dense = &res.model.dense;
    let n = d.scan.n_voxels();
    let truth = RowMatrix::from_rows(&(0..n).map(|i| d.true_irf(i, dense.left())).collect::<Vec<_>>())?;
    let mut mise_out = Vec::new();
    let mut pointwise = Vec::new();
    for &method in methods {
        let est: fpcadeconv_core::Result<RowMatrix> = match method {
            Method::Fpca => (0..n).map(|i| res.irf(i)).collect::<fpcadeconv_core::Result<Vec<_>>>().and_then(|r| RowMatrix::from_rows(&r)),
            Method::Cc => curve_by_curve_deconvolve(&res.smoothed.c_hat, d.scan.grid(), &res.op).map(|c| c.irfs),
            Method::Sp => SplineDeconvolver::new(&res.op, d.scan.grid(), &cfg.baseline_options().spline).and_then(|sp| {
                let rows = res
                    .smoothed
                    .c_hat
                    .iter_rows()
                    .map(|c| sp.fit_frames(c).map(|f| sp.irf(&f)))
                    .collect::<fpcadeconv_core::Result<Vec<_>>>()?;
                RowMatrix::from_rows(&rows)
            }),
            _ => continue,
        };
        match est {
            Ok(m) => {
                mise_out.push((method, mise(&m, &truth, dense)?));
                pointwise.push((method, pointwise_mse(&m, &truth)?));
            }
            Err(e) if e.is_numerical() => {
                mise_out.push((method, f64::NAN));
                pointwise.push((method, vec![f64::NAN; dense.m()]));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(OneDRun { seed, mise: mise_out, pointwise })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneDReport {
    pub seed: u64,
    pub runs: Vec<OneDRun>,
    /// Dense grid nodes `s_0..s_{m-1}`.
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
}

impl OneDReport {
    /// `(method, mean MISE, se, runs, failed runs)`.
    pub fn summary(&self) -> Vec<(Method, f64, f64, usize, usize)> {
        self.methods
            .iter()
            .map(|&m| {
                let all: Vec<f64> = self.runs.iter().filter_map(|r| r.mise.iter().find(|(k, _)| *k == m).map(|(_, v)| *v)).collect();
                let ok: Vec<f64> = all.iter().copied().filter(|v| v.is_finite()).collect();
                let (mean, se) = sorted_mean_se(&ok);
                (m, mean, se, ok.len(), all.len() - ok.len())
            })
            .collect()
    }

    pub fn mise(&self, run: usize, method: Method) -> f64 {
        self.runs[run].mise.iter().find(|(k, _)| *k == method).map_or(f64::NAN, |(_, v)| *v)
    }

    pub fn summary_csv(&self) -> Vec<u8> {
        let header: Vec<String> = ["method", "mise", "se", "runs", "failed_runs"].iter().map(|s| s.to_string()).collect();
        let records: Vec<Vec<String>> = self
            .summary()
            .into_iter()
            .map(|(m, mean, se, n, f)| vec![m.name().into(), fmt_f64(mean), fmt_f64(se), n.to_string(), f.to_string()])
            .collect();
        csv_bytes(&header, &records)
    }

    pub fn runs_csv(&self) -> Vec<u8> {
        let mut header = vec!["run".to_string(), "seed".to_string()];
        header.extend(self.methods.iter().map(|m| m.name().to_string()));
        let records: Vec<Vec<String>> = self
            .runs
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let mut row = vec![k.to_string(), r.seed.to_string()];
                row.extend(self.methods.iter().map(|&m| fmt_f64(self.mise(k, m))));
                row
            })
            .collect();
        csv_bytes(&header, &records)
    }

    /// Pointwise MSE averaged over runs, one column per method.
    pub fn pointwise_csv(&self) -> Vec<u8> {
        let mut header = vec!["s".to_string()];
        header.extend(self.methods.iter().map(|m| m.name().to_string()));
        let cols: Vec<Vec<f64>> = self
            .methods
            .iter()
            .map(|&m| {
                (0..self.grid.len())
                    .map(|q| {
                        let v: Vec<f64> = self
                            .runs
                            .iter()
                            .filter_map(|r| r.pointwise.iter().find(|(k, _)| *k == m).map(|(_, p)| p[q]))
                            .filter(|v| v.is_finite())
                            .collect();
                        sorted_mean_se(&v).0
                    })
                    .collect()
            })
            .collect();
        let records: Vec<Vec<String>> = (0..self.grid.len())
            .map(|q| {
                let mut row = vec![fmt_f64(self.grid[q])];
                row.extend(cols.iter().map(|c| fmt_f64(c[q])));
                row
            })
            .collect();
        csv_bytes(&header, &records)
    }
}

pub fn run_oned_benchmark(cfg: &RunConfig, runs: usize, seed: u64) -> Result<OneDReport> {
    let configured = cfg.methods()?;
    let methods: Vec<Method> = ONED_METHODS.iter().copied().filter(|m| configured.contains(m)).collect();
    if methods.is_empty() {
        return Err(CliError::Config("the 1-D benchmark compares FPCA, CC and SP; none is selected".into()));
    }
    let run_seeds: Vec<u64> = (0..runs as u64).map(|r| run_seed(seed, r)).collect();
    let results = run_seeds.par_iter().map(|&s| oned_run(cfg, &methods, s)).collect::<Result<Vec<_>>>()?;
    let grid = cfg.fit_options(0)?.dense_grid(cfg.oned.t_max)?.left().to_vec();
    Ok(OneDReport { seed, runs: results, grid, methods })
}

/// Mean DEPICT MSE in one region over replicates at noise constant `c`.
pub fn depict_region_mse(cfg: &RunConfig, sim: Simulation, c: f64, region: u8, run_seeds: &[u64]) -> Result<f64> {
    let spec = cfg.phantom_spec(sim, Some(c))?;
    let per_run = run_seeds
        .par_iter()
        .map(|&s| {
            let run = phantom_run(&spec, cfg, &[Method::Depict], s)?;
            let m = &run.methods[0];
            Ok(m.regions.as_ref().and_then(|r| r.iter().find(|(k, _)| *k == region).map(|(_, v)| *v)).unwrap_or(f64::NAN))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sorted_mean_se(&per_run).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_noise: f64,
    pub mse: f64,
    pub target: f64,
    pub region: u8,
    /// `(c, mse)` in evaluation order.
    pub history: Vec<(f64, f64)>,
}

/// Bisection in `log c` for the noise constant at which DEPICT's region MSE
/// hits the target. The same replicate seeds are used at every `c`.
pub fn calibrate_noise(cfg: &RunConfig, sim: Simulation, seed: u64) -> Result<Calibration> {
    let cal = &cfg.calibrate;
    let seeds: Vec<u64> = (0..cal.runs as u64).map(|r| run_seed(seed, r)).collect();
    let f = |c: f64| depict_region_mse(cfg, sim, c, cal.region, &seeds);
    let mut history = Vec::new();
    let (mut lo, mut hi) = (cal.c_lo, cal.c_hi);
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    history.push((lo, f_lo));
    history.push((hi, f_hi));
    if !(f_lo <= cal.target_mse && cal.target_mse <= f_hi) {
        return Err(CliError::Config(format!(
            "target MSE {} not bracketed: {f_lo} at c = {lo}, {f_hi} at c = {hi}",
            cal.target_mse
        )));
    }
    let mut best = if (f_lo - cal.target_mse).abs() < (f_hi - cal.target_mse).abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..cal.iterations {
        let mid = (lo * hi).sqrt();
        let v = f(mid)?;
        history.push((mid, v));
        if (v - cal.target_mse).abs() < (best.1 - cal.target_mse).abs() {
            best = (mid, v);
        }
        if v < cal.target_mse {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration { c_noise: best.0, mse: best.1, target: cal.target_mse, region: cal.region, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_run(seed: u64, scale: f64) -> PhantomRun {
        let regions = vec![(1u8, 0.1 * scale), (2, 2.0 * scale)];
        PhantomRun {
            seed,
            methods: vec![MethodRun {
                method: Method::Fpca,
                regions: Some(regions.clone()),
                pooled: 0.5 * scale,
                regions_blurred: Some(regions),
                pooled_blurred: 0.5 * scale,
                failed_voxels: 0,
            }],
            region_truth: vec![(1, 0.0), (2, 2.0)],
        }
    }

    #[test]
    fn aggregation_ignores_run_order() {
        let runs: Vec<PhantomRun> = (0..7).map(|k| fake_run(k, 1.0 + 0.37 * k as f64)).collect();
        let mut rev = runs.clone();
        rev.reverse();
        rev.swap(1, 4);
        let a = aggregate_phantom(Simulation::Sim1, &runs, &[Method::Fpca]);
        let b = aggregate_phantom(Simulation::Sim1, &rev, &[Method::Fpca]);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|c| c.se >= 0.0 && c.runs == 7));
    }

    #[test]
    fn failed_runs_are_excluded_and_counted() {
        let mut runs: Vec<PhantomRun> = (0..3).map(|k| fake_run(k, 1.0)).collect();
        runs[1].methods[0].regions = None;
        runs[1].methods[0].regions_blurred = None;
        runs[1].methods[0].failed_voxels = 10;
        let cells = aggregate_phantom(Simulation::Sim1, &runs, &[Method::Fpca]);
        let c = cells.iter().find(|c| c.region == Some(2)).unwrap();
        assert_eq!((c.runs, c.failed_runs, c.failed_voxels), (2, 1, 10));
        assert_eq!(c.mse, 2.0);
        assert_eq!(c.se, 0.0);
    }

    #[test]
    fn pooled_is_size_weighted_region_mean() {
        let hat = [0.5, 1.0, 2.5, 3.0, f64::NAN, 0.1];
        let truth = [0.0, 1.5, 2.0, 2.0, 1.0, 0.0];
        let labels = [1u8, 2, 2, 3, 3, 1];
        let (regions, pooled) = finite_region_mse(&hat, &truth, &labels).unwrap();
        let counts = [2.0, 2.0, 1.0];
        let weighted: f64 = regions.iter().zip(counts).map(|((_, m), c)| m * c).sum::<f64>() / 5.0;
        assert!((pooled - weighted).abs() < 1e-12);
        assert_eq!(regions[2], (3, 1.0));
    }

    #[test]
    fn reference_table_lookup() {
        assert_eq!(reference_vt(Simulation::Sim1, 4), Some(9.24));
        assert_eq!(reference_vt(Simulation::Sim2, 2), Some(1.97));
        assert_eq!(reference_vt(Simulation::Sim1, 0), None);
        assert_eq!(reference_vt(Simulation::Sim1, 6), None);
    }

    #[test]
    fn analytic_truth_of_sim1_region_3() {
        let spec = PhantomSpec::simulation1(0.0);
        let v = fpcadeconv_core::phantom::analytic_vt(&spec.region_spec(3).unwrap().kind, spec.frames.tau());
        assert!((v - 5.157).abs() < 1e-3, "{v}");
    }
}
