//! Acceptance suite. Prints one PASS/FAIL line per criterion with the measured
//! values. Criterion failures are reported, not raised; the process fails only
//! when a criterion cannot be evaluated at all.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use fpcadeconv::bench::{run_oned_benchmark, run_phantom_benchmark};
use fpcadeconv::config::{RunConfig, Simulation};
use fpcadeconv_core::baselines::nnls;
use fpcadeconv_core::deconv::ConvolutionOperator;
use fpcadeconv_core::linalg::weighted_dot;
use fpcadeconv_core::metrics::test_retest;
use fpcadeconv_core::phantom::{synthesize_scan, IrfKind, PhantomSpec};
use fpcadeconv_core::pipeline::{fit, FitOptions, Method};
use fpcadeconv_core::rng::{stream, Purpose};
use fpcadeconv_core::{DenseGrid, InputFunction, RowMatrix};

const SEED: u64 = 20240;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// `∫_0^t I(t − u) M(u) du` by the composite trapezoid rule.
fn trapezoid_convolution(input: &InputFunction, m: &dyn Fn(f64) -> f64, t: f64, n: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let h = t / n as f64;
    let f = |u: f64| input.eval(t - u) * m(u);
    let inner: f64 = (1..n).map(|k| f(k as f64 * h)).sum();
    h * (inner + 0.5 * (f(0.0) + f(t)))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let tau = 2000.0;
    let dense = DenseGrid::uniform(250, tau).unwrap();
    let mut rng = stream(SEED, Purpose::Coefficients, 1);
    let mut worst: f64 = 0.0;
    for pair in 0..50 {
        let theta = rng.gen_range(40.0..120.0);
        let input = InputFunction::gamma_variate(theta, 1.0, tau, 0.5).unwrap();
        let terms: Vec<(f64, f64)> = (0..1 + pair % 2)
            .map(|_| (rng.gen_range(0.001..0.01), 10f64.powf(rng.gen_range(-4.0..-1.5))))
            .collect();
        let irf = |s: f64| terms.iter().map(|(a, b)| a * (-b * s).exp()).sum::<f64>();
        let op = ConvolutionOperator::build(&input, &dense).unwrap();
        let x: Vec<f64> = dense.left().iter().map(|&s| irf(s)).collect();
        let approx = op.apply(&x).unwrap();
        let exact: Vec<f64> = dense.right().iter().map(|&t| trapezoid_convolution(&input, &irf, t, 10_000)).collect();
        let peak = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = approx.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max) / peak;
        worst = worst.max(err);
    }
    let el = start.elapsed();
    outcome(
        worst < 0.005 && within(el, 10.0),
        format!("50 pairs on [0, 2000] s, max error / peak = {:.3}% (< 0.5%), {:.1} s (< 10 s)", 100.0 * worst, el.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let dense = DenseGrid::uniform(250, 5400.0).unwrap();
    let input = InputFunction::default_gamma(5400.0);
    let op = ConvolutionOperator::build(&input, &dense).unwrap();
    let mut rng = stream(SEED, Purpose::Coefficients, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..250).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = op.solve(&op.apply(&x).unwrap()).unwrap();
        let num: f64 = back.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    let el = start.elapsed();
    outcome(
        worst < 1e-8 && within(el, 1.0),
        format!("20 random bases, max relative L2 error {worst:.2e} (< 1e-8), {:.3} s (< 1 s)", el.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let spec = PhantomSpec::simulation1(fpcadeconv_core::phantom::DEFAULT_C_NOISE);
    let ph = synthesize_scan(&spec, SEED).unwrap();
    let res = fit(&ph.scan, &spec.input, &FitOptions { cv_seed: SEED, ..FitOptions::default() }).unwrap();
    let model = &res.model;
    let w = model.dense.weights();
    let k = model.k();
    let mut ortho: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            let ip = weighted_dot(w, model.basis.dense.row(a), model.basis.dense.row(b));
            ortho = ortho.max((ip - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut checked = 0;
    let mut violating = 0;
    for i in 0..model.n_voxels() {
        if model.flat[i] {
            continue;
        }
        checked += 1;
        let r = model.r2.row(i);
        if r.windows(2).any(|p| p[1] < p[0] - 1e-12) {
            violating += 1;
        }
    }
    let wt = model.time.quadrature_weights();
    let trace: f64 = (0..wt.len()).map(|j| wt[j] * model.gamma.get(j, j)).sum();
    let mass: f64 = model.basis.spectrum.iter().sum();
    let mass_err = (mass - trace).abs() / trace;
    let el = start.elapsed();
    outcome(
        ortho <= 1e-8 && violating == 0 && mass_err <= 0.01 && within(el, 60.0),
        format!(
            "K = {k}: orthonormality {ortho:.1e} (<= 1e-8); R² decreases somewhere in L for {violating}/{checked} voxels (0 allowed); \
             spectrum mass error {:.3}% (<= 1%); {:.1} s",
            100.0 * mass_err,
            el.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let report = run_oned_benchmark(&cfg, 20, SEED).unwrap();
    let ordered = (0..report.runs.len())
        .filter(|&r| {
            let (f, s, c) = (report.mise(r, Method::Fpca), report.mise(r, Method::Sp), report.mise(r, Method::Cc));
            f < s && s < c
        })
        .count();
    let summary = report.summary();
    let mean = |m: Method| summary.iter().find(|s| s.0 == m).unwrap().1;
    let (f, s, c) = (mean(Method::Fpca), mean(Method::Sp), mean(Method::Cc));
    let ratio = c / f;
    let el = start.elapsed();
    outcome(
        ordered >= 18 && ratio >= 3.0 && within(el, 300.0),
        format!(
            "FPCA < SP < CC in {ordered}/20 seeds (>= 18); mean MISE FPCA {f:.3e}, SP {s:.3e}, CC {c:.3e}; CC/FPCA {ratio:.2} (>= 3); {:.0} s",
            el.as_secs_f64()
        ),
    )
}

fn fmt_regions(report: &fpcadeconv::bench::PhantomReport, m: Method) -> String {
    (1..=5).map(|r| format!("{:.4}", report.mse(m, r))).collect::<Vec<_>>().join("/")
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let report = run_phantom_benchmark(&cfg, Simulation::Sim1, None, 20, SEED).unwrap();
    let mse = |m, r| report.mse(m, r);
    let fpca_beats = (1..=5).all(|r| mse(Method::Fpca, r) < mse(Method::Depict, r));
    let pdepict_beats = (1..=5).all(|r| mse(Method::PDepict, r) < mse(Method::Depict, r));
    let sp_worst = (2..=4).all(|r| {
        let others = [Method::Fpca, Method::Depict, Method::PDepict, Method::Cc].iter().map(|&m| mse(m, r)).fold(0.0, f64::max);
        mse(Method::Sp, r) >= 2.0 * others
    });
    let bg = mse(Method::Fpca, 1);
    let bg_ok = bg >= 0.0114 / 3.0 && bg <= 0.0114 * 3.0;
    let el = start.elapsed();
    outcome(
        fpca_beats && pdepict_beats && sp_worst && bg_ok && within(el, 1800.0),
        format!(
            "c_noise {}: FPCA < DEPICT everywhere {fpca_beats}; pDEPICT < DEPICT everywhere {pdepict_beats}; SP worst by 2x in 2-4 {sp_worst}; \
             FPCA region-1 MSE {bg:.4} (in [0.0038, 0.0342]); regions 1-5 FPCA {} DEPICT {} pDEPICT {} CC {} SP {}; {:.0} s",
            report.c_noise,
            fmt_regions(&report, Method::Fpca),
            fmt_regions(&report, Method::Depict),
            fmt_regions(&report, Method::PDepict),
            fmt_regions(&report, Method::Cc),
            fmt_regions(&report, Method::Sp),
            el.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let report = run_phantom_benchmark(&cfg, Simulation::Sim2, None, 20, SEED).unwrap();
    let mse = |m, r| report.mse(m, r);
    let fpca_beats = (1..=5).all(|r| mse(Method::Fpca, r) < mse(Method::Depict, r));
    let (f4, p4) = (mse(Method::Fpca, 4), mse(Method::PDepict, 4));
    let el = start.elapsed();
    outcome(
        fpca_beats && f4 < p4 && within(el, 1800.0),
        format!(
            "FPCA < DEPICT everywhere {fpca_beats} (FPCA {} DEPICT {}); region 4 FPCA {f4:.4} vs pDEPICT {p4:.4}; {:.0} s",
            fmt_regions(&report, Method::Fpca),
            fmt_regions(&report, Method::Depict),
            el.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = PhantomSpec::simulation2(0.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (region, expected, reported) in [(2u8, 1.98, 1.97), (4, 8.571, 8.54)] {
        let IrfKind::GammaMixture(g) = spec.region_spec(region).unwrap().kind else { unreachable!() };
        let v = g.vt_infinite();
        let exact_ok = (v - expected).abs() < 5e-3;
        let rel = (v / reported - 1.0).abs();
        ok &= exact_ok && rel < 0.01;
        parts.push(format!("region {region}: {v:.4} (expected {expected}), {:.2}% from {reported}", 100.0 * rel));
    }
    outcome(ok, parts.join("; "))
}

/// Exhaustive NNLS over all supports by unconstrained least squares.
fn brute_force_nnls(a: &RowMatrix, b: &[f64]) -> f64 {
    let (m, g) = (a.rows(), a.cols());
    let bv = DVector::from_column_slice(b);
    let mut best = bv.norm();
    for mask in 1u32..(1 << g) {
        let cols: Vec<usize> = (0..g).filter(|k| mask & (1 << k) != 0).collect();
        let sub = DMatrix::from_fn(m, cols.len(), |i, j| a.get(i, cols[j]));
        let Ok(x) = sub.clone().svd(true, true).solve(&bv, 1e-12) else { continue };
        if x.iter().any(|v| *v < 0.0) {
            continue;
        }
        best = best.min((&sub * x - &bv).norm());
    }
    best
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(SEED, Purpose::Coefficients, 8);
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    for _ in 0..100 {
        let a = RowMatrix::from_fn(20, 8, |_, _| rng.gen_range(-1.0..1.0));
        let b: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = nnls(&a, &b).unwrap();
        negative += sol.x.iter().filter(|v| **v < 0.0).count();
        let r: Vec<f64> = a.mul_vec(&sol.x).iter().zip(&b).map(|(u, v)| u - v).collect();
        let got = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((got - brute_force_nnls(&a, &b)).abs());
    }
    let el = start.elapsed();
    outcome(
        worst < 1e-8 && negative == 0 && within(el, 10.0),
        format!("100 problems 20x8: max objective gap {worst:.1e} (< 1e-8), {negative} negative entries, {:.2} s", el.as_secs_f64()),
    )
}

fn criterion_9() -> Outcome {
    let v2: Vec<f64> = (0..200).map(|k| 0.5 + 0.17 * k as f64).collect();
    let v1: Vec<f64> = v2.iter().map(|v| 1.1 * v).collect();
    let mut worst: f64 = 0.0;
    let mut counts = Vec::new();
    for delta in [5.0, 10.0, 15.0, 20.0] {
        let r = test_retest(&v1, &v2, delta).unwrap();
        worst = worst.max((r.mean - 0.1).abs());
        counts.push(r.count);
    }
    outcome(worst <= 1e-12, format!("max |mean - 0.100| = {worst:.1e} over deltas 5/10/15/20 (voxels {counts:?})"))
}

fn run_benchmark(which: &str, out: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_fpcadeconv"))
        .args(["benchmark", which, "--runs", "3", "--seed", "7", "--out"])
        .arg(out)
        .env("FPCADECONV_THREADS", threads)
        .status()
        .expect("binary runs");
    assert!(status.success(), "benchmark {which} failed");
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for which in ["sim1", "sim2", "1d"] {
        let a = run_benchmark(which, &dir.path().join(format!("{which}_a")), "1");
        let b = run_benchmark(which, &dir.path().join(format!("{which}_b")), "3");
        let same = !a.is_empty() && a == b;
        ok &= same;
        parts.push(format!("{which}: {} CSVs {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    outcome(ok, format!("{} (seed 7, 3 runs, 1 vs 3 threads)", parts.join("; ")))
}

fn main() {
    // `cargo test -- --list` and filters: this target has no named tests
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("convolution operator vs trapezoid", criterion_1),
        ("noiseless round trip", criterion_2),
        ("FPCA invariants", criterion_3),
        ("1-D replication", criterion_4),
        ("simulation 1", criterion_5),
        ("simulation 2", criterion_6),
        ("gamma-mixture truth", criterion_7),
        ("NNLS vs enumeration", criterion_8),
        ("test-retest metric", criterion_9),
        ("benchmark determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {:<34} {}  {}", k + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
}
