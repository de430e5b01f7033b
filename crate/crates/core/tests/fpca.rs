use fpcadeconv_core::fpca::*;
use fpcadeconv_core::grid::interpolate_to_dense;
use fpcadeconv_core::linalg::weighted_dot;
use fpcadeconv_core::phantom::{generate_1d_dataset, synthesize_scan, OneDConfig, PhantomSpec};
use fpcadeconv_core::pipeline::{fit, FitOptions};
use fpcadeconv_core::{DenseGrid, DynamicScan, Layout, RowMatrix, TimeGrid};

fn phantom_fit() -> fpcadeconv_core::pipeline::FitResult {
    let spec = PhantomSpec::simulation1(0.05);
    let ph = synthesize_scan(&spec, 5).unwrap();
    fit(&ph.scan, &spec.input, &FitOptions::default()).unwrap()
}

#[test]
fn phantom_fit_invariants() {
    let res = phantom_fit();
    let model = &res.model;
    let w = model.dense.weights();
    let k = model.k();
    for a in 0..k {
        for b in 0..k {
            let ip = weighted_dot(w, model.basis.dense.row(a), model.basis.dense.row(b));
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((ip - target).abs() <= 1e-8, "<phi_{a}, phi_{b}> = {ip}");
        }
    }
    assert!(model.basis.eigvals.windows(2).all(|v| v[0] >= v[1]));

    // in the quadrature norm the fits are nested projections of the smoothed curve
    for i in 0..model.n_voxels() {
        let c = interpolate_to_dense(res.smoothed.c_hat.row(i), &model.time, &model.dense).unwrap();
        let mut r: Vec<f64> = c.iter().zip(&model.mu_dense).map(|(c, m)| c - model.a0[i] * m).collect();
        let mut prev = weighted_dot(w, &r, &r);
        for l in 0..k {
            let s = model.scores.get(i, l);
            for (v, p) in r.iter_mut().zip(model.basis.dense.row(l)) {
                *v -= s * p;
            }
            let next = weighted_dot(w, &r, &r);
            assert!(next <= prev * (1.0 + 1e-9) + 1e-18, "voxel {i}: residual grows at L={}", l + 1);
            prev = next;
        }
        assert!(model.n_components[i] <= k);
    }

    let wt = model.time.quadrature_weights();
    let trace: f64 = (0..wt.len()).map(|j| wt[j] * model.gamma.get(j, j)).sum();
    let mass: f64 = model.basis.spectrum.iter().sum();
    assert!((mass - trace).abs() <= 0.01 * trace, "spectrum {mass} vs trace {trace}");
}

#[test]
fn mean_multiplier_is_near_one() {
    let d = generate_1d_dataset(&OneDConfig::default(), 3).unwrap();
    let res = fit(&d.scan, &d.input, &FitOptions::default()).unwrap();
    let mean = res.model.a0.iter().sum::<f64>() / res.model.a0.len() as f64;
    assert!((0.9..=1.1).contains(&mean), "mean multiplier {mean}");
}

#[test]
fn raw_mean_within_clt_band() {
    let cfg = OneDConfig::default();
    let d = generate_1d_dataset(&cfg, 9).unwrap();
    let clean = generate_1d_dataset(&OneDConfig { noise_sd: 0.0, ..cfg.clone() }, 9).unwrap();
    let mu = estimate_mean(&d.scan).unwrap();
    let n = cfg.n_curves as f64;
    let p = cfg.n_times;
    // true mean output from the noiseless coefficients is the same draw, so
    // the difference is the mean of the noise alone
    for j in 0..p {
        let truth: f64 = (0..cfg.n_curves).map(|i| clean.scan.values().get(i, j)).sum::<f64>() / n;
        assert!((mu[j] - truth).abs() < 3.0 * cfg.noise_sd / n.sqrt(), "frame {j}");
    }
}

#[test]
fn multiplier_ignores_orthogonal_residual() {
    let dense = DenseGrid::uniform(250, 2000.0).unwrap();
    let w = dense.weights();
    let mu: Vec<f64> = dense.left().iter().map(|t| libm::exp(-t / 700.0) + 0.2).collect();
    let raw: Vec<f64> = dense.left().iter().map(|t| libm::sin(t / 300.0)).collect();
    let coef = weighted_dot(w, &raw, &mu) / weighted_dot(w, &mu, &mu);
    let g: Vec<f64> = raw.iter().zip(&mu).map(|(r, m)| r - coef * m).collect();
    let c: Vec<f64> = mu.iter().zip(&g).map(|(m, g)| m + g).collect();
    assert!((estimate_multiplier(&c, &mu, &dense).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn rank_one_data_recovers_its_direction() {
    let time = TimeGrid::default_schedule();
    let dense = DenseGrid::uniform(250, time.tau()).unwrap();
    let t = time.mid();
    let mu: Vec<f64> = t.iter().map(|s| 1.0 - libm::exp(-s / 300.0)).collect();
    let phi: Vec<f64> = t.iter().map(|s| libm::cos(s / 1200.0) - 0.3).collect();
    let n = 200;
    let c = RowMatrix::from_fn(n, t.len(), |i, j| {
        let a0 = 1.0 + 0.2 * libm::sin(i as f64);
        let a1 = libm::cos(1.7 * i as f64);
        a0 * mu[j] + a1 * phi[j]
    });
    let mask = vec![true; n];
    let mu_dense = interpolate_to_dense(&mu, &time, &dense).unwrap();
    let a0: Vec<f64> = (0..n)
        .map(|i| estimate_multiplier(&interpolate_to_dense(c.row(i), &time, &dense).unwrap(), &mu_dense, &dense).unwrap())
        .collect();
    let gamma = estimate_covariance(&c, &mask, &mu, &a0).unwrap();
    let basis = eigendecompose(&gamma, &time, &dense, 3).unwrap();
    // the residual direction is phi with its projection on mu removed
    let wt = time.quadrature_weights();
    let proj = (0..t.len()).map(|j| wt[j] * phi[j] * mu[j]).sum::<f64>() / (0..t.len()).map(|j| wt[j] * mu[j] * mu[j]).sum::<f64>();
    let dir: Vec<f64> = phi.iter().zip(&mu).map(|(p, m)| p - proj * m).collect();
    let v = basis.frames.row(0);
    let cos = fpcadeconv_core::linalg::dot(v, &dir) / (fpcadeconv_core::linalg::norm2(v) * fpcadeconv_core::linalg::norm2(&dir));
    assert!(cos.abs() > 0.99, "cos angle {cos}");
}

#[test]
fn constructed_spectrum_ratio() {
    let time = TimeGrid::default_schedule();
    let dense = DenseGrid::uniform(250, time.tau()).unwrap();
    let tau = time.tau();
    let t = time.mid();
    let f1: Vec<f64> = t.iter().map(|s| libm::sin(core::f64::consts::PI * s / tau)).collect();
    let f2: Vec<f64> = t.iter().map(|s| libm::cos(core::f64::consts::PI * s / tau)).collect();
    let gamma = RowMatrix::from_fn(t.len(), t.len(), |j, k| 4.0 * f1[j] * f1[k] + f2[j] * f2[k]);
    let b = eigendecompose(&gamma, &time, &dense, 2).unwrap();
    let ratio = b.eigvals[0] / b.eigvals[1];
    // normalize for the frame quadrature norms of f1 and f2
    let wt = time.quadrature_weights();
    let n1: f64 = (0..t.len()).map(|j| wt[j] * f1[j] * f1[j]).sum();
    let n2: f64 = (0..t.len()).map(|j| wt[j] * f2[j] * f2[j]).sum();
    let c12: f64 = (0..t.len()).map(|j| wt[j] * f1[j] * f2[j]).sum();
    // exact eigenvalues of the 2x2 Gram problem
    let (a, d, o) = (4.0 * n1, n2, 2.0 * c12);
    let disc = libm::sqrt((a - d) * (a - d) + 4.0 * o * o);
    let expected = (a + d + disc) / (a + d - disc);
    assert!((ratio / expected - 1.0).abs() < 0.05, "ratio {ratio} expected {expected}");
    assert!((ratio / 4.0 - 1.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn scores_of_constructed_residuals() {
    let res = phantom_fit();
    let model = &res.model;
    let dense = &model.dense;
    let mu = &model.mu_dense;
    let a0 = 1.3;
    let c: Vec<f64> = (0..dense.m())
        .map(|q| a0 * mu[q] + 2.0 * model.basis.dense.get(0, q) - 3.0 * model.basis.dense.get(1, q))
        .collect();
    let s = compute_scores(&c, a0, mu, &model.basis.dense, dense).unwrap();
    assert!((s[0] - 2.0).abs() < 1e-8 && (s[1] + 3.0).abs() < 1e-8);
    assert!(s[2..].iter().all(|v| v.abs() < 1e-8));
    let zero = compute_scores(&mu.iter().map(|v| a0 * v).collect::<Vec<_>>(), a0, mu, &model.basis.dense, dense).unwrap();
    assert!(zero.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn flat_voxel_is_flagged() {
    let grid = TimeGrid::equally_spaced(20, 2000.0).unwrap();
    let values = RowMatrix::from_fn(12, 20, |i, j| if i == 0 { 3.0 } else { (1.0 + 0.1 * i as f64) * (j as f64 + 1.0).ln() });
    let scan = DynamicScan::new(values, Layout::Curves, None, grid, 0.0).unwrap();
    let input = fpcadeconv_core::InputFunction::gamma_variate(60.0, 10.0, 2000.0, 0.5).unwrap();
    let res = fit(&scan, &input, &FitOptions::default()).unwrap();
    assert!(res.model.flat[0]);
    assert_eq!(res.model.n_components[0], 0);
    assert!(!res.model.flat[1]);
}
