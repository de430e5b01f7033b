use fpcadeconv_core::deconv::*;
use fpcadeconv_core::grid::integrate_curve;
use fpcadeconv_core::phantom::{synthesize_scan, PhantomSpec};
use fpcadeconv_core::pipeline::{fit, FitOptions};
use fpcadeconv_core::rng::{stream, Purpose};
use fpcadeconv_core::{DenseGrid, InputFunction, RowMatrix};
use proptest::prelude::*;
use rand::Rng;

/// `∫_0^t I(t − u) M(u) du` by the composite trapezoid rule with `n` panels.
fn trapezoid_convolution(input: &InputFunction, m: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let h = t / n as f64;
    let f = |u: f64| input.eval(t - u) * m(u);
    let inner: f64 = (1..n).map(|k| f(k as f64 * h)).sum();
    h * (inner + 0.5 * (f(0.0) + f(t)))
}

#[test]
fn operator_matches_fine_trapezoid() {
    let tau = 2000.0;
    let dense = DenseGrid::uniform(250, tau).unwrap();
    let mut rng = stream(42, Purpose::Coefficients, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let theta = rng.gen_range(40.0..120.0);
        let input = InputFunction::gamma_variate(theta, 1.0, tau, 0.5).unwrap();
        let rate = libm::pow(10.0, rng.gen_range(-4.0..-1.5));
        let op = ConvolutionOperator::build(&input, &dense).unwrap();
        let x: Vec<f64> = dense.left().iter().map(|s| libm::exp(-rate * s)).collect();
        let approx = op.apply(&x).unwrap();
        let exact: Vec<f64> = dense.right().iter().map(|&t| trapezoid_convolution(&input, |u| libm::exp(-rate * u), t, 10_000)).collect();
        let peak = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = approx.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max) / peak;
        worst = worst.max(err);
    }
    assert!(worst < 0.005, "worst relative error {worst}");
}

#[test]
fn single_interval_and_constant_input() {
    let input = InputFunction::new(vec![0.0, 100.0], vec![1.0, 1.0]).unwrap();
    let dense = DenseGrid::uniform(10, 100.0).unwrap();
    let op = ConvolutionOperator::build(&input, &dense).unwrap();
    let out = op.apply(&[1.0; 10]).unwrap();
    let s = dense.nodes();
    for j in 1..=10 {
        assert!((out[j - 1] - (s[j] + s[j - 1]) / 2.0).abs() < 1e-12);
    }
    assert!((op.get(0, 0) - s[1] / 2.0).abs() < 1e-15);
}

#[test]
fn exponential_mean_integral() {
    let tau = 2000.0;
    let input = InputFunction::default_gamma(tau);
    let dense = DenseGrid::uniform(250, tau).unwrap();
    let op = ConvolutionOperator::build(&input, &dense).unwrap();
    let curve: Vec<f64> = input.convolve_exponential(0.003, dense.right()).iter().map(|v| 0.006 * v).collect();
    let basis = deconvolve_basis(&op, &RowMatrix::from_vec(1, 250, curve).unwrap(), 0.0).unwrap();
    let exact = 0.006 * (1.0 - libm::exp(-0.003 * tau)) / 0.003;
    assert!((basis.integrals[0] / exact - 1.0).abs() < 0.01, "{} vs {exact}", basis.integrals[0]);
}

#[test]
fn zero_curve_deconvolves_to_zero() {
    let dense = DenseGrid::uniform(50, 2000.0).unwrap();
    let op = ConvolutionOperator::build(&InputFunction::default_gamma(2000.0), &dense).unwrap();
    let b = deconvolve_basis(&op, &RowMatrix::zeros(2, 50), 0.0).unwrap();
    assert!(b.mu_d.iter().all(|v| *v == 0.0));
    assert_eq!(b.integrals, vec![0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolve_then_deconvolve(seed in any::<u64>(), theta in 30.0..150.0f64) {
        let dense = DenseGrid::uniform(250, 5400.0).unwrap();
        let input = InputFunction::gamma_variate(theta, 50.0, 5400.0, 1.0).unwrap();
        let op = ConvolutionOperator::build(&input, &dense).unwrap();
        let mut rng = stream(seed, Purpose::Coefficients, 1);
        let x: Vec<f64> = (0..250).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = op.apply(&x).unwrap();
        let back = op.solve(&c).unwrap();
        let num: f64 = back.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(num / den < 1e-8, "relative error {}", num / den);
    }

    #[test]
    fn irf_is_linear(a0 in -2.0..2.0f64, b0 in -2.0..2.0f64, s in prop::collection::vec(-1.0..1.0f64, 6), t in prop::collection::vec(-1.0..1.0f64, 6)) {
        let basis = DeconvolvedBasis {
            mu_d: (0..20).map(|k| (k as f64 * 0.3).sin()).collect(),
            phi_d: RowMatrix::from_fn(6, 20, |r, k| ((r + 1) as f64 * k as f64 * 0.1).cos()),
            integrals: vec![0.0; 7],
            residuals: vec![0.0; 7],
        };
        let sum: Vec<f64> = s.iter().zip(&t).map(|(u, v)| u + v).collect();
        let lhs = reconstruct_irf(&basis, a0 + b0, &sum, 6).unwrap();
        let r1 = reconstruct_irf(&basis, a0, &s, 6).unwrap();
        let r2 = reconstruct_irf(&basis, b0, &t, 6).unwrap();
        for k in 0..20 {
            prop_assert!((lhs[k] - r1[k] - r2[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn vt_map_is_integral_of_reconstruction() {
    let spec = PhantomSpec::simulation1(0.05);
    let ph = synthesize_scan(&spec, 2).unwrap();
    let res = fit(&ph.scan, &spec.input, &FitOptions::default()).unwrap();
    for i in (0..res.vt.len()).step_by(37) {
        let irf = res.irf(i).unwrap();
        let v = integrate_curve(&irf, &res.model.dense).unwrap();
        assert!((v - res.vt[i]).abs() < 1e-10 * (1.0 + v.abs()), "voxel {i}");
    }
}

#[test]
fn deconvolved_compartmental_mean_has_little_ringing() {
    let spec = PhantomSpec::simulation1(0.0);
    let ph = synthesize_scan(&spec, 0).unwrap();
    let res = fit(&ph.scan, &spec.input, &FitOptions::default()).unwrap();
    let mu = &res.basis.mu_d;
    let peak = mu.iter().fold(0.0f64, |a, v| a.max(*v));
    let low = mu[2..].iter().fold(f64::INFINITY, |a, v| a.min(*v));
    assert!(low >= -0.05 * peak, "min {low} against peak {peak}");
}

#[test]
fn ill_conditioned_operator_rejected() {
    // an input that vanishes on the first interval gives a zero diagonal
    let input = InputFunction::new(vec![0.0, 50.0, 100.0], vec![0.0, 0.0, 1.0]).unwrap();
    let dense = DenseGrid::uniform(20, 100.0).unwrap();
    let op = ConvolutionOperator::build(&input, &dense).unwrap();
    assert!(matches!(op.solve(&[1.0; 20]), Err(fpcadeconv_core::Error::IllConditioned { .. })));
    // the ridge path still returns an answer
    assert!(op.solve_ridge(&[1.0; 20], 1e-3).is_ok());
}
