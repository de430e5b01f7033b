//! Arterial input function: a densely sampled, non-negative curve evaluated
//! by piecewise-linear interpolation.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InputFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    /// Sample spacing when the samples are equally spaced; enables O(1) lookup.
    uniform_step: Option<f64>,
    /// `(∫_0^{t_k} I, ∫_0^{t_k} v I(v) dv)` at every sample.
    moments: Vec<(f64, f64)>,
}

impl InputFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("input function"));
        }
        if times.len() != values.len() {
            return Err(Error::LengthMismatch { expected: times.len(), found: values.len() });
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidParameter(format!("input samples must start at t = 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("input sample times must be strictly increasing".into()));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("input value {} at sample {k} is negative or non-finite", values[k])));
        }
        let step = times.get(1).map(|t| t - times[0]);
        let uniform_step = step.filter(|&h| {
            times.iter().enumerate().all(|(k, &t)| (t - k as f64 * h).abs() <= 1e-9 * (1.0 + t))
        });
        let mut moments = Vec::with_capacity(times.len());
        let mut acc = (0.0, 0.0);
        moments.push(acc);
        for k in 1..times.len() {
            let d = segment_moments(times[k - 1], values[k - 1], values[k], times[k] - times[k - 1], times[k] - times[k - 1]);
            acc = (acc.0 + d.0, acc.1 + d.1);
            moments.push(acc);
        }
        Ok(Self { times, values, uniform_step, moments })
    }

    /// Scaled gamma variate `A (t/θ) exp(-t/θ)` with its peak (at `t = θ`)
    /// normalized to `peak`, sampled every `step` seconds up to `t_max`.
    pub fn gamma_variate(theta: f64, peak: f64, t_max: f64, step: f64) -> Result<Self> {
        if !(theta > 0.0 && peak > 0.0 && t_max > 0.0 && step > 0.0) {
            return Err(Error::InvalidParameter("gamma input needs positive theta, peak, t_max and step".into()));
        }
        let n = libm::ceil(t_max / step) as usize;
        let amp = peak * core::f64::consts::E;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
        let values = times.iter().map(|&t| amp * (t / theta) * libm::exp(-t / theta)).collect();
        Self::new(times, values)
    }

    /// Default input used by the simulations: θ = 60 s, unit peak, 0.5 s sampling.
    pub fn default_gamma(t_max: f64) -> Self {
        Self::gamma_variate(60.0, 1.0, t_max, 0.5).expect("static parameters are valid")
    }

    /// Check the curve is positive somewhere on `(0, tau)`.
    pub fn validate_for(&self, tau: f64) -> Result<()> {
        // piecewise linear: positive on a segment overlapping (0, tau) iff an end is positive
        let q = self.times.len();
        let segment = (0..q.saturating_sub(1)).any(|k| self.times[k] < tau && (self.values[k] > 0.0 || self.values[k + 1] > 0.0));
        let tail = self.times[q - 1] < tau && self.values[q - 1] > 0.0;
        let positive = tau > 0.0 && (segment || tail);
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("input function is not positive anywhere on (0, {tau})")))
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(I ⊗ e^{−βt})(t)` at each of `times` (sorted, non-negative), exact for
    /// the piecewise-linear input. `beta` may be 0.
    pub fn convolve_exponential(&self, beta: f64, times: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        // running value E(t) = ∫_0^t I(v) e^{−β(t−v)} dv at the knot `pos`
        let mut pos = 0.0;
        let mut acc = 0.0;
        let mut knot = 0;
        for &t in times {
            debug_assert!(t >= pos, "times must be sorted");
            while knot + 1 < self.times.len() && self.times[knot + 1] <= t {
                let next = self.times[knot + 1];
                acc = acc * libm::exp(-beta * (next - pos)) + segment_integral(beta, next - pos, self.eval(pos), self.values[knot + 1]);
                pos = next;
                knot += 1;
            }
            let e = acc * libm::exp(-beta * (t - pos)) + segment_integral(beta, t - pos, self.eval(pos), self.eval(t));
            out.push(e);
        }
        out
    }

    /// `(∫_0^x I(v) dv, ∫_0^x v I(v) dv)`, exact for the piecewise-linear curve.
    pub fn moments(&self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (0.0, 0.0);
        }
        let q = self.times.len();
        let last = self.times[q - 1];
        if x >= last {
            let (a, b) = self.moments[q - 1];
            let y = self.values[q - 1];
            return (a + y * (x - last), b + y * (x * x - last * last) / 2.0);
        }
        let k = self.segment(x);
        let (a, b) = self.moments[k];
        let len = self.times[k + 1] - self.times[k];
        let d = segment_moments(self.times[k], self.values[k], self.values[k + 1], len, x - self.times[k]);
        (a + d.0, b + d.1)
    }

    fn segment(&self, t: f64) -> usize {
        let q = self.times.len();
        match self.uniform_step {
            Some(h) => ((t / h) as usize).min(q - 2),
            None => self.times.partition_point(|&x| x <= t) - 1,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let q = self.times.len();
        let last = self.times[q - 1];
        if t >= last {
            return self.values[q - 1];
        }
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let a = (t - t0) / (t1 - t0);
        self.values[k] + a * (self.values[k + 1] - self.values[k])
    }
}

/// Moments over `[x0, x0 + d]` of the segment rising linearly from `y0` at
/// `x0` to `y1` at `x0 + len`.
fn segment_moments(x0: f64, y0: f64, y1: f64, len: f64, d: f64) -> (f64, f64) {
    let s = (y1 - y0) / len;
    let m0 = y0 * d + s * d * d / 2.0;
    let m1 = x0 * m0 + y0 * d * d / 2.0 + s * d * d * d / 3.0;
    (m0, m1)
}

/// `∫_0^h (ib + (ia − ib) x / h) e^{−βx} dx`: a linear segment from `ia`
/// (far end) to `ib` (near end) against a decaying exponential.
fn segment_integral(beta: f64, h: f64, ia: f64, ib: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let y = beta * h;
    // ∫_0^h e^{−βx} dx and ∫_0^h x e^{−βx} dx, with series for small βh
    let (e0, e1) = if y.abs() < 1e-4 {
        (h * (1.0 - y / 2.0 + y * y / 6.0), h * h * (0.5 - y / 3.0 + y * y / 8.0))
    } else {
        let em = libm::exp(-y);
        ((1.0 - em) / beta, (1.0 - em * (1.0 + y)) / (beta * beta))
    };
    ib * e0 + (ia - ib) / h * e1
}
