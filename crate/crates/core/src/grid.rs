//! Frame timing, the dense deconvolution grid and the quadrature shared by
//! every integral in the pipeline.
//!
//! All curves estimated at frame times are treated as piecewise linear between
//! frame midpoints, held constant before the first and after the last one.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Acquisition frames of a dynamic scan, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    start: Vec<f64>,
    mid: Vec<f64>,
    end: Vec<f64>,
}

impl TimeGrid {
    pub fn new(start: Vec<f64>, mid: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        let p = mid.len();
        if p == 0 {
            return Err(Error::Empty("time grid"));
        }
        if start.len() != p {
            return Err(Error::LengthMismatch { expected: p, found: start.len() });
        }
        if end.len() != p {
            return Err(Error::LengthMismatch { expected: p, found: end.len() });
        }
        for j in 0..p {
            let (s, m, e) = (start[j], mid[j], end[j]);
            if !(s.is_finite() && m.is_finite() && e.is_finite()) {
                return Err(Error::InvalidGrid(format!("frame {j} has non-finite timing")));
            }
            if !(s <= m && m <= e) {
                return Err(Error::InvalidGrid(format!("frame {j}: start <= mid <= end violated")));
            }
            if m <= 0.0 {
                return Err(Error::InvalidGrid(format!("frame {j}: midpoint must be positive")));
            }
            if j + 1 < p {
                if mid[j + 1] <= m {
                    return Err(Error::InvalidGrid(format!("frame midpoints not increasing at {j}")));
                }
                if e > start[j + 1] {
                    return Err(Error::InvalidGrid(format!("frames {j} and {} overlap", j + 1)));
                }
            }
        }
        Ok(Self { start, mid, end })
    }

    /// Contiguous frames starting at t = 0 with the given durations; frame
    /// times are the frame midpoints.
    pub fn from_durations(durations: &[f64]) -> Result<Self> {
        let mut t = 0.0;
        let (mut start, mut mid, mut end) = (Vec::new(), Vec::new(), Vec::new());
        for &d in durations {
            if !(d > 0.0) {
                return Err(Error::InvalidGrid(format!("non-positive frame duration {d}")));
            }
            start.push(t);
            mid.push(t + d / 2.0);
            t += d;
            end.push(t);
        }
        Self::new(start, mid, end)
    }

    /// `n` instantaneous samples at `k * tau / n`, `k = 1..=n`; the last
    /// sample coincides with the end of the experiment.
    pub fn equally_spaced(n: usize, tau: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("time grid"));
        }
        let dt = tau / n as f64;
        let end: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
        let start = core::iter::once(0.0).chain(end[..n - 1].iter().copied()).collect();
        Self::new(start, end.clone(), end)
    }

    /// 32 frames over 5400 s: 8 x 15 s, 8 x 60 s, 8 x 180 s, 8 x 420 s.
    pub fn default_schedule() -> Self {
        let mut d = Vec::with_capacity(32);
        for (len, count) in [(15.0, 8), (60.0, 8), (180.0, 8), (420.0, 8)] {
            d.extend(core::iter::repeat(len).take(count));
        }
        Self::from_durations(&d).expect("static schedule is valid")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mid.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.mid.is_empty()
    }

    pub fn mid(&self) -> &[f64] {
        &self.mid
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn end(&self) -> &[f64] {
        &self.end
    }

    /// End of the experiment.
    pub fn tau(&self) -> f64 {
        self.end[self.end.len() - 1]
    }

    /// Smallest gap between consecutive frame times.
    pub fn min_spacing(&self) -> f64 {
        self.mid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(self.mid[0], f64::min)
    }

    /// Trapezoid weights over frame midpoints for functions that rise
    /// linearly from `(0, 0)` to the first frame and are held constant after
    /// the last, so that they integrate over `[0, tau]`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let t = &self.mid;
        let p = t.len();
        let mut w = alloc::vec![0.0; p];
        for j in 0..p.saturating_sub(1) {
            let h = (t[j + 1] - t[j]) / 2.0;
            w[j] += h;
            w[j + 1] += h;
        }
        w[0] += t[0] / 2.0;
        w[p - 1] += self.tau() - t[p - 1];
        w
    }
}

/// How the nodes of a [`DenseGrid`] are spread over `[0, tau]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenseSpacing {
    #[default]
    Uniform,
    /// Nodes concentrated early, `s_k ∝ exp(3 k / m) - 1`.
    LogEarly,
}

/// Dense grid `s_0 = 0 < s_1 < ... < s_m = tau`.
///
/// Deconvolved functions live on the left endpoints `s_0..s_{m-1}`; convolved
/// curves on `s_1..s_m`. Quadrature weights belong to the left endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl DenseGrid {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid(format!("dense grid needs m >= 1, got {} nodes", nodes.len())));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("dense grid must start at 0, got {}", nodes[0])));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid("dense grid nodes must be strictly increasing".into()));
        }
        let m = nodes.len() - 1;
        let mut weights = Vec::with_capacity(m);
        weights.push(nodes[1] / 2.0);
        for k in 1..m {
            weights.push((nodes[k + 1] - nodes[k - 1]) / 2.0);
        }
        Ok(Self { nodes, weights })
    }

    pub fn uniform(m: usize, tau: f64) -> Result<Self> {
        if m == 0 || !(tau > 0.0) {
            return Err(Error::InvalidGrid(format!("uniform grid needs m >= 1 and tau > 0 (m={m}, tau={tau})")));
        }
        let mut nodes: Vec<f64> = (0..=m).map(|k| tau * k as f64 / m as f64).collect();
        nodes[m] = tau;
        Self::from_nodes(nodes)
    }

    pub fn log_early(m: usize, tau: f64) -> Result<Self> {
        if m == 0 || !(tau > 0.0) {
            return Err(Error::InvalidGrid(format!("log grid needs m >= 1 and tau > 0 (m={m}, tau={tau})")));
        }
        let a = 3.0;
        let denom = libm::expm1(a);
        let mut nodes: Vec<f64> = (0..=m).map(|k| tau * libm::expm1(a * k as f64 / m as f64) / denom).collect();
        nodes[m] = tau;
        Self::from_nodes(nodes)
    }

    pub fn with_spacing(spacing: DenseSpacing, m: usize, tau: f64) -> Result<Self> {
        match spacing {
            DenseSpacing::Uniform => Self::uniform(m, tau),
            DenseSpacing::LogEarly => Self::log_early(m, tau),
        }
    }

    /// Number of intervals.
    #[inline]
    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// All nodes `s_0..s_m`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature nodes `s_0..s_{m-1}`.
    pub fn left(&self) -> &[f64] {
        &self.nodes[..self.m()]
    }

    /// Convolution rows `s_1..s_m`.
    pub fn right(&self) -> &[f64] {
        &self.nodes[1..]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tau(&self) -> f64 {
        self.nodes[self.m()]
    }
}

/// `Σ_k w_k f(s_k)` over the left endpoints.
pub fn integrate_curve(values: &[f64], grid: &DenseGrid) -> Result<f64> {
    if values.len() != grid.m() {
        return Err(Error::LengthMismatch { expected: grid.m(), found: values.len() });
    }
    Ok(crate::linalg::dot(values, grid.weights()))
}

/// Linear interpolation through `(0, 0)` and `(knots[k], values[k])`,
/// held constant after the last knot. Concentration curves vanish at the
/// start of the experiment, so the origin acts as an extra knot. `knots` must
/// be positive, strictly increasing and non-empty.
pub fn interpolate(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let p = knots.len();
    if t <= 0.0 {
        return 0.0;
    }
    if t < knots[0] {
        return values[0] * t / knots[0];
    }
    if t >= knots[p - 1] {
        return values[p - 1];
    }
    let k = knots.partition_point(|&x| x <= t);
    let (t0, t1) = (knots[k - 1], knots[k]);
    let a = (t - t0) / (t1 - t0);
    values[k - 1] + a * (values[k] - values[k - 1])
}

/// Interpolation weights: `f(t) = lo v[index] + hi v[index + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpWeight {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Precompute the weights of [`interpolate`] at `targets`, to resample many
/// curves that share a time axis.
pub fn interpolation_plan(knots: &[f64], targets: &[f64]) -> Vec<InterpWeight> {
    let p = knots.len();
    targets
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                InterpWeight { index: 0, lo: 0.0, hi: 0.0 }
            } else if t < knots[0] {
                InterpWeight { index: 0, lo: t / knots[0], hi: 0.0 }
            } else if t >= knots[p - 1] {
                InterpWeight { index: p - 1, lo: 1.0, hi: 0.0 }
            } else {
                let k = knots.partition_point(|&x| x <= t);
                let a = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
                InterpWeight { index: k - 1, lo: 1.0 - a, hi: a }
            }
        })
        .collect()
}

impl InterpWeight {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        let mut v = self.lo * values[self.index];
        if self.hi != 0.0 {
            v += self.hi * values[self.index + 1];
        }
        v
    }

    /// Add `c` times this weight's row into `g` (the transpose of [`InterpWeight::apply`]).
    #[inline]
    pub fn scatter(&self, c: f64, g: &mut [f64]) {
        g[self.index] += self.lo * c;
        if self.hi != 0.0 {
            g[self.index + 1] += self.hi * c;
        }
    }
}

pub fn apply_plan(plan: &[InterpWeight], values: &[f64], out: &mut [f64]) {
    for (o, w) in out.iter_mut().zip(plan) {
        *o = w.apply(values);
    }
}

/// Frame-time curve resampled on the quadrature nodes `s_0..s_{m-1}`.
pub fn interpolate_to_dense(curve: &[f64], time: &TimeGrid, dense: &DenseGrid) -> Result<Vec<f64>> {
    resample(curve, time, dense.left())
}

/// Frame-time curve resampled on the convolution rows `s_1..s_m`.
pub fn interpolate_to_rows(curve: &[f64], time: &TimeGrid, dense: &DenseGrid) -> Result<Vec<f64>> {
    resample(curve, time, dense.right())
}

fn resample(curve: &[f64], time: &TimeGrid, targets: &[f64]) -> Result<Vec<f64>> {
    if curve.is_empty() {
        return Err(Error::Empty("curve"));
    }
    if curve.len() != time.len() {
        return Err(Error::LengthMismatch { expected: time.len(), found: curve.len() });
    }
    Ok(targets.iter().map(|&t| interpolate(time.mid(), curve, t)).collect())
}
