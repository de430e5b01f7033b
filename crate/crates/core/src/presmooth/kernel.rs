//! One-dimensional local-linear smoothing weights with the Epanechnikov kernel.

use alloc::vec::Vec;

/// Growth factor applied to a bandwidth whose window is too sparse.
pub const ENLARGE_FACTOR: f64 = 1.25;
const MAX_ENLARGEMENTS: usize = 200;

#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Outcome of building one local window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    /// Bandwidth actually used.
    pub bandwidth: f64,
    /// The nominal bandwidth had to be enlarged.
    pub enlarged: bool,
    /// Fewer than two distinct support points exist at any bandwidth; the
    /// estimate falls back to the nearest available value.
    pub degenerate: bool,
}

/// Weights `l_k` such that the local-linear estimate at `x0` is
/// `Σ l_k y_k`, appended to `out` as `(k, l_k)`.
///
/// `skip` excludes one support point (leave-one-out). The window is enlarged
/// by [`ENLARGE_FACTOR`] until at least two distinct positions carry positive
/// kernel weight.
pub fn local_linear_weights(xs: &[f64], x0: f64, h: f64, skip: Option<usize>, out: &mut Vec<(usize, f64)>) -> Window {
    let start = out.len();
    let mut bw = h;
    for attempt in 0..MAX_ENLARGEMENTS {
        out.truncate(start);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (k, &x) in xs.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let d = x - x0;
            let w = epanechnikov(d / bw);
            if w > 0.0 {
                s0 += w;
                s1 += w * d;
                s2 += w * d * d;
                lo = lo.min(x);
                hi = hi.max(x);
                out.push((k, w));
            }
        }
        let denom = s0 * s2 - s1 * s1;
        if hi > lo && denom > 1e-12 * s0 * s2 {
            for (k, w) in out[start..].iter_mut() {
                let d = xs[*k] - x0;
                *w = *w * (s2 - d * s1) / denom;
            }
            return Window { bandwidth: bw, enlarged: attempt > 0, degenerate: false };
        }
        bw *= ENLARGE_FACTOR;
    }
    // at most one distinct support position: hold the nearest value
    out.truncate(start);
    let nearest = xs
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != skip)
        .min_by(|a, b| (a.1 - x0).abs().total_cmp(&(b.1 - x0).abs()));
    if let Some((k, _)) = nearest {
        out.push((k, 1.0));
    }
    Window { bandwidth: bw, enlarged: true, degenerate: true }
}
