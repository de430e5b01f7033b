//! Cross-validated choice of the time multiplier `beta` and the spatial bandwidth.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use super::bandwidth::BandwidthProfile;
use super::kernel::{epanechnikov, local_linear_weights, ENLARGE_FACTOR};
use super::smooth::{spatial_axes_pass, LatticeIndex, SmoothDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, RowMatrix};
use crate::rng::{stream, Purpose};
use crate::scan::{DynamicScan, Layout};

/// Default number of voxels used by the cross-validation criteria.
pub fn default_cv_voxels(n: usize) -> usize {
    n.min(2000)
}

/// Seeded subsample of masked-in voxels, returned in increasing order.
pub fn cv_subsample(scan: &DynamicScan, n_cv: usize, seed: u64) -> Result<Vec<usize>> {
    let active = scan.active();
    if active.is_empty() {
        return Err(Error::EmptyMask);
    }
    if n_cv == 0 {
        return Err(Error::InvalidParameter("cross-validation needs at least one voxel".into()));
    }
    if n_cv >= active.len() {
        return Ok(active);
    }
    let mut rng = stream(seed, Purpose::CvSubsample, 0);
    let mut picked: Vec<usize> = index::sample(&mut rng, active.len(), n_cv).into_iter().map(|k| active[k]).collect();
    picked.sort_unstable();
    Ok(picked)
}

fn argmin_prefer_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] - 1e-12 * scores[best].abs() {
            best = k;
        }
    }
    best
}

/// Leave-one-frame-out error of the time smoother for every `beta` in `grid`.
///
/// The spatial pass (with `profile.h_space`) is applied first, so the
/// criterion scores the time smoother on the data it actually sees.
pub fn beta_cv_scores(scan: &DynamicScan, profile: &BandwidthProfile, beta_grid: &[f64], n_cv: usize, seed: u64) -> Result<Vec<f64>> {
    if beta_grid.is_empty() {
        return Err(Error::Empty("beta grid"));
    }
    let voxels = cv_subsample(scan, n_cv, seed)?;
    let spatial = spatial_pass(scan, profile)?;
    let t = scan.grid().mid();
    let p = t.len();
    let mut w = Vec::new();
    let mut scores = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta grid value {beta} is not positive")));
        }
        let mut loo = RowMatrix::zeros(p, p);
        for j in 0..p {
            w.clear();
            local_linear_weights(t, t[j], beta * profile.time.eval(t[j]), Some(j), &mut w);
            for &(k, l) in &w {
                loo.set(j, k, l);
            }
        }
        let mut err = 0.0;
        for &i in &voxels {
            let y = spatial.row(i);
            for j in 0..p {
                let r = y[j] - crate::linalg::dot(loo.row(j), y);
                err += r * r;
            }
        }
        scores.push(err);
    }
    Ok(scores)
}

/// `beta` minimizing the leave-one-frame-out error; ties go to the smaller value.
pub fn calibrate_beta_cv(scan: &DynamicScan, profile: &BandwidthProfile, beta_grid: &[f64], n_cv: usize, seed: u64) -> Result<f64> {
    let mut grid = beta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let scores = beta_cv_scores(scan, profile, &grid, n_cv, seed)?;
    Ok(grid[argmin_prefer_first(&scores)])
}

/// Scan values after the spatial smoothing pass only (decayed domain).
fn spatial_pass(scan: &DynamicScan, profile: &BandwidthProfile) -> Result<RowMatrix> {
    profile.validate()?;
    Ok(match scan.layout() {
        Layout::Lattice { dims, spacing_mm, positions } => {
            spatial_axes_pass(scan.values(), scan.mask(), *dims, positions, *spacing_mm, profile.h_space, &mut SmoothDiagnostics::default())
        }
        Layout::Curves => scan.values().clone(),
    })
}

/// Leave-one-voxel-out error of a product-kernel local-linear fit in space,
/// summed over frames, for every bandwidth in `h_grid` (mm).
pub fn space_cv_scores(scan: &DynamicScan, h_grid: &[f64], n_cv: usize, seed: u64) -> Result<Vec<f64>> {
    if h_grid.is_empty() {
        return Err(Error::Empty("spatial bandwidth grid"));
    }
    let Layout::Lattice { dims, spacing_mm, positions } = scan.layout() else {
        return Err(Error::InvalidParameter("spatial cross-validation needs a lattice layout".into()));
    };
    let voxels = cv_subsample(scan, n_cv, seed)?;
    let index = LatticeIndex::new(*dims, positions, scan.mask());
    let axes = scan.layout().spatial_axes();
    let p = scan.n_frames();
    let mut scores = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("spatial bandwidth {h} is not positive")));
        }
        let mut err = 0.0;
        let mut pred = vec![0.0; p];
        for &i in &voxels {
            let Some(weights) = loo_spatial_weights(&index, *dims, positions[i], i, *spacing_mm, &axes, h) else {
                continue;
            };
            pred.iter_mut().for_each(|v| *v = 0.0);
            for &(k, l) in &weights {
                crate::linalg::axpy(l, scan.values().row(k), &mut pred);
            }
            for (a, b) in scan.values().row(i).iter().zip(&pred) {
                err += (a - b) * (a - b);
            }
        }
        scores.push(err);
    }
    Ok(scores)
}

/// Spatial bandwidth minimizing the leave-one-voxel-out error; ties go to the smaller value.
pub fn calibrate_space_cv(scan: &DynamicScan, h_grid: &[f64], n_cv: usize, seed: u64) -> Result<f64> {
    let mut grid = h_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let scores = space_cv_scores(scan, &grid, n_cv, seed)?;
    Ok(grid[argmin_prefer_first(&scores)])
}

/// Intercept weights of the local-linear fit at `pos` without voxel `skip`.
/// `None` when no neighbourhood supports a fit.
fn loo_spatial_weights(
    index: &LatticeIndex,
    dims: [usize; 3],
    pos: [usize; 3],
    skip: usize,
    spacing: [f64; 3],
    axes: &[usize],
    h: f64,
) -> Option<Vec<(usize, f64)>> {
    let n_par = axes.len() + 1;
    let max_extent = (0..3).map(|a| dims[a] as f64 * spacing[a]).fold(0.0, f64::max);
    let mut bw = h;
    while bw <= 2.0 * max_extent + h {
        let mut pts: Vec<(usize, f64, [f64; 3])> = Vec::new();
        let reach = |a: usize| if axes.contains(&a) { libm::ceil(bw / spacing[a]) as usize } else { 0 };
        let (r0, r1, r2) = (reach(0), reach(1), reach(2));
        for z in pos[2].saturating_sub(r2)..=(pos[2] + r2).min(dims[2] - 1) {
            for y in pos[1].saturating_sub(r1)..=(pos[1] + r1).min(dims[1] - 1) {
                for x in pos[0].saturating_sub(r0)..=(pos[0] + r0).min(dims[0] - 1) {
                    let Some(k) = index.get([x, y, z]) else { continue };
                    if k == skip {
                        continue;
                    }
                    let q = [x, y, z];
                    let d = [0, 1, 2].map(|a| (q[a] as f64 - pos[a] as f64) * spacing[a]);
                    let w: f64 = axes.iter().map(|&a| epanechnikov(d[a] / bw)).product();
                    if w > 0.0 {
                        pts.push((k, w, d));
                    }
                }
            }
        }
        if pts.len() >= n_par {
            // normal equations of the weighted fit; the intercept row of the
            // inverse gives the smoother weights
            let mut gram = RowMatrix::zeros(n_par, n_par);
            let row = |d: &[f64; 3]| {
                let mut r = vec![1.0];
                r.extend(axes.iter().map(|&a| d[a]));
                r
            };
            for (_, w, d) in &pts {
                let r = row(d);
                for u in 0..n_par {
                    for v in 0..n_par {
                        gram.set(u, v, gram.get(u, v) + w * r[u] * r[v]);
                    }
                }
            }
            let mut e1 = vec![0.0; n_par];
            e1[0] = 1.0;
            if let Ok(c) = cholesky_solve(&gram, &e1) {
                let scale = gram.max_abs();
                let stable = c.iter().all(|v| v.is_finite() && v.abs() * scale < 1e12);
                if stable {
                    return Some(pts.iter().map(|(k, w, d)| (*k, w * crate::linalg::dot(&c, &row(d)))).collect());
                }
            }
        }
        bw *= ENLARGE_FACTOR;
    }
    None
}
