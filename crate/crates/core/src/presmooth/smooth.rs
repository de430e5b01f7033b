use alloc::vec;
use alloc::vec::Vec;

use super::bandwidth::BandwidthProfile;
use super::kernel::{epanechnikov, local_linear_weights, Window};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{lstsq_columns, RowMatrix};
use crate::scan::{DynamicScan, Layout};

/// Counters describing how often kernel windows needed help.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SmoothDiagnostics {
    pub enlarged_windows: usize,
    pub degenerate_windows: usize,
}

impl SmoothDiagnostics {
    pub(crate) fn record(&mut self, w: Window) {
        self.enlarged_windows += w.enlarged as usize;
        self.degenerate_windows += w.degenerate as usize;
    }
}

/// Reconstructed concentrations `Ĉ_i(t_j)` (decay corrected), one row per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedScan {
    pub c_hat: RowMatrix,
    pub profile: BandwidthProfile,
    pub grid: TimeGrid,
    pub diagnostics: SmoothDiagnostics,
}

/// Local-linear smoother along time as a `p x p` matrix: row `j` holds the
/// weights producing the estimate at frame `j`.
pub fn time_smoother_matrix(grid: &TimeGrid, profile: &BandwidthProfile, diag: &mut SmoothDiagnostics) -> RowMatrix {
    let t = grid.mid();
    let p = t.len();
    let mut s = RowMatrix::zeros(p, p);
    let mut w = Vec::new();
    for j in 0..p {
        w.clear();
        diag.record(local_linear_weights(t, t[j], profile.time_bandwidth(t[j]), None, &mut w));
        for &(k, l) in &w {
            s.set(j, k, l);
        }
    }
    s
}

/// Sequential separable smoothing: each spatial axis with bandwidth
/// `h_space`, then time with `beta * h_T(t)`; the result is decay corrected.
pub fn smooth_scan(scan: &DynamicScan, profile: &BandwidthProfile) -> Result<SmoothedScan> {
    profile.validate()?;
    let p = scan.n_frames();
    if p < profile.time.min_obs {
        return Err(Error::InvalidParameter(alloc::format!(
            "scan has {p} frames, fewer than min_obs = {}",
            profile.time.min_obs
        )));
    }
    let mut diagnostics = SmoothDiagnostics::default();
    let mut work = scan.values().clone();
    let mask = scan.mask();

    if let Layout::Lattice { dims, spacing_mm, positions } = scan.layout() {
        work = spatial_axes_pass(&work, mask, *dims, positions, *spacing_mm, profile.h_space, &mut diagnostics);
    }

    let s = time_smoother_matrix(scan.grid(), profile, &mut diagnostics);
    let decay = scan.decay_factors();
    let mut c_hat = RowMatrix::zeros(scan.n_voxels(), p);
    let mut buf = vec![0.0; p];
    for i in 0..scan.n_voxels() {
        let src = work.row(i);
        if mask[i] {
            for j in 0..p {
                buf[j] = crate::linalg::dot(s.row(j), src);
            }
        } else {
            buf.copy_from_slice(src);
        }
        for ((o, b), f) in c_hat.row_mut(i).iter_mut().zip(&buf).zip(&decay) {
            *o = b * f;
        }
    }
    Ok(SmoothedScan { c_hat, profile: profile.clone(), grid: scan.grid().clone(), diagnostics })
}

/// Lookup from lattice position to voxel index (masked-in voxels only).
pub(crate) struct LatticeIndex {
    dims: [usize; 3],
    slots: Vec<u32>,
}

impl LatticeIndex {
    const EMPTY: u32 = u32::MAX;

    pub(crate) fn new(dims: [usize; 3], positions: &[[usize; 3]], mask: &[bool]) -> Self {
        let mut slots = vec![Self::EMPTY; dims[0] * dims[1] * dims[2]];
        for (i, p) in positions.iter().enumerate() {
            if mask[i] {
                slots[p[0] + dims[0] * (p[1] + dims[1] * p[2])] = i as u32;
            }
        }
        Self { dims, slots }
    }

    pub(crate) fn get(&self, p: [usize; 3]) -> Option<usize> {
        let s = self.slots[p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])];
        (s != Self::EMPTY).then_some(s as usize)
    }

    /// Masked-in voxels along `axis` through the line fixed by the other coordinates.
    pub(crate) fn line(&self, axis: usize, fixed: [usize; 3]) -> Vec<(usize, usize)> {
        (0..self.dims[axis])
            .filter_map(|c| {
                let mut p = fixed;
                p[axis] = c;
                self.get(p).map(|i| (c, i))
            })
            .collect()
    }

    /// Every line along `axis`, described by a representative position.
    pub(crate) fn line_starts(&self, axis: usize) -> Vec<[usize; 3]> {
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let mut out = Vec::new();
        for u in 0..self.dims[others[0]] {
            for v in 0..self.dims[others[1]] {
                let mut p = [0; 3];
                p[others[0]] = u;
                p[others[1]] = v;
                out.push(p);
            }
        }
        out
    }
}

/// Local-linear smoothing along every extended lattice axis in turn.
/// Rows of masked-out voxels are copied unchanged.
pub(crate) fn spatial_axes_pass(
    values: &RowMatrix,
    mask: &[bool],
    dims: [usize; 3],
    positions: &[[usize; 3]],
    spacing: [f64; 3],
    h: f64,
    diag: &mut SmoothDiagnostics,
) -> RowMatrix {
    let index = LatticeIndex::new(dims, positions, mask);
    let mut work = values.clone();
    for axis in (0..3).filter(|&a| dims[a] > 1) {
        work = smooth_axis(&work, &index, axis, spacing[axis], h, diag);
    }
    work
}

fn smooth_axis(
    values: &RowMatrix,
    index: &LatticeIndex,
    axis: usize,
    spacing: f64,
    h: f64,
    diag: &mut SmoothDiagnostics,
) -> RowMatrix {
    let mut out = values.clone();
    let p = values.cols();
    let mut w = Vec::new();
    let mut acc = vec![0.0; p];
    for start in index.line_starts(axis) {
        let line = index.line(axis, start);
        if line.is_empty() {
            continue;
        }
        let xs: Vec<f64> = line.iter().map(|&(c, _)| c as f64 * spacing).collect();
        for (target, &(_, voxel)) in line.iter().enumerate() {
            w.clear();
            diag.record(local_linear_weights(&xs, xs[target], h, None, &mut w));
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(k, l) in &w {
                crate::linalg::axpy(l, values.row(line[k].1), &mut acc);
            }
            out.row_mut(voxel).copy_from_slice(&acc);
        }
    }
    out
}

/// Direct local-linear fit with the full product kernel over space and time.
///
/// Per-axis bandwidths (including any window enlargement) are the ones the
/// sequential smoother would use, so the two agree wherever separability
/// holds. Quadratic in the window size; intended for verification.
pub fn smooth_scan_product_kernel(scan: &DynamicScan, profile: &BandwidthProfile) -> Result<SmoothedScan> {
    profile.validate()?;
    let p = scan.n_frames();
    let t = scan.grid().mid();
    let mask = scan.mask();
    let mut diagnostics = SmoothDiagnostics::default();

    // effective time bandwidth per target frame
    let mut scratch = Vec::new();
    let time_bw: Vec<f64> = (0..p)
        .map(|j| {
            scratch.clear();
            let win = local_linear_weights(t, t[j], profile.time_bandwidth(t[j]), None, &mut scratch);
            diagnostics.record(win);
            win.bandwidth
        })
        .collect();

    let (axes, index, dims, spacing, positions) = match scan.layout() {
        Layout::Lattice { dims, spacing_mm, positions } => (
            scan.layout().spatial_axes(),
            Some(LatticeIndex::new(*dims, positions, mask)),
            *dims,
            *spacing_mm,
            positions.as_slice(),
        ),
        Layout::Curves => (Vec::new(), None, [1, 1, 1], [1.0; 3], &[][..]),
    };

    let decay = scan.decay_factors();
    let mut c_hat = decay_correct_rows(scan.values(), &decay);
    let n_par = axes.len() + 2;
    for i in 0..scan.n_voxels() {
        if !mask[i] {
            continue;
        }
        // neighbourhood and per-axis bandwidths
        let mut neighbours: Vec<(usize, [f64; 3])> = alloc::vec![(i, [0.0; 3])];
        let mut bws = [0.0; 3];
        if let Some(index) = &index {
            let pos = positions[i];
            for &a in &axes {
                let line = index.line(a, pos);
                let xs: Vec<f64> = line.iter().map(|&(c, _)| c as f64 * spacing[a]).collect();
                let target = line.iter().position(|&(_, v)| v == i).expect("voxel lies on its own line");
                scratch.clear();
                bws[a] = local_linear_weights(&xs, xs[target], profile.h_space, None, &mut scratch).bandwidth;
            }
            neighbours.clear();
            let reach: Vec<usize> = (0..3)
                .map(|a| if axes.contains(&a) { libm::ceil(bws[a] / spacing[a]) as usize } else { 0 })
                .collect();
            let lo = |a: usize| pos[a].saturating_sub(reach[a]);
            let hi = |a: usize| (pos[a] + reach[a]).min(dims[a] - 1);
            for z in lo(2)..=hi(2) {
                for y in lo(1)..=hi(1) {
                    for x in lo(0)..=hi(0) {
                        if let Some(k) = index.get([x, y, z]) {
                            let q = [x, y, z];
                            let d = [0, 1, 2].map(|a| (q[a] as f64 - pos[a] as f64) * spacing[a]);
                            neighbours.push((k, d));
                        }
                    }
                }
            }
        }
        for j in 0..p {
            let mut rows: Vec<f64> = Vec::new();
            let mut rhs: Vec<f64> = Vec::new();
            for &(k, d) in &neighbours {
                let mut ws = 1.0;
                for &a in &axes {
                    ws *= epanechnikov(d[a] / bws[a]);
                }
                if ws == 0.0 {
                    continue;
                }
                for jj in 0..p {
                    let dt = t[jj] - t[j];
                    let w = ws * epanechnikov(dt / time_bw[j]);
                    if w == 0.0 {
                        continue;
                    }
                    let sw = libm::sqrt(w);
                    rows.push(sw);
                    for &a in &axes {
                        rows.push(sw * d[a]);
                    }
                    rows.push(sw * dt);
                    rhs.push(sw * scan.values().get(k, jj));
                }
            }
            let design = RowMatrix::from_vec(rhs.len(), n_par, rows)?;
            let cols: Vec<usize> = (0..n_par).collect();
            let beta = lstsq_columns(&design, &cols, &rhs).ok_or(Error::Singular("product-kernel window is rank deficient"))?;
            c_hat.set(i, j, beta[0] * decay[j]);
        }
    }
    Ok(SmoothedScan { c_hat, profile: profile.clone(), grid: scan.grid().clone(), diagnostics })
}

fn decay_correct_rows(values: &RowMatrix, decay: &[f64]) -> RowMatrix {
    let mut out = values.clone();
    for i in 0..out.rows() {
        for (v, f) in out.row_mut(i).iter_mut().zip(decay) {
            *v *= f;
        }
    }
    out
}
