//! File formats. Scans and maps are little-endian `f32` rasters next to a JSON
//! header; curves and tables are CSV with a header row. Every writer goes
//! through a temporary file in the target directory and a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fpcadeconv_core::{DynamicScan, InputFunction, Layout, RowMatrix, TimeGrid};

use crate::error::{CliError, Result};

pub const SCAN_FORMAT: &str = "fpcadeconv-scan";
pub const MAP_FORMAT: &str = "fpcadeconv-map";

/// Write `bytes` to `path` via a temporary sibling and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != 4 * expected {
        return Err(CliError::format(path, format!("expected {} bytes, found {}", 4 * expected, bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

/// Sibling of a header path with another extension.
fn sibling(header: &Path, ext: &str) -> PathBuf {
    header.with_extension(ext)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn resolve(header: &Path, name: &str) -> PathBuf {
    header.parent().map(|d| d.join(name)).unwrap_or_else(|| PathBuf::from(name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Lattice,
    Curves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frames {
    pub start: Vec<f64>,
    pub mid: Vec<f64>,
    pub end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanHeader {
    pub format: String,
    pub layout: LayoutKind,
    /// `[nx, ny, nz]`; curves use `[n, 1, 1]`.
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub frames: Frames,
    /// Decay constant in 1/s; 0 when the data are not decayed.
    pub decay_lambda: f64,
    /// Raw data file, one volume per frame with `x` fastest.
    pub data: String,
    /// Optional byte-per-voxel mask file (non-zero = inside).
    pub mask: Option<String>,
}

/// Write `scan` as `<header>` plus `.f32` data and, when some voxels are
/// masked out, a `.mask` file. Lattice scans must cover their full volume in
/// `x`-fastest order.
pub fn write_scan(header_path: &Path, scan: &DynamicScan) -> Result<()> {
    let (kind, dims, spacing_mm) = match scan.layout() {
        Layout::Curves => (LayoutKind::Curves, [scan.n_voxels(), 1, 1], [1.0; 3]),
        Layout::Lattice { dims, spacing_mm, positions } => {
            let Layout::Lattice { positions: full, .. } = Layout::volume(*dims, *spacing_mm) else { unreachable!() };
            if positions != &full {
                return Err(CliError::format(header_path, "lattice scan must cover its full volume in x-fastest order"));
            }
            (LayoutKind::Lattice, *dims, *spacing_mm)
        }
    };
    let n = scan.n_voxels();
    let p = scan.n_frames();
    let values = scan.values();
    let data_path = sibling(header_path, "f32");
    write_atomic(&data_path, &f32_bytes((0..p).flat_map(|j| (0..n).map(move |i| values.get(i, j)))))?;
    let mask = if scan.mask().iter().all(|m| *m) {
        None
    } else {
        let mask_path = sibling(header_path, "mask");
        let bytes: Vec<u8> = scan.mask().iter().map(|m| *m as u8).collect();
        write_atomic(&mask_path, &bytes)?;
        Some(file_name(&mask_path))
    };
    let g = scan.grid();
    let header = ScanHeader {
        format: SCAN_FORMAT.into(),
        layout: kind,
        dims,
        spacing_mm,
        frames: Frames { start: g.start().to_vec(), mid: g.mid().to_vec(), end: g.end().to_vec() },
        decay_lambda: scan.decay_lambda(),
        data: file_name(&data_path),
        mask,
    };
    write_json(header_path, &header)
}

pub fn read_scan(header_path: &Path) -> Result<DynamicScan> {
    let header: ScanHeader = read_json(header_path)?;
    if header.format != SCAN_FORMAT {
        return Err(CliError::format(header_path, format!("unexpected format {:?}", header.format)));
    }
    let n: usize = header.dims.iter().product();
    let f = header.frames;
    let grid = TimeGrid::new(f.start, f.mid, f.end)?;
    let p = grid.len();
    let raw = read_f32(&resolve(header_path, &header.data), n * p)?;
    let values = RowMatrix::from_fn(n, p, |i, j| raw[j * n + i]);
    let mask = match &header.mask {
        Some(name) => {
            let path = resolve(header_path, name);
            let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            if bytes.len() != n {
                return Err(CliError::format(&path, format!("mask has {} voxels, expected {n}", bytes.len())));
            }
            Some(bytes.iter().map(|b| *b != 0).collect())
        }
        None => None,
    };
    let layout = match header.layout {
        LayoutKind::Curves => Layout::Curves,
        LayoutKind::Lattice => Layout::volume(header.dims, header.spacing_mm),
    };
    Ok(DynamicScan::new(values, layout, mask, grid, header.decay_lambda)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapHeader {
    pub format: String,
    /// What the map holds, e.g. `vt`.
    pub quantity: String,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub data: String,
}

/// Per-voxel map with the geometry of `layout`.
pub fn write_map(header_path: &Path, quantity: &str, values: &[f64], layout: &Layout) -> Result<()> {
    let (dims, spacing_mm) = match layout {
        Layout::Curves => ([values.len(), 1, 1], [1.0; 3]),
        Layout::Lattice { dims, spacing_mm, .. } => (*dims, *spacing_mm),
    };
    if dims.iter().product::<usize>() != values.len() {
        return Err(CliError::format(header_path, "map size does not match its geometry"));
    }
    let data_path = sibling(header_path, "f32");
    write_atomic(&data_path, &f32_bytes(values.iter().copied()))?;
    let header = MapHeader { format: MAP_FORMAT.into(), quantity: quantity.into(), dims, spacing_mm, data: file_name(&data_path) };
    write_json(header_path, &header)
}

pub fn read_map(header_path: &Path) -> Result<(MapHeader, Vec<f64>)> {
    let header: MapHeader = read_json(header_path)?;
    if header.format != MAP_FORMAT {
        return Err(CliError::format(header_path, format!("unexpected format {:?}", header.format)));
    }
    let values = read_f32(&resolve(header_path, &header.data), header.dims.iter().product())?;
    Ok((header, values))
}

/// In-memory CSV table of numbers with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

/// CSV bytes of string records with a header row.
pub fn csv_bytes(header: &[String], records: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let records: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()).collect();
    write_atomic(path, &csv_bytes(&table.columns, &records))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let columns: Vec<String> = r.headers().map_err(|e| CliError::format(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::format(path, format!("not a number: {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(CliError::format(path, "ragged row"));
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// Input function as a `t,value` table.
pub fn write_input(path: &Path, input: &InputFunction) -> Result<()> {
    let mut t = Table::new(&["t", "value"]);
    t.rows = input.times().iter().zip(input.values()).map(|(a, b)| vec![*a, *b]).collect();
    write_table(path, &t)
}

pub fn read_input(path: &Path) -> Result<InputFunction> {
    let t = read_table(path)?;
    let (Some(times), Some(values)) = (t.column("t"), t.column("value")) else {
        return Err(CliError::format(path, "input table needs columns t and value"));
    };
    Ok(InputFunction::new(times, values)?)
}

/// Run manifest written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub fpcadeconv: String,
    pub fpcadeconv_core: String,
}

impl Versions {
    pub fn current() -> Self {
        Self { fpcadeconv: env!("CARGO_PKG_VERSION").into(), fpcadeconv_core: fpcadeconv_core::VERSION.into() }
    }
}

/// Fitted FPCA model summary written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub tau: f64,
    /// Dense grid nodes `s_0..s_m`.
    pub dense_nodes: Vec<f64>,
    pub frames: Frames,
    pub beta: f64,
    pub h_space_mm: f64,
    pub eigvals: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub mu_frames: Vec<f64>,
    pub a0: Vec<f64>,
    pub n_components: Vec<usize>,
    pub flat: Vec<bool>,
    /// `n x K` scores, one row per voxel; `None` where the voxel has no finite scores.
    pub scores: Vec<Option<Vec<f64>>>,
    /// `∫ μᵈ` then `∫ φᵈ_k`.
    pub basis_integrals: Vec<f64>,
    pub basis_residuals: Vec<f64>,
}

impl ModelFile {
    pub fn from_fit(res: &fpcadeconv_core::pipeline::FitResult) -> Self {
        let m = &res.model;
        let g = &m.time;
        Self {
            tau: g.tau(),
            dense_nodes: m.dense.nodes().to_vec(),
            frames: Frames { start: g.start().to_vec(), mid: g.mid().to_vec(), end: g.end().to_vec() },
            beta: res.smoothed.profile.beta,
            h_space_mm: res.smoothed.profile.h_space,
            eigvals: m.basis.eigvals.clone(),
            spectrum: m.basis.spectrum.clone(),
            mu_frames: m.mu_frames.clone(),
            a0: m.a0.clone(),
            n_components: m.n_components.clone(),
            flat: m.flat.clone(),
            scores: m.scores.iter_rows().map(|r| r.iter().all(|v| v.is_finite()).then(|| r.to_vec())).collect(),
            basis_integrals: res.basis.integrals.clone(),
            basis_residuals: res.basis.residuals.clone(),
        }
    }
}

/// Mean and eigenfunctions with their deconvolved counterparts on `s_0..s_{m-1}`.
pub fn basis_table(res: &fpcadeconv_core::pipeline::FitResult) -> Table {
    let m = &res.model;
    let k = m.k();
    let mut cols = vec!["s".to_string(), "mu".to_string()];
    cols.extend((1..=k).map(|j| format!("phi_{j}")));
    cols.push("mu_deconv".into());
    cols.extend((1..=k).map(|j| format!("phi_deconv_{j}")));
    let rows = (0..m.dense.m())
        .map(|q| {
            let mut r = vec![m.dense.left()[q], m.mu_dense[q]];
            r.extend((0..k).map(|j| m.basis.dense.get(j, q)));
            r.push(res.basis.mu_d[q]);
            r.extend((0..k).map(|j| res.basis.phi_d.get(j, q)));
            r
        })
        .collect();
    Table { columns: cols, rows }
}
