use proptest::prelude::*;

use fpcadeconv::io::{read_input, read_json, read_map, read_scan, read_table, write_input, write_json, write_map, write_scan, ModelFile, Table};
use fpcadeconv_core::pipeline::{fit, FitOptions};
use fpcadeconv_core::{DynamicScan, InputFunction, Layout, RowMatrix, TimeGrid};

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn curves_scan_round_trip(
        n in 1usize..20,
        p in 2usize..12,
        seed in any::<u64>(),
        decay in 0.0f64..1e-3,
        masked in proptest::collection::vec(any::<bool>(), 20),
    ) {
        let grid = TimeGrid::equally_spaced(p, 600.0).unwrap();
        let values = RowMatrix::from_fn(n, p, |i, j| f32_exact(((seed as f64 + 1.0) * (i * p + j + 1) as f64).sin() * 50.0));
        let mut mask: Vec<bool> = masked[..n].to_vec();
        mask[0] = true;
        let scan = DynamicScan::new(values, Layout::Curves, Some(mask.clone()), grid, decay).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.json");
        write_scan(&path, &scan).unwrap();
        let back = read_scan(&path).unwrap();
        prop_assert_eq!(back.values().as_slice(), scan.values().as_slice());
        prop_assert_eq!(back.mask(), &mask[..]);
        prop_assert_eq!(back.grid().mid(), scan.grid().mid());
        prop_assert_eq!(back.grid().end(), scan.grid().end());
        prop_assert_eq!(back.decay_lambda(), decay);
        prop_assert_eq!(back.layout(), &Layout::Curves);
    }

    #[test]
    fn lattice_scan_round_trip(nx in 1usize..6, ny in 1usize..6, nz in 1usize..3, p in 2usize..6, sx in 0.5f64..4.0) {
        let grid = TimeGrid::equally_spaced(p, 100.0).unwrap();
        let layout = Layout::volume([nx, ny, nz], [sx, 2.0, 3.0]);
        let n = nx * ny * nz;
        let values = RowMatrix::from_fn(n, p, |i, j| (i * 7 + j) as f64 * 0.25);
        let scan = DynamicScan::new(values, layout.clone(), None, grid, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.json");
        write_scan(&path, &scan).unwrap();
        prop_assert!(!dir.path().join("scan.mask").exists());
        let back = read_scan(&path).unwrap();
        prop_assert_eq!(back.layout(), &layout);
        prop_assert_eq!(back.values().as_slice(), scan.values().as_slice());
    }

    #[test]
    fn map_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
        let values: Vec<f64> = values.into_iter().map(f32_exact).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vt.json");
        write_map(&path, "vt", &values, &Layout::Curves).unwrap();
        let (h, back) = read_map(&path).unwrap();
        prop_assert_eq!(h.quantity, "vt");
        prop_assert_eq!(h.dims, [values.len(), 1, 1]);
        prop_assert_eq!(back, values);
    }

    #[test]
    fn table_round_trip(rows in proptest::collection::vec(proptest::collection::vec(any::<f64>(), 3), 0..20)) {
        let mut t = Table::new(&["a", "b", "c"]);
        t.rows = rows;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fpcadeconv::io::write_table(&path, &t).unwrap();
        let back = read_table(&path).unwrap();
        prop_assert_eq!(&back.columns, &t.columns);
        prop_assert_eq!(back.rows.len(), t.rows.len());
        for (r, s) in back.rows.iter().zip(&t.rows) {
            for (x, y) in r.iter().zip(s) {
                prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn input_round_trip(theta in 20.0f64..200.0, tau in 500.0f64..6000.0) {
        let input = InputFunction::gamma_variate(theta, 1.0, tau, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("input.csv");
        write_input(&path, &input).unwrap();
        let back = read_input(&path).unwrap();
        prop_assert_eq!(back.times(), input.times());
        prop_assert_eq!(back.values(), input.values());
    }
}

#[test]
fn model_file_round_trip() {
    let grid = TimeGrid::equally_spaced(30, 1200.0).unwrap();
    let input = InputFunction::default_gamma(1200.0);
    let n = 40;
    let values = RowMatrix::from_fn(n, 30, |i, j| {
        if i == 0 {
            return 0.0;
        }
        let t = grid.mid()[j];
        (1.0 + 0.05 * i as f64) * (1.0 - (-t / 300.0).exp()) + 0.01 * ((i * 13 + j * 7) as f64).sin()
    });
    let scan = DynamicScan::new(values, Layout::Curves, None, grid, 0.0).unwrap();
    let res = fit(&scan, &input, &FitOptions { cv_seed: 5, ..FitOptions::default() }).unwrap();
    let model = ModelFile::from_fit(&res);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    write_json(&path, &model).unwrap();
    let back: ModelFile = read_json(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.scores.len(), n);
}

#[test]
fn malformed_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.json");
    std::fs::write(&path, "{\"format\": \"other\"}").unwrap();
    let err = read_scan(&path).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let t = dir.path().join("t.csv");
    std::fs::write(&t, "a,b\n1,x\n").unwrap();
    assert!(read_table(&t).unwrap_err().to_string().contains("not a number"));
}
