use std::fs;

use tipping_core::bifurcation::{collapse_region_map, RegionGrid, SweepConfig};
use tipping_core::dataset::{
    read_dataset, sample_uniform, split, write_dataset, DatasetError, DatasetManifest, LabelConfig, LabeledConfig,
    CSV_HEADER,
};
use tipping_core::fourbox::{collapse_verdict, TABLE1_BOUNDS};

/// One-sample Kolmogorov-Smirnov statistic against U(lo, hi).
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x - lo) / (hi - lo);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn full_dataset() -> Vec<LabeledConfig> {
    sample_uniform(1156, 20240501, &LabelConfig::default()).unwrap()
}

#[test]
fn full_size_dataset_properties() {
    let rows = full_dataset();
    assert_eq!(rows.len(), 1156);
    let b = TABLE1_BOUNDS;
    assert!(rows.iter().all(|r| b.contains(r.m_ek, r.fw_n, r.d_low0)));

    let share = rows.iter().filter(|r| r.collapsed).count() as f64 / rows.len() as f64;
    assert!((0.25..=0.75).contains(&share), "collapse share {share}");

    // 1% two-sided critical value, asymptotic form.
    let crit = 1.628 / (rows.len() as f64).sqrt();
    for (name, xs, (lo, hi)) in [
        ("m_ek", rows.iter().map(|r| r.m_ek).collect::<Vec<_>>(), b.m_ek),
        ("fw_n", rows.iter().map(|r| r.fw_n).collect(), b.fw_n),
        ("d_low0", rows.iter().map(|r| r.d_low0).collect(), b.d_low0),
    ] {
        let d = ks_uniform(xs, lo, hi);
        assert!(d < crit, "{name}: KS {d} >= {crit}");
    }

    let (train, test) = split(&rows, 0.8, 3).unwrap();
    assert!((train.len() as i64 - 925).abs() <= 1 && (test.len() as i64 - 231).abs() <= 1);
    let frac = |s: &[LabeledConfig]| s.iter().filter(|r| r.collapsed).count() as f64 / s.len() as f64;
    assert!((frac(&train) - share).abs() <= 0.02 && (frac(&test) - share).abs() <= 0.02);

    // Region-map volume estimate agrees with the sampled share.
    let map = collapse_region_map(RegionGrid::uniform(9), &SweepConfig::default()).unwrap();
    assert!(map.nodes.iter().all(|n| n.collapsed.is_some()));
    assert!((map.collapse_fraction() - share).abs() <= 0.1, "grid {} vs sample {share}", map.collapse_fraction());
}

#[test]
fn same_seed_same_rows() {
    let cfg = LabelConfig::default();
    let a = sample_uniform(40, 9, &cfg).unwrap();
    let b = sample_uniform(40, 9, &cfg).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_uniform(40, 10, &cfg).unwrap());
}

#[test]
fn zero_rows_rejected() {
    assert!(matches!(sample_uniform(0, 1, &LabelConfig::default()), Err(DatasetError::InvalidArgument(_))));
}

#[test]
fn split_partitions_and_repeats() {
    let rows = sample_uniform(200, 4, &LabelConfig::default()).unwrap();
    let (train, test) = split(&rows, 0.7, 11).unwrap();
    assert_eq!(train.len() + test.len(), rows.len());
    let key = |r: &LabeledConfig| (r.m_ek.to_bits(), r.fw_n.to_bits(), r.d_low0.to_bits());
    let mut all: Vec<_> = train.iter().chain(&test).map(key).collect();
    all.sort_unstable();
    let mut orig: Vec<_> = rows.iter().map(key).collect();
    orig.sort_unstable();
    assert_eq!(all, orig);
    assert_eq!(split(&rows, 0.7, 11).unwrap(), (train, test));
}

#[test]
fn files_round_trip_and_detect_tampering() {
    let cfg = LabelConfig::default();
    let rows = sample_uniform(120, 77, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), "train", &rows, DatasetManifest::describe(&rows, 77, cfg.horizon_years)).unwrap();
    assert_eq!(manifest.n_total, manifest.n_collapse + manifest.n_noncollapse);

    let csv_path = dir.path().join("train.csv");
    let (back, m2) = read_dataset(&csv_path).unwrap();
    assert_eq!(back, rows);
    assert_eq!(m2, manifest);
    assert_eq!(m2.n_collapse, back.iter().filter(|r| r.collapsed).count());

    // Stored labels survive re-simulation.
    for r in &back {
        let report = collapse_verdict(&r.params(&cfg.base), cfg.horizon_years).unwrap();
        assert_eq!(report.collapsed, r.collapsed);
        assert_eq!(report.time_of_collapse, r.time_of_collapse);
    }

    let text = fs::read_to_string(&csv_path).unwrap();
    let tampered = text.replacen("true", "false", 1);
    fs::write(&csv_path, &tampered).unwrap();
    assert!(matches!(read_dataset(&csv_path), Err(DatasetError::DigestMismatch { .. })));

    // A corrupted fourth data row, with a manifest that matches the corrupted bytes.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    assert_eq!(lines[0], CSV_HEADER);
    lines[4] = "250,not-a-number,0.5,false,".into();
    let corrupted = lines.join("\n") + "\n";
    fs::write(&csv_path, &corrupted).unwrap();
    let mut m3 = manifest.clone();
    m3.files[0].sha256 = tipping_core::dataset::sha256_hex(corrupted.as_bytes());
    fs::write(dir.path().join("train.manifest.json"), serde_json::to_string(&m3).unwrap()).unwrap();
    match read_dataset(&csv_path) {
        Err(DatasetError::MalformedRow { line, .. }) => assert_eq!(line, 5),
        other => panic!("expected MalformedRow, got {other:?}"),
    }
}
