//! Labeled configuration datasets drawn uniformly from the exploration box.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fourbox::{collapse_verdict, FourBoxError, ModelParams, DEFAULT_HORIZON_YEARS, TABLE1_BOUNDS};

pub const CSV_HEADER: &str = "D_low0_m,M_ek_Sv,Fwn_Sv,collapsed,time_of_collapse_years";
pub const GENERATOR_VERSION: &str = concat!("tipping-core/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("split would leave the {side} set without a {class} example")]
    DegenerateSplit { side: &'static str, class: &'static str },
    #[error("digest mismatch for {file}: manifest {expected}, file {actual}")]
    DigestMismatch { file: String, expected: String, actual: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Model(#[from] FourBoxError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledConfig {
    pub d_low0: f64,
    pub m_ek: f64,
    pub fw_n: f64,
    pub collapsed: bool,
    pub time_of_collapse: Option<f64>,
    pub provenance: Provenance,
}

impl LabeledConfig {
    pub fn params(&self, base: &ModelParams) -> ModelParams {
        base.with_perturbation(self.m_ek, self.fw_n, self.d_low0)
    }
}

/// How rows are labeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub base: ModelParams,
    pub horizon_years: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { base: ModelParams::default(), horizon_years: DEFAULT_HORIZON_YEARS }
    }
}

/// Label configurations (M_ek, F_w^n, D_low0) by simulation; output order follows input.
pub fn label_configs(
    configs: &[(f64, f64, f64)],
    cfg: &LabelConfig,
) -> Result<Vec<crate::fourbox::CollapseReport>, FourBoxError> {
    configs
        .par_iter()
        .map(|&(m_ek, fw_n, d_low0)| {
            collapse_verdict(&cfg.base.with_perturbation(m_ek, fw_n, d_low0), cfg.horizon_years)
        })
        .collect()
}

/// `n` uniform draws from the exploration box, each labeled by simulation.
pub fn sample_uniform(n: usize, seed: u64, cfg: &LabelConfig) -> Result<Vec<LabeledConfig>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = TABLE1_BOUNDS;
    let draws: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let d_low0 = rng.gen_range(b.d_low0.0..=b.d_low0.1);
            let m_ek = rng.gen_range(b.m_ek.0..=b.m_ek.1);
            let fw_n = rng.gen_range(b.fw_n.0..=b.fw_n.1);
            (m_ek, fw_n, d_low0)
        })
        .collect();
    let reports = label_configs(&draws, cfg)?;
    let provenance = Provenance { seed, generator_version: GENERATOR_VERSION.to_string() };
    Ok(draws
        .into_iter()
        .zip(reports)
        .map(|((m_ek, fw_n, d_low0), r)| LabeledConfig {
            d_low0,
            m_ek,
            fw_n,
            collapsed: r.collapsed,
            time_of_collapse: r.time_of_collapse,
            provenance: provenance.clone(),
        })
        .collect())
}

/// Stratified split: each class is shuffled and cut at `train_frac`.
pub fn split(
    dataset: &[LabeledConfig],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<LabeledConfig>, Vec<LabeledConfig>), DatasetError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DatasetError::InvalidArgument(format!("train_frac {train_frac} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, name) in [(true, "collapse"), (false, "non-collapse")] {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].collapsed == class).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * train_frac).round() as usize;
        if cut == 0 {
            return Err(DatasetError::DegenerateSplit { side: "train", class: name });
        }
        if cut == idx.len() {
            return Err(DatasetError::DegenerateSplit { side: "test", class: name });
        }
        train_idx.extend_from_slice(&idx[..cut]);
        test_idx.extend_from_slice(&idx[cut..]);
    }
    // Keep the original row order inside each side.
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.into_iter().map(|i| dataset[i].clone()).collect(),
        test_idx.into_iter().map(|i| dataset[i].clone()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_total: usize,
    pub n_collapse: usize,
    pub n_noncollapse: usize,
    pub seed: u64,
    pub generator_version: String,
    pub horizon_years: f64,
    pub split: Option<SplitRatios>,
    pub files: Vec<FileDigest>,
}

impl DatasetManifest {
    pub fn describe(rows: &[LabeledConfig], seed: u64, horizon_years: f64) -> Self {
        let n_collapse = rows.iter().filter(|r| r.collapsed).count();
        Self {
            n_total: rows.len(),
            n_collapse,
            n_noncollapse: rows.len() - n_collapse,
            seed,
            generator_version: GENERATOR_VERSION.to_string(),
            horizon_years,
            split: None,
            files: Vec::new(),
        }
    }

    pub fn collapse_fraction(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.n_collapse as f64 / self.n_total as f64
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_csv(rows: &[LabeledConfig]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let toc = r.time_of_collapse.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", r.d_low0, r.m_ek, r.fw_n, r.collapsed, toc));
    }
    out
}

/// Parse dataset CSV text; line numbers in errors are 1-based and count the header.
pub fn parse_csv(text: &str, provenance: &Provenance) -> Result<Vec<LabeledConfig>, DatasetError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        Some((_, h)) => return Err(DatasetError::MalformedRow { line: 1, reason: format!("unexpected header {h:?}") }),
        None => return Err(DatasetError::MalformedRow { line: 1, reason: "missing header".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DatasetError::MalformedRow { line: line_no, reason };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |k: usize, name: &str| -> Result<f64, DatasetError> {
            let v: f64 = fields[k].parse().map_err(|_| bad(format!("{name}: {:?} is not a number", fields[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{name} is not finite")))
            }
        };
        let d_low0 = num(0, "D_low0_m")?;
        let m_ek = num(1, "M_ek_Sv")?;
        let fw_n = num(2, "Fwn_Sv")?;
        let collapsed = match fields[3] {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("collapsed: {other:?} is not a boolean"))),
        };
        let time_of_collapse = if fields[4].is_empty() { None } else { Some(num(4, "time_of_collapse_years")?) };
        if collapsed != time_of_collapse.is_some() {
            return Err(bad("collapse flag and time of collapse disagree".into()));
        }
        if !TABLE1_BOUNDS.contains(m_ek, fw_n, d_low0) {
            return Err(bad("parameters outside the exploration box".into()));
        }
        rows.push(LabeledConfig { d_low0, m_ek, fw_n, collapsed, time_of_collapse, provenance: provenance.clone() });
    }
    Ok(rows)
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Write `<dir>/<name>.csv` and its manifest; returns the manifest as stored.
pub fn write_dataset(
    dir: &Path,
    name: &str,
    rows: &[LabeledConfig],
    mut manifest: DatasetManifest,
) -> Result<DatasetManifest, DatasetError> {
    fs::create_dir_all(dir)?;
    let csv = to_csv(rows);
    let file = format!("{name}.csv");
    fs::write(dir.join(&file), &csv)?;
    let n_collapse = rows.iter().filter(|r| r.collapsed).count();
    manifest.n_total = rows.len();
    manifest.n_collapse = n_collapse;
    manifest.n_noncollapse = rows.len() - n_collapse;
    manifest.files = vec![FileDigest { file, sha256: sha256_hex(csv.as_bytes()) }];
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    fs::write(manifest_path(&dir.join(format!("{name}.csv"))), json)?;
    Ok(manifest)
}

/// Read a dataset CSV and verify it against the manifest stored next to it.
pub fn read_dataset(csv_path: &Path) -> Result<(Vec<LabeledConfig>, DatasetManifest), DatasetError> {
    let manifest_text = fs::read_to_string(manifest_path(csv_path))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&manifest_text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    let bytes = fs::read(csv_path)?;
    let file = csv_path.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_string();
    let entry = manifest
        .files
        .iter()
        .find(|f| f.file == file)
        .ok_or_else(|| DatasetError::Manifest(format!("no digest recorded for {file}")))?;
    let actual = sha256_hex(&bytes);
    if actual != entry.sha256 {
        return Err(DatasetError::DigestMismatch { file, expected: entry.sha256.clone(), actual });
    }
    let text = String::from_utf8(bytes).map_err(|e| DatasetError::MalformedRow { line: 0, reason: e.to_string() })?;
    let provenance = Provenance { seed: manifest.seed, generator_version: manifest.generator_version.clone() };
    let rows = parse_csv(&text, &provenance)?;
    let n_collapse = rows.iter().filter(|r| r.collapsed).count();
    if rows.len() != manifest.n_total || n_collapse != manifest.n_collapse {
        return Err(DatasetError::Manifest(format!(
            "manifest counts {}/{} do not match file {}/{}",
            manifest.n_collapse,
            manifest.n_total,
            n_collapse,
            rows.len()
        )));
    }
    Ok((rows, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fw_n: f64, collapsed: bool) -> LabeledConfig {
        LabeledConfig {
            d_low0: 200.0,
            m_ek: 20.0,
            fw_n,
            collapsed,
            time_of_collapse: collapsed.then_some(400.0),
            provenance: Provenance { seed: 1, generator_version: GENERATOR_VERSION.into() },
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let rows = vec![row(0.1, false), row(1.4, true)];
        assert!(matches!(split(&rows, 1.0, 0), Err(DatasetError::InvalidArgument(_))));
        assert!(matches!(split(&rows, 0.0, 0), Err(DatasetError::InvalidArgument(_))));
    }

    #[test]
    fn split_needs_both_classes_on_both_sides() {
        let rows: Vec<_> = (0..10).map(|i| row(0.1 + i as f64 * 0.01, false)).chain([row(1.4, true)]).collect();
        assert!(matches!(split(&rows, 0.8, 0), Err(DatasetError::DegenerateSplit { .. })));
        let rows: Vec<_> = (0..10).map(|i| row(0.1 + i as f64 * 0.01, false)).collect();
        assert!(matches!(split(&rows, 0.5, 0), Err(DatasetError::DegenerateSplit { class: "collapse", .. })));
    }

    #[test]
    fn csv_marks_missing_collapse_time_as_empty() {
        let csv = to_csv(&[row(0.3, false), row(1.2, true)]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "200,20,0.3,false,");
        assert_eq!(lines[2], "200,20,1.2,true,400");
    }

    #[test]
    fn malformed_row_reports_line() {
        let prov = Provenance { seed: 0, generator_version: "x".into() };
        let text = format!("{CSV_HEADER}\n200,20,0.3,false,\n200,abc,0.3,false,\n");
        match parse_csv(&text, &prov) {
            Err(DatasetError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = format!("{CSV_HEADER}\n200,20,0.3,true,\n");
        assert!(matches!(parse_csv(&text, &prov), Err(DatasetError::MalformedRow { line: 2, .. })));
    }
}
