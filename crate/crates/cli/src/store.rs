//! Filesystem layout under the data root:
//!
//! ```text
//! datasets/<id>/{all,train,test}.csv + .manifest.json
//! runs/<id>/{config.json,losses.csv,run.json,checkpoints/}
//! runs/<id>/{samples.csv,audit.json,programs.txt}   after sampling
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tipping_core::dataset::{
    read_dataset, sample_uniform, split, write_dataset, DatasetManifest, LabelConfig, LabeledConfig, SplitRatios,
};
use tipping_core::tipgan::{
    evaluate_discriminator, export_programs, load_run, sample, save_run, train_with_progress, ClassificationMetrics,
    DatasetRef, GanConfig, GeneratedSample, SampleAudit,
};

use crate::error::ApiError;

pub const DATA_ROOT_ENV: &str = "TIPPING_DATA_ROOT";
pub const DEFAULT_DATA_ROOT: &str = "tipping-data";

#[derive(Debug, Clone)]
pub struct DataRoot {
    pub root: PathBuf,
}

/// Ids become directory names, so keep them to a safe alphabet.
pub fn check_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("invalid id {id:?}: use 1-64 characters from [A-Za-z0-9_-]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetRequest {
    pub n: usize,
    pub seed: u64,
    pub train_frac: f64,
    pub split_seed: u64,
}

impl Default for DatasetRequest {
    fn default() -> Self {
        Self { n: 1156, seed: 20240501, train_frac: 0.8, split_seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub all: DatasetManifest,
    pub train: DatasetManifest,
    pub test: DatasetManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub run_id: String,
    pub dataset_id: String,
    pub metrics: Option<ClassificationMetrics>,
    pub metrics_error: Option<String>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub run_id: String,
    pub samples: Vec<GeneratedSample>,
    pub audit: SampleAudit,
    pub programs: Vec<String>,
}

pub const SAMPLES_CSV_HEADER: &str = "generator,D_low0_m,M_ek_Sv,Fwn_Sv,collapsed,time_of_collapse_years";

impl DataRoot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT)))
    }

    pub fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(id)
    }

    pub fn dataset_exists(&self, id: &str) -> bool {
        self.dataset_dir(id).join("all.manifest.json").is_file()
    }

    pub fn run_exists(&self, id: &str) -> bool {
        self.run_dir(id).join("run.json").is_file()
    }

    pub fn create_dataset(&self, id: &str, req: &DatasetRequest) -> Result<DatasetInfo, ApiError> {
        check_id(id)?;
        let label = LabelConfig::default();
        let rows = sample_uniform(req.n, req.seed, &label)?;
        let (train, test) = split(&rows, req.train_frac, req.split_seed)?;
        let dir = self.dataset_dir(id);
        let ratios = SplitRatios { train_frac: req.train_frac, seed: req.split_seed };
        let mut manifests = Vec::new();
        for (name, part) in [("all", &rows), ("train", &train), ("test", &test)] {
            let mut m = DatasetManifest::describe(part, req.seed, label.horizon_years);
            m.split = Some(ratios.clone());
            manifests.push(write_dataset(&dir, name, part, m)?);
        }
        let test = manifests.pop().unwrap();
        let train = manifests.pop().unwrap();
        let all = manifests.pop().unwrap();
        Ok(DatasetInfo { id: id.into(), all, train, test })
    }

    pub fn dataset_info(&self, id: &str) -> Result<DatasetInfo, ApiError> {
        check_id(id)?;
        if !self.dataset_exists(id) {
            return Err(ApiError::not_found("dataset", id));
        }
        let dir = self.dataset_dir(id);
        let (_, all) = read_dataset(&dir.join("all.csv"))?;
        let (_, train) = read_dataset(&dir.join("train.csv"))?;
        let (_, test) = read_dataset(&dir.join("test.csv"))?;
        Ok(DatasetInfo { id: id.into(), all, train, test })
    }

    pub fn load_split(&self, id: &str) -> Result<(Vec<LabeledConfig>, Vec<LabeledConfig>, DatasetManifest), ApiError> {
        check_id(id)?;
        if !self.dataset_exists(id) {
            return Err(ApiError::not_found("dataset", id));
        }
        let dir = self.dataset_dir(id);
        let (train, manifest) = read_dataset(&dir.join("train.csv"))?;
        let (test, _) = read_dataset(&dir.join("test.csv"))?;
        Ok((train, test, manifest))
    }

    /// Train, evaluate on the dataset's test split, and persist the run.
    pub fn train_run(
        &self,
        run_id: &str,
        dataset_id: &str,
        config: &GanConfig,
        progress: impl FnMut(usize, usize),
    ) -> Result<TrainOutcome, ApiError> {
        check_id(run_id)?;
        let (train, test, manifest) = self.load_split(dataset_id)?;
        let mut run = train_with_progress(config, &train, progress)?;
        run.dataset = Some(DatasetRef {
            name: format!("{dataset_id}/train.csv"),
            sha256: manifest.files.first().map(|f| f.sha256.clone()).unwrap_or_default(),
            n_rows: train.len(),
        });
        let (metrics, metrics_error) = match evaluate_discriminator(&run, &test) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        run.metrics = metrics;
        save_run(&run, &self.run_dir(run_id))?;
        Ok(TrainOutcome { run_id: run_id.into(), dataset_id: dataset_id.into(), metrics, metrics_error, epochs: run.history.len() })
    }

    pub fn run_manifest(&self, run_id: &str) -> Result<serde_json::Value, ApiError> {
        check_id(run_id)?;
        if !self.run_exists(run_id) {
            return Err(ApiError::not_found("run", run_id));
        }
        let text = fs::read_to_string(self.run_dir(run_id).join("run.json"))?;
        serde_json::from_str(&text).map_err(|e| ApiError::internal(e.to_string()))
    }

    /// Sample every generator, label with the surrogate, and write samples, audit and programs.
    pub fn sample_run(&self, run_id: &str, n_per_generator: usize, seed: u64) -> Result<SampleOutcome, ApiError> {
        check_id(run_id)?;
        if !self.run_exists(run_id) {
            return Err(ApiError::not_found("run", run_id));
        }
        if n_per_generator == 0 || n_per_generator > 100_000 {
            return Err(ApiError::bad_request("n must be between 1 and 100000"));
        }
        let dir = self.run_dir(run_id);
        let run = load_run(&dir)?;
        let (samples, audit) = sample(&run, n_per_generator, seed)?;
        let programs: Vec<String> = export_programs(&samples, &run.config.varied).iter().map(|p| p.to_string()).collect();
        write_samples(&dir, &samples, &audit, &programs)?;
        Ok(SampleOutcome { run_id: run_id.into(), samples, audit, programs })
    }

    pub fn stored_audit(&self, run_id: &str) -> Result<Option<SampleAudit>, ApiError> {
        check_id(run_id)?;
        if !self.run_exists(run_id) {
            return Err(ApiError::not_found("run", run_id));
        }
        let path = self.run_dir(run_id).join("audit.json");
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map(Some).map_err(|e| ApiError::internal(e.to_string()))
    }
}

fn write_samples(dir: &Path, samples: &[GeneratedSample], audit: &SampleAudit, programs: &[String]) -> Result<(), ApiError> {
    let mut csv = String::from(SAMPLES_CSV_HEADER);
    csv.push('\n');
    for s in samples {
        let toc = s.time_of_collapse.map(|t| t.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{},{},{},{}\n", s.generator, s.d_low0, s.m_ek, s.fw_n, s.collapsed, toc));
    }
    fs::write(dir.join("samples.csv"), csv)?;
    fs::write(dir.join("audit.json"), serde_json::to_string_pretty(audit).expect("audit serializes"))?;
    let mut text = programs.join("\n");
    text.push('\n');
    fs::write(dir.join("programs.txt"), text)?;
    Ok(())
}

pub fn audit_table(audit: &SampleAudit) -> String {
    let mut out = String::from("generator  n_sampled  n_collapsed  collapse_fraction\n");
    for g in &audit.per_generator {
        out.push_str(&format!("{:>9}  {:>9}  {:>11}  {:>17.3}\n", g.generator, g.n_sampled, g.n_collapsed, g.collapse_fraction));
    }
    out
}

pub fn metrics_table(n_generators: usize, m: &ClassificationMetrics) -> String {
    format!(
        "generators  precision  recall  f_measure\n{:>10}  {:>9.3}  {:>6.3}  {:>9.3}\n",
        n_generators, m.precision, m.recall, m.f_measure
    )
}

pub fn json_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or_else(|e| json!({ "error": e.to_string() }))
}
