//! Multi-generator adversarial explorer. Generators propose configurations in
//! the exploration box; one discriminator has a collapse head (trained on
//! dataset labels for real rows and surrogate labels for generated rows) and a
//! source head over {real, generator 0, ..., generator n-1}.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{label_configs, sha256_hex, LabelConfig, LabeledConfig};
use crate::dsl::{ParamName, ProgramAst, SetTo};
use crate::fourbox::{FourBoxError, TABLE1_BOUNDS};
use crate::nn::{bce_with_logits, cce_with_logits, sigmoid, softmax, Activation, AdamState, Matrix, Mlp, NnError};

/// Coordinates, in order, of a point in the exploration box.
pub const BOX_PARAMS: [ParamName; 3] = [ParamName::MEk, ParamName::Fwn, ParamName::DLow0];
pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    DivergedTraining { epoch: usize, what: String },
    #[error("{metric} is undefined: zero denominator")]
    UndefinedMetric { metric: &'static str },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("run directory: {0}")]
    RunDir(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] FourBoxError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub n_generators: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Weight of the source-head cross-entropy in the discriminator loss.
    pub lambda_source: f64,
    /// Weight of the collapse push in every generator's loss.
    pub lambda_collapse: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Parameters the generators control; the rest stay at the label defaults.
    pub varied: Vec<ParamName>,
    /// Fresh surrogate labels for generated rows per epoch, shared equally by the generators.
    pub labels_per_epoch: usize,
    /// Labeled generated rows replayed into each discriminator update.
    pub replay_batch: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub label: LabelConfig,
    /// PRNG used for every draw; recorded for portability.
    pub rng: String,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            n_generators: 1,
            epochs: 250,
            batch_size: 64,
            latent_dim: 8,
            lambda_source: 1.0,
            lambda_collapse: 1.0,
            learning_rate: 1e-3,
            seed: 0,
            varied: BOX_PARAMS.to_vec(),
            labels_per_epoch: 16,
            replay_batch: 32,
            generator_hidden: vec![32, 32],
            discriminator_hidden: vec![64, 64],
            label: LabelConfig::default(),
            rng: "ChaCha8".into(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::InvalidConfig(m.into()));
        if self.n_generators == 0 {
            return bad("n_generators must be at least 1");
        }
        if self.batch_size == 0 || self.latent_dim == 0 {
            return bad("batch_size and latent_dim must be positive");
        }
        if !(self.lambda_source >= 0.0 && self.lambda_collapse >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.varied.is_empty() || self.varied.iter().any(|p| !BOX_PARAMS.contains(p)) {
            return bad("varied must be a non-empty subset of M_ek, Fwn, D_low0");
        }
        let mut v = self.varied.clone();
        v.sort_by_key(|p| p.as_str());
        v.dedup();
        if v.len() != self.varied.len() {
            return bad("varied lists a parameter twice");
        }
        if self.rng != "ChaCha8" {
            return bad("only the ChaCha8 generator is supported");
        }
        Ok(())
    }

    fn labels_per_generator(&self) -> usize {
        if self.labels_per_epoch == 0 {
            0
        } else {
            (self.labels_per_epoch / self.n_generators).max(1)
        }
    }

    fn fakes_per_generator(&self) -> usize {
        (self.batch_size / self.n_generators).max(1)
    }
}

/// Box coordinates in model units (Sv, Sv, m) to [0, 1]^3.
pub fn normalize(m_ek: f64, fw_n: f64, d_low0: f64) -> [f64; 3] {
    let b = TABLE1_BOUNDS;
    [
        (m_ek - b.m_ek.0) / (b.m_ek.1 - b.m_ek.0),
        (fw_n - b.fw_n.0) / (b.fw_n.1 - b.fw_n.0),
        (d_low0 - b.d_low0.0) / (b.d_low0.1 - b.d_low0.0),
    ]
}

pub fn denormalize(u: [f64; 3]) -> (f64, f64, f64) {
    let b = TABLE1_BOUNDS;
    let u = u.map(|x| x.clamp(0.0, 1.0));
    (
        b.m_ek.0 + u[0] * (b.m_ek.1 - b.m_ek.0),
        b.fw_n.0 + u[1] * (b.fw_n.1 - b.fw_n.0),
        b.d_low0.0 + u[2] * (b.d_low0.1 - b.d_low0.0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub discriminator_collapse: f64,
    pub discriminator_source: f64,
    pub generators: Vec<f64>,
    /// Surrogate collapse fraction of this epoch's freshly labeled generated rows.
    pub labeled_collapse_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub sha256: String,
    pub n_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl ClassificationMetrics {
    /// Collapse is the positive class.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self, GanError> {
        if tp + fp == 0 {
            return Err(GanError::UndefinedMetric { metric: "precision" });
        }
        if tp + fn_ == 0 {
            return Err(GanError::UndefinedMetric { metric: "recall" });
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        if precision + recall == 0.0 {
            return Err(GanError::UndefinedMetric { metric: "f_measure" });
        }
        let f_measure = 2.0 * precision * recall / (precision + recall);
        Ok(Self { tp, fp, tn, fn_, precision, recall, f_measure })
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Result<Self, GanError> {
        if predicted.len() != actual.len() {
            return Err(GanError::InvalidConfig("prediction and label counts differ".into()));
        }
        let mut c = [0usize; 4];
        for (&p, &a) in predicted.iter().zip(actual) {
            c[match (p, a) {
                (true, true) => 0,
                (true, false) => 1,
                (false, false) => 2,
                (false, true) => 3,
            }] += 1;
        }
        Self::from_counts(c[0], c[1], c[2], c[3])
    }
}

#[derive(Debug, Clone)]
pub struct GanRun {
    pub config: GanConfig,
    pub generators: Vec<Mlp>,
    pub discriminator: Mlp,
    pub history: Vec<EpochLosses>,
    pub dataset: Option<DatasetRef>,
    pub metrics: Option<ClassificationMetrics>,
}

/// Cached per-run constants: default coordinates and the varied mask.
struct Space {
    mask: [bool; 3],
    fixed: [f64; 3],
}

impl Space {
    fn new(cfg: &GanConfig) -> Self {
        let b = &cfg.label.base;
        let fixed = normalize(b.m_ek, b.fw_n, b.d_low0).map(|x| x.clamp(0.0, 1.0));
        let mask = BOX_PARAMS.map(|p| cfg.varied.contains(&p));
        Self { mask, fixed }
    }

    /// Generator output (sigmoid, batch × 3) to unit-box coordinates.
    fn apply(&self, out: &Matrix) -> Matrix {
        let mut u = out.clone();
        for r in 0..u.rows {
            for c in 0..3 {
                if !self.mask[c] {
                    u.set(r, c, self.fixed[c]);
                }
            }
        }
        u
    }
}

/// Discriminator input features for unit-box coordinates.
fn features(u: &Matrix) -> Matrix {
    u.map(|x| 2.0 * x - 1.0)
}

fn latent(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Matrix {
    Matrix { rows, cols: dim, data: (0..rows * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect() }
}

fn unit_rows(rows: &[&LabeledConfig]) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&normalize(r.m_ek, r.fw_n, r.d_low0));
    }
    m
}

fn check_finite(epoch: usize, what: &str, v: f64) -> Result<(), GanError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(GanError::DivergedTraining { epoch, what: what.into() })
    }
}

struct Replay {
    x: Vec<[f64; 3]>,
    y: Vec<f64>,
}

pub fn train(config: &GanConfig, train_set: &[LabeledConfig]) -> Result<GanRun, GanError> {
    train_with_progress(config, train_set, |_, _| {})
}

/// As [`train`], calling `progress(epochs_done, epochs_total)` after each epoch.
pub fn train_with_progress(
    config: &GanConfig,
    train_set: &[LabeledConfig],
    mut progress: impl FnMut(usize, usize),
) -> Result<GanRun, GanError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(GanError::DegenerateData("training set is empty".into()));
    }
    let n_pos = train_set.iter().filter(|r| r.collapsed).count();
    if n_pos == 0 || n_pos == train_set.len() {
        return Err(GanError::DegenerateData("training set needs both collapse and non-collapse rows".into()));
    }
    if train_set.iter().any(|r| !TABLE1_BOUNDS.contains(r.m_ek, r.fw_n, r.d_low0)) {
        return Err(GanError::DegenerateData("training rows outside the exploration box".into()));
    }

    let n = config.n_generators;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gen_sizes = vec![config.latent_dim];
    gen_sizes.extend(&config.generator_hidden);
    gen_sizes.push(3);
    let mut generators: Vec<Mlp> = (0..n)
        .map(|_| Mlp::new(&gen_sizes, Activation::Tanh, Activation::Sigmoid, &mut rng))
        .collect::<Result<_, _>>()?;
    let mut d_sizes = vec![3];
    d_sizes.extend(&config.discriminator_hidden);
    d_sizes.push(1 + n + 1);
    let mut disc = Mlp::new(&d_sizes, Activation::Tanh, Activation::Linear, &mut rng)?;
    let mut d_opt = AdamState::for_net(&disc, config.learning_rate);
    let mut g_opts: Vec<AdamState> = generators.iter().map(|g| AdamState::for_net(g, config.learning_rate)).collect();

    let space = Space::new(config);
    let n_src = n + 1;
    let mut replay = Replay { x: Vec::new(), y: Vec::new() };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sum_dc, mut sum_ds) = (0.0, 0.0);
        let mut sum_g = vec![0.0; n];
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batches += 1;
            let real: Vec<&LabeledConfig> = chunk.iter().map(|&i| &train_set[i]).collect();
            let real_u = unit_rows(&real);
            let b_fake = config.fakes_per_generator();
            let mut fakes = Vec::with_capacity(n);
            for g in &generators {
                let z = latent(&mut rng, b_fake, config.latent_dim);
                fakes.push(space.apply(&g.forward(&z)?));
            }
            let k_replay = config.replay_batch.min(replay.x.len());
            let mut replay_u = Matrix::zeros(k_replay, 3);
            let mut replay_y = Vec::with_capacity(k_replay);
            for r in 0..k_replay {
                let j = rng.gen_range(0..replay.x.len());
                replay_u.row_mut(r).copy_from_slice(&replay.x[j]);
                replay_y.push(replay.y[j]);
            }

            // Discriminator update. Row layout: real, fakes by generator, replay.
            let mut parts: Vec<&Matrix> = vec![&real_u];
            parts.extend(fakes.iter());
            parts.push(&replay_u);
            let x = features(&Matrix::vstack(&parts)?);
            let n_real = real.len();
            let n_fake = n * b_fake;
            let rows = x.rows;
            let logits = disc.forward_train(&x)?;

            let collapse_logits: Vec<f64> = (0..rows).map(|r| logits.get(r, 0)).collect();
            let mut targets = vec![0.0; rows];
            let mut w_c = vec![0.0; rows];
            let labeled = (n_real + k_replay) as f64;
            for r in 0..n_real {
                targets[r] = f64::from(u8::from(real[r].collapsed));
                w_c[r] = rows as f64 / labeled;
            }
            for r in 0..k_replay {
                targets[n_real + n_fake + r] = replay_y[r];
                w_c[n_real + n_fake + r] = rows as f64 / labeled;
            }
            let (l_c, g_c) = bce_with_logits(&collapse_logits, &targets, Some(&w_c))?;

            let src_logits = logits.columns(1..1 + n_src);
            let mut classes = vec![0usize; rows];
            let mut w_s = vec![0.0; rows];
            let sourced = (n_real + n_fake) as f64;
            for r in 0..n_real + n_fake {
                classes[r] = if r < n_real { 0 } else { 1 + (r - n_real) / b_fake };
                w_s[r] = rows as f64 / sourced;
            }
            let (l_s, g_s) = cce_with_logits(&src_logits, &classes, Some(&w_s))?;
            check_finite(epoch, "discriminator loss", l_c + l_s)?;

            let mut d_grad = Matrix::zeros(rows, logits.cols);
            for r in 0..rows {
                d_grad.set(r, 0, g_c[r]);
                for k in 0..n_src {
                    d_grad.set(r, 1 + k, config.lambda_source * g_s.get(r, k));
                }
            }
            let grads = disc.backward(&d_grad)?;
            d_opt.step_net(&mut disc, &grads)?;
            sum_dc += l_c;
            sum_ds += l_s;

            // Generator updates, equally weighted, against the updated discriminator.
            for (g, (gen, opt)) in generators.iter_mut().zip(g_opts.iter_mut()).enumerate() {
                let z = latent(&mut rng, b_fake, config.latent_dim);
                let out = gen.forward_train(&z)?;
                let u = space.apply(&out);
                let logits = disc.forward_train(&features(&u))?;
                let cl: Vec<f64> = (0..u.rows).map(|r| logits.get(r, 0)).collect();
                let (l_push, g_push) = bce_with_logits(&cl, &vec![1.0; u.rows], None)?;
                let (l_fool, g_fool) = cce_with_logits(&logits.columns(1..1 + n_src), &vec![0; u.rows], None)?;
                let loss = l_fool + config.lambda_collapse * l_push;
                check_finite(epoch, &format!("generator {g} loss"), loss)?;
                let mut dl = Matrix::zeros(u.rows, logits.cols);
                for r in 0..u.rows {
                    dl.set(r, 0, config.lambda_collapse * g_push[r]);
                    for k in 0..n_src {
                        dl.set(r, 1 + k, g_fool.get(r, k));
                    }
                }
                let dx = disc.backward(&dl)?.input;
                let mut du = dx.scale(2.0);
                for r in 0..du.rows {
                    for c in 0..3 {
                        if !space.mask[c] {
                            du.set(r, c, 0.0);
                        }
                    }
                }
                let gg = gen.backward(&du)?;
                opt.step_net(gen, &gg)?;
                sum_g[g] += loss;
            }
        }

        // Fresh surrogate labels for generated rows.
        let k = config.labels_per_generator();
        let mut labeled_fraction = None;
        if k > 0 {
            let mut pts: Vec<[f64; 3]> = Vec::with_capacity(k * n);
            for gen in &generators {
                let z = latent(&mut rng, k, config.latent_dim);
                let u = space.apply(&gen.forward(&z)?);
                for r in 0..u.rows {
                    pts.push([u.get(r, 0), u.get(r, 1), u.get(r, 2)]);
                }
            }
            let configs: Vec<(f64, f64, f64)> = pts.iter().map(|&u| denormalize(u)).collect();
            let reports = label_configs(&configs, &config.label)?;
            let n_col = reports.iter().filter(|r| r.collapsed).count();
            labeled_fraction = Some(n_col as f64 / reports.len() as f64);
            for (u, r) in pts.into_iter().zip(reports) {
                replay.x.push(u);
                replay.y.push(f64::from(u8::from(r.collapsed)));
            }
        }

        let b = batches as f64;
        let e = EpochLosses {
            epoch,
            discriminator_collapse: sum_dc / b,
            discriminator_source: sum_ds / b,
            generators: sum_g.iter().map(|s| s / b).collect(),
            labeled_collapse_fraction: labeled_fraction,
        };
        if !disc.is_finite() || generators.iter().any(|g| !g.is_finite()) {
            return Err(GanError::DivergedTraining { epoch, what: "network parameters".into() });
        }
        history.push(e);
        progress(epoch + 1, config.epochs);
    }

    Ok(GanRun { config: config.clone(), generators, discriminator: disc, history, dataset: None, metrics: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorHeads {
    pub collapse_probability: f64,
    /// Index 0 is "real", index g + 1 is generator g.
    pub source: Vec<f64>,
}

impl GanRun {
    /// Both heads for configurations given in model units.
    pub fn discriminate(&self, configs: &[(f64, f64, f64)]) -> Result<Vec<DiscriminatorHeads>, GanError> {
        let mut u = Matrix::zeros(configs.len(), 3);
        for (i, &(m, f, d)) in configs.iter().enumerate() {
            u.row_mut(i).copy_from_slice(&normalize(m, f, d));
        }
        let logits = self.discriminator.forward(&features(&u))?;
        Ok((0..logits.rows)
            .map(|r| DiscriminatorHeads {
                collapse_probability: sigmoid(logits.get(r, 0)),
                source: softmax(&logits.row(r)[1..]),
            })
            .collect())
    }
}

/// Collapse-head classification on held-out rows, threshold 0.5.
pub fn evaluate_discriminator(run: &GanRun, test_set: &[LabeledConfig]) -> Result<ClassificationMetrics, GanError> {
    let configs: Vec<(f64, f64, f64)> = test_set.iter().map(|r| (r.m_ek, r.fw_n, r.d_low0)).collect();
    let heads = run.discriminate(&configs)?;
    let predicted: Vec<bool> = heads.iter().map(|h| h.collapse_probability >= 0.5).collect();
    let actual: Vec<bool> = test_set.iter().map(|r| r.collapsed).collect();
    ClassificationMetrics::from_predictions(&predicted, &actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub generator: usize,
    pub m_ek: f64,
    pub fw_n: f64,
    pub d_low0: f64,
    pub collapsed: bool,
    pub time_of_collapse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorAudit {
    pub generator: usize,
    pub n_sampled: usize,
    pub n_collapsed: usize,
    pub collapse_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAudit {
    pub per_generator: Vec<GeneratorAudit>,
}

/// Draw `n_per_generator` configurations from every generator and label them with the surrogate.
pub fn sample(run: &GanRun, n_per_generator: usize, seed: u64) -> Result<(Vec<GeneratedSample>, SampleAudit), GanError> {
    let cfg = &run.config;
    let space = Space::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meta = Vec::with_capacity(n_per_generator * run.generators.len());
    for (g, gen) in run.generators.iter().enumerate() {
        let z = latent(&mut rng, n_per_generator, cfg.latent_dim);
        let u = space.apply(&gen.forward(&z)?);
        for r in 0..u.rows {
            meta.push((g, denormalize([u.get(r, 0), u.get(r, 1), u.get(r, 2)])));
        }
    }
    let configs: Vec<(f64, f64, f64)> = meta.iter().map(|&(_, c)| c).collect();
    let reports = label_configs(&configs, &cfg.label)?;
    let samples: Vec<GeneratedSample> = meta
        .into_iter()
        .zip(reports)
        .map(|((generator, (m_ek, fw_n, d_low0)), r)| GeneratedSample {
            generator,
            m_ek,
            fw_n,
            d_low0,
            collapsed: r.collapsed,
            time_of_collapse: r.time_of_collapse,
        })
        .collect();
    let per_generator = (0..run.generators.len())
        .map(|g| {
            let n_sampled = samples.iter().filter(|s| s.generator == g).count();
            let n_collapsed = samples.iter().filter(|s| s.generator == g && s.collapsed).count();
            GeneratorAudit {
                generator: g,
                n_sampled,
                n_collapsed,
                collapse_fraction: if n_sampled == 0 { 0.0 } else { n_collapsed as f64 / n_sampled as f64 },
            }
        })
        .collect();
    Ok((samples, SampleAudit { per_generator }))
}

/// One program per sample over `varied`, fluxes in integer m³/s and depths in integer m.
pub fn export_programs(samples: &[GeneratedSample], varied: &[ParamName]) -> Vec<ProgramAst> {
    samples
        .iter()
        .map(|s| {
            let settings = varied
                .iter()
                .filter_map(|&p| {
                    let v = match p {
                        ParamName::MEk => s.m_ek,
                        ParamName::Fwn => s.fw_n,
                        ParamName::DLow0 => s.d_low0,
                        ParamName::Fws => return None,
                    };
                    Some(SetTo { param: p, value: p.from_model_units(v).round() })
                })
                .collect();
            ProgramAst::new(settings)
        })
        .collect()
}

pub const LOSSES_CSV_HEADER: &str = "epoch,discriminator_collapse,discriminator_source,generator_mean,labeled_collapse_fraction";

impl GanRun {
    pub fn losses_csv(&self) -> String {
        let mut out = String::from(LOSSES_CSV_HEADER);
        for g in 0..self.generators.len() {
            out.push_str(&format!(",generator_{g}"));
        }
        out.push('\n');
        for e in &self.history {
            let mean = e.generators.iter().sum::<f64>() / e.generators.len() as f64;
            let frac = e.labeled_collapse_fraction.map(|f| f.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}", e.epoch, e.discriminator_collapse, e.discriminator_source, mean, frac));
            for g in &e.generators {
                out.push_str(&format!(",{g}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: GanConfig,
    pub dataset: Option<DatasetRef>,
    pub metrics: Option<ClassificationMetrics>,
    pub history: Vec<EpochLosses>,
    /// sha256 of each checkpoint file, in generator order then the discriminator.
    pub checkpoints: Vec<(String, String)>,
}

/// Layout: `config.json`, `losses.csv`, `checkpoints/{generator_<g>,discriminator}.json`, `run.json`.
pub fn save_run(run: &GanRun, dir: &Path) -> Result<(), GanError> {
    let ck_dir = dir.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;
    fs::write(dir.join("config.json"), to_json(&run.config))?;
    fs::write(dir.join("losses.csv"), run.losses_csv())?;
    let mut checkpoints = Vec::new();
    let nets = run
        .generators
        .iter()
        .enumerate()
        .map(|(g, net)| (format!("generator_{g}.json"), net))
        .chain(std::iter::once(("discriminator.json".to_string(), &run.discriminator)));
    for (name, net) in nets {
        let text = to_json(&net.checkpoint());
        fs::write(ck_dir.join(&name), &text)?;
        checkpoints.push((format!("checkpoints/{name}"), sha256_hex(text.as_bytes())));
    }
    let manifest = RunManifest {
        format_version: RUN_FORMAT_VERSION,
        config: run.config.clone(),
        dataset: run.dataset.clone(),
        metrics: run.metrics,
        history: run.history.clone(),
        checkpoints,
    };
    fs::write(dir.join("run.json"), to_json(&manifest))?;
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<GanRun, GanError> {
    let text = fs::read_to_string(dir.join("run.json"))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| GanError::RunDir(e.to_string()))?;
    if m.format_version != RUN_FORMAT_VERSION {
        return Err(GanError::RunDir(format!("unsupported run format {}", m.format_version)));
    }
    let mut nets = Vec::with_capacity(m.checkpoints.len());
    for (file, digest) in &m.checkpoints {
        let text = fs::read_to_string(dir.join(file))?;
        if &sha256_hex(text.as_bytes()) != digest {
            return Err(GanError::RunDir(format!("digest mismatch for {file}")));
        }
        let ck = serde_json::from_str(&text).map_err(|e| GanError::RunDir(format!("{file}: {e}")))?;
        nets.push(Mlp::from_checkpoint(&ck)?);
    }
    let discriminator = nets.pop().ok_or_else(|| GanError::RunDir("no checkpoints listed".into()))?;
    if nets.len() != m.config.n_generators {
        return Err(GanError::RunDir("checkpoint count does not match n_generators".into()));
    }
    Ok(GanRun { config: m.config, generators: nets, discriminator, history: m.history, dataset: m.dataset, metrics: m.metrics })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}
