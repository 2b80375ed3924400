use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tipping_core::dsl::{
    ask, evaluate_translations, generate_corpus, read_corpus_jsonl, write_corpus_jsonl, DeterministicTranslator,
    Normalization,
};
use tipping_core::tipgan::GanConfig;
use tipping_core::ModelParams;

use crate::error::ApiError;
use crate::server::{serve, AppState};
use crate::service::{self, ParamOverrides, SimulateRequest, SweepRequest, TranslateRequest};
use crate::store::{audit_table, metrics_table, DataRoot, DatasetRequest, DATA_ROOT_ENV, DEFAULT_DATA_ROOT};

#[derive(Debug, Parser)]
#[command(name = "tipping", version, about = "Four-box AMOC tipping-point explorer")]
pub struct Cli {
    /// Directory holding datasets/ and runs/.
    #[arg(long, global = true, env = DATA_ROOT_ENV, default_value = DEFAULT_DATA_ROOT)]
    pub data_root: PathBuf,
    /// TOML file with base model parameters (defaults when omitted).
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the box model and report whether the overturning collapses.
    Simulate(SimulateArgs),
    /// Trace both hysteresis branches over a freshwater range.
    Sweep(SweepArgs),
    /// Labeled dataset management.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train and sample the adversarial explorer.
    Gan {
        #[command(subcommand)]
        command: GanCommand,
    },
    /// Translate a question to a program or a program to a question.
    Translate(TranslateArgs),
    /// Question and program corpus tools.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Answer a what-if question with the surrogate.
    Ask(AskArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// Ekman transport, Sv.
    #[arg(long)]
    pub m_ek: Option<f64>,
    /// Northern freshwater flux, Sv.
    #[arg(long)]
    pub fw_n: Option<f64>,
    /// Southern freshwater flux, Sv.
    #[arg(long)]
    pub fw_s: Option<f64>,
    /// Initial pycnocline depth, m.
    #[arg(long)]
    pub d_low0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 3000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub output_every: f64,
    /// Write the trajectory here and print the verdict as JSON; otherwise the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 25.0)]
    pub m_ek: f64,
    #[arg(long, default_value_t = 400.0)]
    pub d_low0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub fwn_min: f64,
    #[arg(long, default_value_t = 1.55)]
    pub fwn_max: f64,
    #[arg(long, default_value_t = 31)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Receives upward.csv, downward.csv, summary.json and diagram.svg.
    #[arg(long, default_value = "sweep")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub allow_out_of_bounds: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Sample, label, split and write a dataset under the data root.
    Gen {
        #[arg(long, default_value = "default")]
        id: String,
        #[arg(long, default_value_t = 1156)]
        n: usize,
        #[arg(long, default_value_t = 20240501)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 1)]
        split_seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum GanCommand {
    /// Train a run; the dataset is generated with default settings when missing.
    Train(TrainArgs),
    /// Draw samples from every generator and label them with the surrogate.
    Sample {
        #[arg(long)]
        run_id: String,
        /// Samples per generator.
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the full outcome as JSON instead of the audit table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Defaults to n<generators>-s<seed>-e<epochs>.
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long, default_value = "default")]
    pub dataset: String,
    #[arg(long, default_value_t = 1)]
    pub generators: usize,
    #[arg(long, default_value_t = 250)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with a full training configuration; the flags above override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace an existing run directory.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long, conflicts_with = "program", required_unless_present = "program")]
    pub question: Option<String>,
    #[arg(long)]
    pub program: Option<String>,
    /// Horizon for a program without a Within clause, years.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Write a generated question/program corpus as JSON lines.
    Gen {
        #[arg(long, default_value_t = 1066)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the deterministic translator on a corpus in both directions.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Receives report.json and cdf.csv.
        #[arg(long, default_value = "translation-report")]
        out_dir: PathBuf,
        #[arg(long)]
        yujian_bo: bool,
    },
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub question: String,
    /// Print the answer as JSON, byte-identical to POST /api/ask.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Static assets served for paths outside /api.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn base_params(path: &Option<PathBuf>) -> Result<ModelParams, ApiError> {
    match path {
        None => Ok(ModelParams::default()),
        Some(p) => Ok(ModelParams::from_toml_str(&fs::read_to_string(p)?)?),
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

pub fn run(cli: Cli) -> Result<(), ApiError> {
    let base = base_params(&cli.params)?;
    let store = DataRoot::new(&cli.data_root);
    match cli.command {
        Command::Simulate(a) => {
            let req = SimulateRequest {
                params: ParamOverrides { m_ek: a.params.m_ek, fw_n: a.params.fw_n, fw_s: a.params.fw_s, d_low0: a.params.d_low0 },
                horizon_years: a.horizon,
                dt_years: a.dt,
                output_every_years: a.output_every,
            };
            let resp = service::simulate(&req, &base)?;
            let verdict = json!({ "report": resp.report, "within_bounds": resp.within_bounds });
            match a.out {
                Some(path) => {
                    fs::write(&path, &resp.csv)?;
                    print_json(&verdict);
                }
                None => {
                    std::io::stdout().write_all(resp.csv.as_bytes())?;
                    eprintln!("{}", serde_json::to_string(&verdict).expect("serializable"));
                }
            }
        }
        Command::Sweep(a) => {
            let req = SweepRequest {
                m_ek: a.m_ek,
                d_low0: a.d_low0,
                fwn_min: a.fwn_min,
                fwn_max: a.fwn_max,
                steps: a.steps,
                tol: a.tol,
                allow_out_of_bounds: a.allow_out_of_bounds,
                ..SweepRequest::default()
            };
            let resp = service::sweep(&req, &base)?;
            service::write_sweep(&a.out_dir, &resp)?;
            print_json(&resp.summary);
        }
        Command::Dataset { command: DatasetCommand::Gen { id, n, seed, train_frac, split_seed } } => {
            let info = store.create_dataset(&id, &DatasetRequest { n, seed, train_frac, split_seed })?;
            print_json(&info);
        }
        Command::Gan { command: GanCommand::Train(a) } => {
            let mut config = match &a.config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                    .map_err(|e| ApiError::bad_request(format!("{}: {e}", p.display())))?,
                None => GanConfig::default(),
            };
            config.n_generators = a.generators;
            config.epochs = a.epochs;
            config.seed = a.seed;
            config.validate()?;
            let run_id = a.run_id.unwrap_or_else(|| format!("n{}-s{}-e{}", a.generators, a.seed, a.epochs));
            if store.run_exists(&run_id) {
                if !a.overwrite {
                    return Err(ApiError::conflict(
                        format!("run {run_id:?} already exists; pass --overwrite to replace it"),
                        json!({ "run_id": run_id }),
                    ));
                }
                fs::remove_dir_all(store.run_dir(&run_id))?;
            }
            if !store.dataset_exists(&a.dataset) {
                eprintln!("generating dataset {:?}", a.dataset);
                store.create_dataset(&a.dataset, &DatasetRequest::default())?;
            }
            let outcome = store.train_run(&run_id, &a.dataset, &config, |done, total| {
                if done % 50 == 0 || done == total {
                    eprintln!("epoch {done}/{total}");
                }
            })?;
            println!("run {} written to {}", run_id, store.run_dir(&run_id).display());
            match (&outcome.metrics, &outcome.metrics_error) {
                (Some(m), _) => print!("{}", metrics_table(config.n_generators, m)),
                (None, Some(e)) => println!("test metrics unavailable: {e}"),
                (None, None) => {}
            }
        }
        Command::Gan { command: GanCommand::Sample { run_id, n, seed, json } } => {
            let out = store.sample_run(&run_id, n, seed)?;
            if json {
                print_json(&out);
            } else {
                print!("{}", audit_table(&out.audit));
            }
        }
        Command::Translate(a) => {
            let resp = service::translate(&TranslateRequest { question: a.question, program: a.program, horizon_years: a.horizon })?;
            print_json(&resp);
        }
        Command::Corpus { command: CorpusCommand::Gen { n, seed, out } } => {
            let entries = generate_corpus(n, seed)?;
            write_corpus_jsonl(&entries, std::io::BufWriter::new(fs::File::create(&out)?))?;
            println!("{} pairs written to {}", entries.len(), out.display());
        }
        Command::Corpus { command: CorpusCommand::Eval { corpus, out_dir, yujian_bo } } => {
            let entries = read_corpus_jsonl(std::io::BufReader::new(fs::File::open(&corpus)?))?;
            let norm = if yujian_bo { Normalization::YujianBo } else { Normalization::MaxLength };
            let report = evaluate_translations(&DeterministicTranslator, &entries, norm);
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("report.json"), report.to_json())?;
            fs::write(out_dir.join("cdf.csv"), report.cdf_csv())?;
            for (name, d) in [("question->program", &report.question_to_program), ("program->question", &report.program_to_question)] {
                println!(
                    "{name}: n={} exact_match={:.4} token_accuracy={:.4} normalized_levenshtein={:.4}",
                    d.n, d.exact_match, d.token_accuracy, d.normalized_levenshtein
                );
            }
        }
        Command::Ask(a) => {
            if a.json {
                println!("{}", service::ask_json(&a.question, &base)?);
            } else {
                let answer = ask(&a.question, &base)?;
                println!("{}", answer.program);
                let when = answer.time_of_collapse.map(|t| format!(" (M_n changes sign at {t} years)")).unwrap_or_default();
                println!("{}{when}", if answer.collapsed { "yes" } else { "no" });
                for w in &answer.warnings {
                    eprintln!("warning: {}", serde_json::to_string(w).expect("serializable"));
                }
            }
        }
        Command::Serve(a) => {
            let state = AppState::new(store, base);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve(state, &a.addr, a.static_dir))?;
        }
    }
    Ok(())
}
