//! Request handling shared by the CLI and the HTTP API.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tipping_core::bifurcation::{sweep_freshwater, BifurcationDiagram, DiagramSummary, SweepConfig};
use tipping_core::dsl::{
    ask, parse, parse_question, program_to_question, question_to_program, AskAnswer, DslError,
    DEFAULT_PROGRAM_HORIZON,
};
use tipping_core::fourbox::{detect_collapse, integrate_with, IntegrationConfig};
use tipping_core::{BoxState, CollapseReport, ModelParams};

use crate::error::ApiError;

/// Overrides for the four physical parameters a modeler usually touches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamOverrides {
    pub m_ek: Option<f64>,
    pub fw_n: Option<f64>,
    pub fw_s: Option<f64>,
    pub d_low0: Option<f64>,
}

impl ParamOverrides {
    pub fn apply(&self, mut p: ModelParams) -> ModelParams {
        if let Some(v) = self.m_ek {
            p.m_ek = v;
        }
        if let Some(v) = self.fw_n {
            p.fw_n = v;
        }
        if let Some(v) = self.fw_s {
            p.fw_s = v;
        }
        if let Some(v) = self.d_low0 {
            p.d_low0 = v;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateRequest {
    #[serde(flatten)]
    pub params: ParamOverrides,
    pub horizon_years: f64,
    pub dt_years: f64,
    pub output_every_years: f64,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        let c = IntegrationConfig::default();
        Self {
            params: ParamOverrides::default(),
            horizon_years: c.horizon_years,
            dt_years: c.dt_years,
            output_every_years: c.output_every_years,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub params: ModelParams,
    pub report: CollapseReport,
    pub within_bounds: bool,
    /// Trajectory in the simulate CSV format.
    pub csv: String,
}

pub fn simulate(req: &SimulateRequest, base: &ModelParams) -> Result<SimulateResponse, ApiError> {
    let params = req.params.apply(*base);
    params.validate()?;
    let cfg = IntegrationConfig {
        horizon_years: req.horizon_years,
        dt_years: req.dt_years,
        output_every_years: req.output_every_years,
    };
    let traj = integrate_with(&params, &BoxState::initial(params.d_low0), &cfg)?;
    let report = detect_collapse(&traj)?;
    Ok(SimulateResponse { params, report, within_bounds: params.within_bounds(), csv: traj.to_csv_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepRequest {
    pub m_ek: f64,
    pub d_low0: f64,
    pub fwn_min: f64,
    pub fwn_max: f64,
    pub steps: usize,
    pub tol: f64,
    pub horizon_years: f64,
    pub allow_out_of_bounds: bool,
}

impl Default for SweepRequest {
    fn default() -> Self {
        let c = SweepConfig::default();
        Self {
            m_ek: c.base.m_ek,
            d_low0: c.base.d_low0,
            fwn_min: 0.05,
            fwn_max: 1.55,
            steps: 31,
            tol: c.tol,
            horizon_years: c.horizon_years,
            allow_out_of_bounds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub summary: DiagramSummary,
    pub diagram: BifurcationDiagram,
    pub upward_csv: String,
    pub downward_csv: String,
    pub svg: String,
}

pub fn sweep(req: &SweepRequest, base: &ModelParams) -> Result<SweepResponse, ApiError> {
    if req.steps > 2000 {
        return Err(ApiError::bad_request("steps must be at most 2000"));
    }
    let cfg = SweepConfig {
        base: *base,
        horizon_years: req.horizon_years,
        tol: req.tol,
        allow_out_of_bounds: req.allow_out_of_bounds,
        ..SweepConfig::default()
    };
    let diagram = sweep_freshwater(req.m_ek, req.d_low0, (req.fwn_min, req.fwn_max), req.steps, &cfg)?;
    Ok(SweepResponse {
        summary: diagram.summary(),
        upward_csv: BifurcationDiagram::branch_csv(&diagram.upward_branch),
        downward_csv: BifurcationDiagram::branch_csv(&diagram.downward_branch),
        svg: diagram.to_svg(),
        diagram,
    })
}

/// Files written for a sweep, relative to `dir`.
pub const SWEEP_FILES: [&str; 4] = ["upward.csv", "downward.csv", "summary.json", "diagram.svg"];

pub fn write_sweep(dir: &Path, resp: &SweepResponse) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("upward.csv"), &resp.upward_csv)?;
    fs::write(dir.join("downward.csv"), &resp.downward_csv)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&resp.summary).expect("summary serializes"))?;
    fs::write(dir.join("diagram.svg"), &resp.svg)
}

/// The ask answer as JSON text; CLI `ask --json` and `POST /api/ask` emit exactly this.
pub fn ask_json(question: &str, base: &ModelParams) -> Result<String, ApiError> {
    let answer: AskAnswer = ask(question, base)?;
    Ok(serde_json::to_string(&answer).expect("answer serializes"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslateRequest {
    pub question: Option<String>,
    pub program: Option<String>,
    /// Horizon for program → question when the program has no Within clause.
    pub horizon_years: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub question: String,
    pub program: String,
    pub horizon_years: f64,
    pub program_tokens: Vec<String>,
}

pub fn translate(req: &TranslateRequest) -> Result<TranslateResponse, ApiError> {
    match (&req.question, &req.program) {
        (Some(q), None) => {
            let parsed = parse_question(q)?;
            let ast = question_to_program(&parsed);
            Ok(TranslateResponse {
                question: parsed.to_string(),
                program: ast.to_string(),
                horizon_years: parsed.horizon_years,
                program_tokens: ast.tokens(),
            })
        }
        (None, Some(p)) => {
            let ast = parse(p)?;
            let horizon = ast.within_years.or(req.horizon_years).unwrap_or(DEFAULT_PROGRAM_HORIZON);
            if !(horizon > 0.0 && horizon.is_finite()) {
                return Err(DslError::InvalidValue(format!("horizon {horizon} must be positive")).into());
            }
            Ok(TranslateResponse {
                question: program_to_question(&ast, horizon).to_string(),
                program: ast.to_string(),
                horizon_years: horizon,
                program_tokens: ast.tokens(),
            })
        }
        _ => Err(ApiError::bad_request("give exactly one of question or program")),
    }
}
