use serde::{Deserialize, Serialize};

use super::ast::{ParamName, ProgramAst};
use super::question::{parse_question, question_to_program};
use super::DslError;
use crate::fourbox::{
    detect_collapse, integrate_with, BoxState, CollapseReport, IntegrationConfig, ModelParams, DEFAULT_HORIZON_YEARS,
    TABLE1_BOUNDS,
};

pub const DEFAULT_PROGRAM_HORIZON: f64 = DEFAULT_HORIZON_YEARS;
/// Spacing of the M_n trace returned by [`ask`].
const TRACE_EVERY_YEARS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    OutOfBounds { param: ParamName, value: f64, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub params: ModelParams,
    pub horizon_years: f64,
    pub report: CollapseReport,
    pub warnings: Vec<Warning>,
}

fn bounds(param: ParamName) -> Option<(f64, f64)> {
    match param {
        ParamName::MEk => Some(TABLE1_BOUNDS.m_ek),
        ParamName::Fwn => Some(TABLE1_BOUNDS.fw_n),
        ParamName::DLow0 => Some(TABLE1_BOUNDS.d_low0),
        ParamName::Fws => None,
    }
}

/// Apply the program's settings over `defaults` (values converted to model units).
pub fn apply_program(ast: &ProgramAst, defaults: &ModelParams) -> (ModelParams, Vec<Warning>) {
    let mut params = *defaults;
    let mut warnings = Vec::new();
    for s in ast.settings() {
        let v = s.param.to_model_units(s.value);
        s.param.apply(&mut params, v);
        if let Some((low, high)) = bounds(s.param) {
            if v < low - 1e-12 || v > high + 1e-12 {
                warnings.push(Warning::OutOfBounds { param: s.param, value: v, low, high });
            }
        }
    }
    (params, warnings)
}

fn resolve_horizon(ast: &ProgramAst, horizon: Option<f64>) -> Result<f64, DslError> {
    let h = ast.within_years.or(horizon).unwrap_or(DEFAULT_PROGRAM_HORIZON);
    if !(h.is_finite() && h > 0.0) {
        return Err(DslError::InvalidValue(format!("horizon {h}")));
    }
    Ok(h)
}

fn run(ast: &ProgramAst, horizon: Option<f64>, defaults: &ModelParams, trace: bool) -> Result<(Interpretation, Vec<TracePoint>), DslError> {
    let horizon_years = resolve_horizon(ast, horizon)?;
    let (params, warnings) = apply_program(ast, defaults);
    params.validate()?;
    let traj = integrate_with(&params, &BoxState::initial(params.d_low0), &IntegrationConfig::with_horizon(horizon_years))?;
    let report = detect_collapse(&traj)?;
    let trace = if trace {
        let stride = (TRACE_EVERY_YEARS / IntegrationConfig::default().output_every_years).round().max(1.0) as usize;
        let last = traj.len() - 1;
        traj.m_n()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i == last)
            .map(|(_, (t, m_n))| TracePoint { t_years: t, m_n })
            .collect()
    } else {
        Vec::new()
    };
    Ok((Interpretation { params, horizon_years, report, warnings }, trace))
}

/// Run a program: did M_n change sign (and stay changed) within the horizon?
/// `Within(t)` in the program takes precedence over `horizon`.
pub fn interpret(ast: &ProgramAst, horizon: Option<f64>, defaults: &ModelParams) -> Result<Interpretation, DslError> {
    Ok(run(ast, horizon, defaults, false)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t_years: f64,
    pub m_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskAnswer {
    pub question: String,
    pub program: String,
    pub horizon_years: f64,
    pub collapsed: bool,
    pub time_of_collapse: Option<f64>,
    pub final_m_n: f64,
    pub warnings: Vec<Warning>,
    pub trace: Vec<TracePoint>,
}

/// Question → program → surrogate answer. The one interpretation path shared by every front end.
pub fn ask(question: &str, defaults: &ModelParams) -> Result<AskAnswer, DslError> {
    let q = parse_question(question)?;
    let ast = question_to_program(&q);
    let (interp, trace) = run(&ast, Some(q.horizon_years), defaults, true)?;
    Ok(AskAnswer {
        question: question.to_string(),
        program: ast.to_string(),
        horizon_years: interp.horizon_years,
        collapsed: interp.report.collapsed,
        time_of_collapse: interp.report.time_of_collapse,
        final_m_n: interp.report.final_m_n,
        warnings: interp.warnings,
        trace,
    })
}
