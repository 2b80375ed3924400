use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::{overturning, rk4, BoxState, Diagnostics, Inventory};
use super::params::ModelParams;
use super::FourBoxError;

pub const DEFAULT_DT_YEARS: f64 = 0.05;
pub const DEFAULT_HORIZON_YEARS: f64 = 3000.0;
pub const DEFAULT_OUTPUT_YEARS: f64 = 1.0;
/// M_n must stay non-positive this long for a sign change to count as collapse.
pub const COLLAPSE_PERSISTENCE_YEARS: f64 = 50.0;

pub const CSV_HEADER: &str =
    "time_years,T_n,T_s,T_l,T_d,S_n,S_s,S_l,S_d,D_low,M_n,M_upw,M_eddy";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub horizon_years: f64,
    pub dt_years: f64,
    pub output_every_years: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            horizon_years: DEFAULT_HORIZON_YEARS,
            dt_years: DEFAULT_DT_YEARS,
            output_every_years: DEFAULT_OUTPUT_YEARS,
        }
    }
}

impl IntegrationConfig {
    pub fn with_horizon(horizon_years: f64) -> Self {
        Self { horizon_years, ..Self::default() }
    }

    fn validate(&self) -> Result<(usize, usize), FourBoxError> {
        let IntegrationConfig { horizon_years, dt_years, output_every_years } = *self;
        if !(dt_years > 0.0 && dt_years.is_finite()) {
            return Err(FourBoxError::InvalidArgument(format!("dt must be positive, got {dt_years}")));
        }
        if !(horizon_years.is_finite() && horizon_years >= dt_years * (1.0 - 1e-9)) {
            return Err(FourBoxError::InvalidArgument(format!(
                "horizon {horizon_years} y shorter than dt {dt_years} y"
            )));
        }
        if !(output_every_years > 0.0) {
            return Err(FourBoxError::InvalidArgument("output interval must be positive".into()));
        }
        let n_steps = ((horizon_years / dt_years).round() as usize).max(1);
        let every = ((output_every_years / dt_years).round() as usize).max(1);
        Ok((n_steps, every))
    }
}

/// Sampled time series of state and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BoxState>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&BoxState> {
        self.states.last()
    }

    pub fn m_n(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.diagnostics.iter().map(|d| d.m_n))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            writeln!(
                out,
                "{t},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.t_n, s.t_s, s.t_l, s.t_d, s.s_n, s.s_s, s.s_l, s.s_d, s.d_low, d.m_n, d.m_upw, d.m_eddy
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Verdict on whether the overturning collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub collapsed: bool,
    pub time_of_collapse: Option<f64>,
    pub final_m_n: f64,
}

/// Streaming collapse detector over (time, M_n) samples.
#[derive(Debug, Clone)]
pub struct CollapseDetector {
    persistence_years: f64,
    seen_positive: bool,
    /// Start of the current non-positive run that follows a positive sample.
    off_since: Option<f64>,
    last: Option<(f64, f64)>,
}

impl CollapseDetector {
    pub fn new(persistence_years: f64) -> Self {
        Self { persistence_years, seen_positive: false, off_since: None, last: None }
    }

    pub fn push(&mut self, time: f64, m_n: f64) {
        if m_n > 0.0 {
            self.seen_positive = true;
            self.off_since = None;
        } else if self.seen_positive && self.off_since.is_none() {
            self.off_since = Some(time);
        }
        self.last = Some((time, m_n));
    }

    pub fn finish(&self) -> Option<CollapseReport> {
        let (t_end, final_m_n) = self.last?;
        let time_of_collapse = self
            .off_since
            .filter(|&t0| t_end - t0 >= self.persistence_years - 1e-9);
        Some(CollapseReport { collapsed: time_of_collapse.is_some(), time_of_collapse, final_m_n })
    }
}

impl Default for CollapseDetector {
    fn default() -> Self {
        Self::new(COLLAPSE_PERSISTENCE_YEARS)
    }
}

/// Drive the stepper, handing each output sample to `sink`.
fn run<F>(params: &ModelParams, init: &BoxState, cfg: &IntegrationConfig, mut sink: F) -> Result<(), FourBoxError>
where
    F: FnMut(f64, &BoxState, &Diagnostics),
{
    params.validate()?;
    init.validate()?;
    let (n_steps, every) = cfg.validate()?;
    let dt = cfg.dt_years;
    let mut inv = Inventory::from_state(init, params);
    sink(0.0, init, &overturning(init, params)?);
    for i in 1..=n_steps {
        let time = i as f64 * dt;
        inv = rk4(&inv, params, dt).map_err(|_| FourBoxError::NumericalBlowup { time_years: Some(time) })?;
        if i % every == 0 || i == n_steps {
            let state = inv.to_state(params);
            if !state.is_finite() {
                return Err(FourBoxError::NumericalBlowup { time_years: Some(time) });
            }
            let diag = overturning(&state, params)
                .map_err(|_| FourBoxError::NumericalBlowup { time_years: Some(time) })?;
            sink(time, &state, &diag);
        }
    }
    Ok(())
}

pub fn integrate(
    params: &ModelParams,
    init: &BoxState,
    horizon_years: f64,
    dt_years: f64,
) -> Result<Trajectory, FourBoxError> {
    integrate_with(
        params,
        init,
        &IntegrationConfig { horizon_years, dt_years, output_every_years: DEFAULT_OUTPUT_YEARS },
    )
}

pub fn integrate_with(
    params: &ModelParams,
    init: &BoxState,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, FourBoxError> {
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new(), diagnostics: Vec::new() };
    run(params, init, cfg, |t, s, d| {
        traj.times.push(t);
        traj.states.push(*s);
        traj.diagnostics.push(*d);
    })?;
    Ok(traj)
}

pub fn detect_collapse(traj: &Trajectory) -> Result<CollapseReport, FourBoxError> {
    let mut det = CollapseDetector::default();
    for (t, m) in traj.m_n() {
        det.push(t, m);
    }
    det.finish().ok_or(FourBoxError::EmptyTrajectory)
}

/// Simulation outcome without materializing the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub report: CollapseReport,
    pub final_state: BoxState,
    pub final_diagnostics: Diagnostics,
}

/// Same result as `integrate_with` followed by `detect_collapse`, without
/// storing the samples.
pub fn simulate(params: &ModelParams, init: &BoxState, cfg: &IntegrationConfig) -> Result<RunSummary, FourBoxError> {
    let mut det = CollapseDetector::default();
    let mut last = None;
    run(params, init, cfg, |t, s, d| {
        det.push(t, d.m_n);
        last = Some((*s, *d));
    })?;
    let (final_state, final_diagnostics) = last.expect("run always emits the initial sample");
    let report = det.finish().expect("run always emits the initial sample");
    Ok(RunSummary { report, final_state, final_diagnostics })
}

/// Collapse verdict for a perturbed configuration from the standard on-state.
pub fn collapse_verdict(params: &ModelParams, horizon_years: f64) -> Result<CollapseReport, FourBoxError> {
    let init = BoxState::initial(params.d_low0);
    Ok(simulate(params, &init, &IntegrationConfig::with_horizon(horizon_years))?.report)
}
