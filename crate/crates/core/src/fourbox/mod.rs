//! Four-box AMOC surrogate: north, south, low-latitude and deep boxes with
//! temperature, salinity and the low-latitude pycnocline depth as prognostic
//! variables, integrated with fixed-step RK4.

mod model;
mod params;
mod trajectory;

use thiserror::Error;

pub use model::{density, overturning, rhs, step, BoxState, Diagnostics};
pub use params::{
    BoxAreas, BoxDepths, Eos, ModelParams, ParamBounds, Restoring, TransportCoeffs, SECONDS_PER_YEAR, SV,
    TABLE1_BOUNDS,
};
pub use trajectory::{
    collapse_verdict, detect_collapse, integrate, integrate_with, simulate, CollapseDetector, CollapseReport,
    IntegrationConfig, RunSummary, Trajectory, COLLAPSE_PERSISTENCE_YEARS, CSV_HEADER, DEFAULT_DT_YEARS,
    DEFAULT_HORIZON_YEARS, DEFAULT_OUTPUT_YEARS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FourBoxError {
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("numerical blow-up{}", match .time_years { Some(t) => format!(" at t = {t} y"), None => String::new() })]
    NumericalBlowup { time_years: Option<f64> },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("trajectory is empty")]
    EmptyTrajectory,
}
