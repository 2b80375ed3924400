//! Tipping-point exploration engine for the Atlantic overturning circulation.
//!
//! - [`fourbox`]: four-box ocean surrogate and collapse detection
//! - [`bifurcation`]: hysteresis sweeps and critical-threshold location
//! - [`dataset`]: labeled configuration datasets
//! - [`nn`]: dense networks with reverse-mode gradients and Adam
//! - [`tipgan`]: multi-generator adversarial explorer
//! - [`dsl`]: perturbation programs, question templates and translation metrics

pub mod bifurcation;
pub mod dsl;
pub mod dataset;
pub mod fourbox;
pub mod nn;
pub mod tipgan;

pub use fourbox::{BoxState, CollapseReport, Diagnostics, ModelParams, Trajectory};
