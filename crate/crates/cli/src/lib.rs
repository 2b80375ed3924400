//! Command-line front end and HTTP/JSON service over `tipping-core`.

pub mod cli;
pub mod error;
pub mod jobs;
pub mod server;
pub mod service;
pub mod store;
