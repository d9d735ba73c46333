//! Experiment driver for the regularised Yukawa₂ model: `rustfft` backend,
//! configuration, algebra suites, output artefacts and the command set.

pub mod commands;
pub mod config;
pub mod error;
pub mod fft;
pub mod io;
pub mod suites;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use fft::RustFft;
