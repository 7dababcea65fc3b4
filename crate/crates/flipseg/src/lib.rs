//! File formats, configuration and batch pipelines around `flipseg-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod nifti;
pub mod table;

pub use error::{Error, Result};
