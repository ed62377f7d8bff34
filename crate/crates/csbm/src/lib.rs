//! File formats, dataset ingestion, the experiment harness and the `csbm`
//! command-line tool, built on [`csbm_core`].

pub mod cli;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod io;
pub mod stats;

pub use crate::error::{Error, Result};
