//! # dgeo
//!
//! The std side of the project: JSON/CSV formats, report bundles with
//! SHA-256 manifests, rayon-backed simulation replications and the `dgeo`
//! command-line front end. All numerics live in [`dgeo_core`], re-exported
//! here as [`core`].

pub mod bundle;
pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;

pub use dgeo_core as core;
pub use error::{CliError, Result};
