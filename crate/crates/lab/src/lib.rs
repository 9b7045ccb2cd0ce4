//! File formats, manifests, bench configuration and the subcommands of the
//! `dpl` denoising lab.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;

pub use error::{LabError, LabResult};
