//! File formats, configuration and the stage pipeline around `roadcap-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod pipeline;
pub mod vtk;

pub use config::{load_config, RunConfig};
pub use error::{Result, RunError};
pub use pipeline::{run_pipeline, PipelineRun, RunOptions, Stage};

/// Parses `coarse`, `medium` or `paper` for command-line flags.
pub fn mesh_preset_arg(s: &str) -> std::result::Result<roadcap_core::mesh::MeshPreset, String> {
    s.parse().map_err(|e: roadcap_core::Error| e.to_string())
}
