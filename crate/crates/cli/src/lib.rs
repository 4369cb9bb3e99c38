//! Experiment drivers for textcomp: dataset generation, training,
//! evaluation, perturbation and kerning sweeps and the ablation table.

pub mod commands;
pub mod kern;
pub mod plot;
pub mod results;
pub mod spec;

use std::path::PathBuf;

use thiserror::Error;
use textcomp_core::geometry::GeometryError;
use textcomp_core::imaging::ImagingError;
use textcomp_core::model::{ModelError, Variant};
use textcomp_core::synthesis::SynthesisError;
use textcomp_core::templates::TemplateError;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_kern_sweep, cmd_perturb_sweep, cmd_synth, cmd_train, AblationReport, AblationRow,
    Metrics, SynthSummary, TrainOutcome,
};
pub use plot::emit_plot;
pub use results::{AggregateRow, ResultRow, ResultTable};
pub use spec::ExperimentSpec;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("no checkpoint for variant {variant} at {}; run `train` or `ablate` first", .path.display())]
    MissingCheckpoint { variant: Variant, path: PathBuf },
    #[error("word {0:?} has no gap metadata to stretch")]
    MissingGaps(String),
    #[error("results: {0}")]
    Results(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
