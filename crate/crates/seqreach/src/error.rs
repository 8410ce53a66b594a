//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Drift or diffusion returned a non-finite number.
    #[error("model evaluation produced a non-finite {what} in coordinate {coord} at state {state:?}, control {control:?}")]
    ModelEval {
        what: &'static str,
        coord: usize,
        state: Vec<f64>,
        control: Vec<f64>,
    },

    /// Explicit time step exceeds the monotonicity bound.
    #[error("time step {dt} violates the CFL bound {bound} (phase {phase})")]
    CflViolation { dt: f64, bound: f64, phase: usize },

    /// Exact stencils are only defined away from the grid edge.
    #[error("node {node} touches the grid edge; the centered stencil is undefined there")]
    StencilBoundary { node: usize },

    /// Malformed or unsupported motion specification.
    #[error("unsupported specification: {0}")]
    Spec(String),

    /// Configuration schema or validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// A command needed artifacts from a previous run.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
