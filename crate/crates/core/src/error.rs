//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("phase unresolvable: Ai({x}) has an oscillation phase below double precision")]
    PhaseUnresolvable { x: f64 },
    #[error("non-convergence in {what}")]
    NonConvergence { what: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unresolved oscillation: {nodes} nodes needed, budget {budget}, phase variation {phase_variation:.3e} rad")]
    UnresolvedOscillation { nodes: usize, budget: usize, phase_variation: f64 },
    #[error("no critical point: {0}")]
    NoCriticalPoint(String),
    #[error("no locus: {0}")]
    NoLocus(String),
    #[error("turning point of mode k={k} at {turning:.3} exceeds x_max - 5 = {limit:.3}")]
    TurningPointOverflow { k: usize, turning: f64, limit: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
