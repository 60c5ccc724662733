use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("geometric infeasibility at theta = {theta:.6} rad: {constraint}")]
    Infeasible { theta: f64, constraint: String },

    #[error("closure singularity at theta = {theta:.6} rad (|sin| = {sin:.3e})")]
    Singular { theta: f64, sin: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no joint can trigger: every opening moment arm is zero or negative")]
    NoTrigger,

    #[error("brute-force grid has {nodes:.3e} nodes, above the 1e8 limit")]
    GridTooLarge { nodes: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
