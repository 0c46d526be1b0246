//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CwError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("label {label} out of range for {active_units} active units at row {row}")]
    Label {
        row: usize,
        label: usize,
        active_units: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CwError {
    pub(crate) fn with_task(self, task: usize) -> CwError {
        CwError::Sequencing(format!("task {}: {}", task + 1, self))
    }
}

pub type Result<T> = std::result::Result<T, CwError>;
