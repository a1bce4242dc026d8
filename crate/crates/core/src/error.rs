//! Crate-wide error type.
//!
//! Variants are grouped into three classes (see [`Error::class`]): bad inputs
//! or configuration, numeric failures during training/evaluation, and
//! artifact-consistency failures (corrupt containers, broken checksum
//! chains). The CLI maps the classes to distinct exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by callers that need to distinguish "fix your
/// input" from "the math blew up" from "your artifacts are inconsistent".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numeric,
    Artifact,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("duplicate concept id {0}")]
    DuplicateConcept(u64),

    #[error("unknown concept id {0}")]
    UnknownConcept(u64),

    #[error("bad domain {value} for concept {concept_id}")]
    BadDomain { concept_id: u64, value: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    BadDimension { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("too few concepts: need {needed}, have {got}")]
    TooFewConcepts { needed: usize, got: usize },

    #[error("row {0} has no neighbor entry")]
    NotIndexed(u32),

    #[error("concept {0} has no fitted decile bins")]
    NotBinned(u64),

    #[error("records out of order: {0}")]
    Order(String),

    #[error("trajectory length {len} exceeds maximum {max_len}")]
    TooLong { len: usize, max_len: usize },

    #[error("bad visit {visit_id} for patient {patient_id}: {reason}")]
    BadVisit {
        patient_id: u64,
        visit_id: u64,
        reason: String,
    },

    #[error("trajectory contains no non-padding positions")]
    EmptyTrajectory,

    #[error("embedding row {0} has zero norm")]
    DegenerateEmbedding(usize),

    #[error("training diverged at iteration {iteration}: {msg}")]
    Diverged { iteration: u32, msg: String },

    #[error("labels are single-class ({0} positives)")]
    DegenerateLabels(usize),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("bad container {path}: {reason}")]
    BadContainer { path: PathBuf, reason: String },

    #[error("checksum mismatch for {artifact}: recorded {expected:016x}, actual {got:016x}")]
    ChecksumMismatch {
        artifact: String,
        expected: u64,
        got: u64,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            DegenerateEmbedding(_) | Diverged { .. } | DegenerateLabels(_)
            | UndefinedMetric(_) => ErrorClass::Numeric,
            BadContainer { .. } | ChecksumMismatch { .. } => ErrorClass::Artifact,
            _ => ErrorClass::Input,
        }
    }
}
