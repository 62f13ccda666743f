use std::path::PathBuf;

use thiserror::Error;

use crate::planeloss::PlaneFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("no free space available")]
    NoFreeSpace,

    #[error("no path found: {0}")]
    NoPathFound(String),

    #[error("insufficient samples: {found} (need at least 3)")]
    InsufficientSamples { found: usize },

    /// The normal equations were rank deficient at the optimum. Carries the
    /// `a1 = 0` fallback fit.
    #[error("degenerate plane fit")]
    DegenerateFit(PlaneFit),

    #[error("intermediate goal generation gap at waypoint {index}")]
    FrameGap { index: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, printed by the CLI on domain failures.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::ContractViolation(_) => "contract_violation",
            Error::Parse { .. } => "parse_error",
            Error::InvalidScene(_) => "invalid_scene",
            Error::NoFreeSpace => "no_free_space",
            Error::NoPathFound(_) => "no_path_found",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::FrameGap { .. } => "frame_gap",
            Error::Io { .. } => "io_error",
        }
    }
}
