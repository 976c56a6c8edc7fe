use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout error: {0}")]
    Layout(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("cannot upsample from period {source_period}s to {target_period}s")]
    UnsupportedUpsample { source_period: i64, target_period: i64 },

    #[error("series do not overlap in time")]
    NoOverlap,

    #[error("period mismatch: expected {expected}s, found {found}s")]
    PeriodMismatch { expected: i64, found: i64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("layer spec error: {0}")]
    Spec(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint error in layer {layer}: {reason}")]
    CheckpointLayer { layer: usize, reason: String },

    #[error("selector error: no layer named `{0}`")]
    Selector(String),

    #[error("transfer plan error: {0}")]
    Plan(String),

    #[error("undefined metric: {0} has a zero denominator")]
    UndefinedDenominator(&'static str),

    #[error("energy shares are undefined when every total is zero")]
    DegenerateShare,

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Reads a config file; failure is a config error, not a data error.
    pub(crate) fn read_config(path: &std::path::Path) -> Result<String> {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
    }

    pub fn is_checkpoint(&self) -> bool {
        matches!(self, Error::Checkpoint(_) | Error::CheckpointLayer { .. })
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Layout(_) | Error::Config(_) | Error::Spec(_) | Error::Selector(_) | Error::Plan(_)
        )
    }
}
