use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The series has no mass, so no Poisson baseline rate exists.
    #[error("degenerate series: all values are zero")]
    DegenerateSeries,

    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    #[error("ROC undefined: {0}")]
    RocUndefined(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("missing input file {0}")]
    MissingFile(PathBuf),

    #[error("malformed input {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
