use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("undefined CTR: document `{0}` has no impressions")]
    UndefinedCtr(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate fit: need at least two distinct abscissae")]
    DegenerateFit,

    #[error("degenerate density: total clamped area is {0}")]
    DegenerateDensity(f64),

    #[error("classes are unordered or overlapping at index {0}")]
    UnorderedClasses(usize),

    #[error("density is not normalized")]
    Unnormalized,

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("empty candidate pool")]
    EmptyPool,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("ontology error: {0}")]
    Ontology(String),

    #[error("{path}:{line}: field `{field}`: {reason}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
