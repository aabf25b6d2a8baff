use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("parameter domain error: {0}")]
    Domain(String),

    #[error("ill-conditioned {what} (reciprocal condition {rcond:.3e})")]
    Conditioning { what: String, rcond: f64 },

    #[error("design matrix is rank deficient: column {index} ({name}) is linearly dependent on earlier columns")]
    RankDeficient { index: usize, name: String },

    /// `indices` are 1-based observation numbers.
    #[error("deletion of observations {indices:?} leaves a singular system (leverage one)")]
    DeletionSingular { indices: Vec<usize> },

    #[error("correlation optimizer failed: {0}")]
    Optimizer(String),

    #[error("refit without observations {indices:?} failed: {source}")]
    Refit {
        indices: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        if let Error::Refit { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::RankDeficient { .. }
                | Error::DeletionSingular { .. }
                | Error::Optimizer(_)
        )
    }
}
