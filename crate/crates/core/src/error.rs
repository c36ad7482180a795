use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure categories. Callers (the CLI in particular) map these to
/// distinct exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Schema,
    Domain,
    Budget,
    Arbitrage,
    Infeasible,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("parse error at line {line}: {message}")]
    ParseAt { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("budget error: {0}")]
    Budget(String),

    /// The allocation branch was invoked outside its precondition.
    #[error("branch precondition violated: {0}")]
    Branch(String),

    #[error("arbitrage rejection: buyer {buyer:?} already purchased query `{query_key}`")]
    Arbitrage { buyer: String, query_key: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("settlement failed, trade not completed: {0}")]
    Settlement(#[source] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse(_) | Error::ParseAt { .. } => ErrorKind::Parse,
            Error::Schema(_) => ErrorKind::Schema,
            Error::Domain(_) | Error::Branch(_) => ErrorKind::Domain,
            Error::Budget(_) => ErrorKind::Budget,
            Error::Arbitrage { .. } => ErrorKind::Arbitrage,
            Error::Infeasible(_) => ErrorKind::Infeasible,
            Error::Io(_) | Error::Settlement(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
