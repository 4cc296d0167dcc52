use thiserror::Error;

/// Errors surfaced by the library. The CLI maps each variant family to an
/// exit code (parse/input 2, resource 3, protocol 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{what}: count {count} exceeds cap {cap}")]
    Resource { what: String, count: u128, cap: u128 },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("sequence is not realizable: {0}")]
    NotRealizable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn resource(what: impl Into<String>, count: u128, cap: u128) -> Self {
        Error::Resource {
            what: what.into(),
            count,
            cap,
        }
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
