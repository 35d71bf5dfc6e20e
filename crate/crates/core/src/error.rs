use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// A configuration value failed validation. `key` is the dotted path.
    #[error("invalid configuration at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("malformed configuration document: {0}")]
    Parse(#[from] toml::de::Error),

    /// The explicit update produced a non-finite value.
    #[error("solver aborted at step {step}, cell {cell}: non-finite component {component} (likely instability)")]
    NonFinite {
        step: usize,
        cell: usize,
        component: usize,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("resource guard: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
