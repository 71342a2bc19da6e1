use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. `key` names the offending setting.
    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// Resource bookkeeping went negative or exceeded a capacity. Always a bug.
    #[error("accounting violation: {0}")]
    Accounting(String),

    /// A simulation invariant failed after processing an event.
    #[error("invariant violated at t={time}: {msg}")]
    Invariant { time: String, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
