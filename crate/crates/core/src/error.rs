use std::path::PathBuf;

/// Errors raised anywhere in the library.
///
/// Every variant maps onto a stable machine-readable code (see [`Error::code`])
/// so the CLI can report failures on its diagnostics stream.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape mismatch, bad bounds, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value showed up where a finite one is required.
    #[error("numerical error in {context} at index {index}: {value}")]
    Numerical {
        context: String,
        index: usize,
        value: f64,
    },

    /// A configuration key is unknown, malformed, or violates an invariant.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn numerical(context: impl Into<String>, index: usize, value: f64) -> Self {
        Error::Numerical {
            context: context.into(),
            index,
            value,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Stable code for the diagnostics stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Contract(_) => "E_CONTRACT",
            Error::Numerical { .. } => "E_NUMERICAL",
            Error::Config { .. } => "E_CONFIG",
            Error::Io { .. } => "E_IO",
            Error::Json { .. } => "E_JSON",
        }
    }
}

/// Returns the index of the first non-finite entry, if any.
pub(crate) fn first_non_finite(values: &[f64]) -> Option<(usize, f64)> {
    values
        .iter()
        .copied()
        .enumerate()
        .find(|(_, v)| !v.is_finite())
}
