use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, parameter, scenario or config input. The message names the offending item.
    #[error("configuration error: {0}")]
    Config(String),

    /// A function evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// NaN or Inf appeared during a step.
    #[error("numerical failure at step {step} during stage `{stage}`")]
    Numerical { step: usize, stage: &'static str },

    /// A structure-preservation invariant was violated beyond tolerance.
    #[error("structure-preservation failure at step {step}: {detail}")]
    Structure { step: usize, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
