use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid reference path: {0}")]
    InvalidPath(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stimulation frequency {0} Hz is outside the fatigue model domain (< 100 Hz)")]
    FrequencyOutOfRange(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric divergence at t = {time:.3} s ({side}): {what}")]
    Divergence {
        time: f64,
        side: String,
        what: String,
    },

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
