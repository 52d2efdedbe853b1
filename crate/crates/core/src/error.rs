use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("eigensolver failed to converge for a {size}x{size} matrix after {sweeps} sweeps")]
    Convergence { size: usize, sweeps: usize },

    #[error("rank deficiency: singular value {index} is zero at requested rank {rank}; try a rank below {rank}")]
    RankDeficient { rank: usize, index: usize },

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("degenerate function: {0}")]
    Degenerate(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::RankDeficient { .. }
                | Error::Conditioning(_)
                | Error::Degenerate(_)
        )
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }
}
