use std::path::PathBuf;

/// Errors raised by the library. Solver non-convergence is not an error; it is
/// reported through `SolverResult::converged`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("infeasible system: {0}")]
    Infeasible(String),

    #[error("rank-deficient support submatrix for blocks {support:?}")]
    RankDeficient { support: Vec<usize> },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
