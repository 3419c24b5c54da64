use std::path::PathBuf;

use thiserror::Error;

/// Which score argument fell at or below the `-C` bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundArg {
    /// The realized value `y`.
    Realized,
    /// The risk estimate (last coordinate of the estimate vector).
    Risk,
}

impl std::fmt::Display for BoundArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundArg::Realized => f.write_str("realized value y"),
            BoundArg::Risk => f.write_str("risk estimate"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("score domain violated: {arg} = {value} is not above -C = {neg_bound}")]
    Domain {
        arg: BoundArg,
        value: f64,
        neg_bound: f64,
    },

    #[error("invalid spectrum: {}", .0.join("; "))]
    Spectrum(Vec<String>),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("score bound violated at period {period}, episode {episode}: {source}")]
    ScoreBound {
        period: usize,
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
