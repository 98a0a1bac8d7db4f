use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// `I - Phi * Gamma` (or another matrix that must be inverted) is numerically singular.
    #[error("singular matrix{}: condition estimate {cond:.3e}", config_suffix(*.config))]
    Singular { cond: f64, config: Option<usize> },

    /// Fewer training configurations than the necessary dimensional condition allows.
    #[error("not identifiable: {estimator} needs K >= {k_min} ({bound}), got K = {k}")]
    Identifiability {
        estimator: &'static str,
        k: usize,
        k_min: usize,
        bound: &'static str,
    },

    #[error("rank deficient least-squares system in {context}: numerical rank {rank}, need {required}")]
    RankDeficient {
        context: String,
        rank: usize,
        required: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("iteration diverged: {0}")]
    Divergence(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_suffix(config: Option<usize>) -> String {
    match config {
        Some(k) => format!(" for configuration {k}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage/config, 3 identifiability or
    /// missing input, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Config { .. }
            | Error::Io { .. } => 2,
            Error::Identifiability { .. } | Error::MissingParameter(_) => 3,
            Error::RankDeficient { .. } => 3,
            Error::Singular { .. }
            | Error::Precondition(_)
            | Error::Divergence(_)
            | Error::Degenerate(_) => 4,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Shape(_) => "shape",
            Error::Singular { .. } => "singular",
            Error::Identifiability { .. } => "identifiability",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Precondition(_) => "precondition",
            Error::Divergence(_) => "divergence",
            Error::Degenerate(_) => "degenerate",
            Error::MissingParameter(_) => "missing_parameter",
            Error::Parse { .. } => "parse",
            Error::Version { .. } => "version",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Attach the offending configuration index to a singularity error.
    pub(crate) fn at_config(self, k: usize) -> Self {
        match self {
            Error::Singular { cond, .. } => Error::Singular {
                cond,
                config: Some(k),
            },
            other => other,
        }
    }
}
