use std::path::{Path, PathBuf};

use alphacross_core::Error;
use serde_json::json;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    /// Unreadable or malformed input file.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    /// Invalid flag combination or generator parameters.
    #[error("{0}")]
    Usage(String),

    #[error("{}{source}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Core {
        #[source]
        source: Error,
        path: Option<PathBuf>,
    },

    /// `oracle --compare` found the solver and the enumeration disagree.
    #[error("solver and brute-force optimum disagree: {0}")]
    Mismatch(String),
}

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        CliError::Core { source, path: None }
    }
}

impl CliError {
    pub fn input(path: &Path, message: impl ToString) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn at(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
        move |source| CliError::Core {
            source,
            path: Some(path.to_path_buf()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Usage(_) => 2,
            CliError::Core { source, .. } => core_exit_code(source),
            CliError::Mismatch(_) => 7,
        }
    }

    /// Error type name used in the structured report.
    pub fn kind(&self) -> String {
        match self {
            CliError::Input { .. } => "InputError".into(),
            CliError::Usage(_) => "UsageError".into(),
            CliError::Mismatch(_) => "OracleMismatch".into(),
            CliError::Core { source, .. } => {
                let debug = format!("{source:?}");
                debug
                    .split(|c: char| !c.is_alphanumeric())
                    .next()
                    .unwrap_or_default()
                    .to_string()
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let path = match self {
            CliError::Input { path, .. } => Some(path),
            CliError::Core { path, .. } => path.as_ref(),
            _ => None,
        };
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
            "path": path.map(|p| p.display().to_string()),
        })
    }
}

pub fn core_exit_code(e: &Error) -> i32 {
    use Error::*;
    match e {
        MissingValues { .. }
        | DimensionMismatch(_)
        | NegativeTurnover { .. }
        | DuplicateLabel(_)
        | NonFinite(_)
        | InvalidCostSpec(_)
        | InvalidOption(_)
        | NotSymmetric
        | TooManyStreams(_) => 2,
        AllAlphasKilled | AllZeroWeights | NoFeasiblePattern => 3,
        CycleDetected { .. } | MaxIterations { .. } | OuterLoopCycle { .. } => 4,
        NoPositiveCapacity | UnboundedCapacity => 5,
        ZeroVolatility
        | ZeroVarianceStream { .. }
        | NotPositiveDefinite
        | IndefiniteCovariance { .. }
        | SingularCovariance
        | RankDeficient { .. }
        | IndefiniteCorrelation(_)
        | RankDeficientLoadings { .. } => 6,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
