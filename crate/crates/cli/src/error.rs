use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {reason}")]
    Csv { path: String, line: u64, reason: String },

    #[error("{0}")]
    Config(String),

    #[error("report schema version {found} is not supported (expected {expected}); re-run `estimate` to regenerate it")]
    Schema { found: u64, expected: u64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Core(#[from] levelset::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// A hint appended to the message shown on the command line.
    pub fn hint(&self) -> Option<&'static str> {
        use levelset::Error as E;
        match self {
            CliError::Core(E::InvalidBracket { .. }) => Some("pass a smaller lower radius with --bracket rm,rM"),
            CliError::Core(E::EmptyLevelSet) => Some("no point clears the upper threshold; lower --t or --tau"),
            CliError::Core(E::AllDegenerate { .. }) => {
                Some("every calibration cell failed; try a smaller --I or use --no-calibrate")
            }
            CliError::Core(E::Degenerate(_)) => Some("the points may be collinear or too few; jitter them slightly"),
            CliError::Csv { .. } => Some("rows must be `x,y` or `x,y,label` with label case or control"),
            _ => None,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
