use thiserror::Error;

/// Exit code for invalid input, configuration or data.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failures during estimation.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unbalanced panel: units {} miss at least one period", .0.join(", "))]
    UnbalancedPanel(Vec<String>),

    #[error("non-numeric cell at line {row}, column `{col}`")]
    NonNumericCell { row: u64, col: String },

    #[error("duplicate cell for unit `{unit}` at time `{time}`")]
    DuplicateCell { unit: String, time: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] qte_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_validation() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_NUMERICAL => "numerical",
            _ => "validation",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
