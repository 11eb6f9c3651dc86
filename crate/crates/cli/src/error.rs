use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] rough_sabr::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Machine-readable tag printed before the message.
    pub fn code(&self) -> &'static str {
        use rough_sabr::Error as E;
        match self {
            CliError::Usage(_) => "invalid_argument",
            CliError::Io { .. } => "io_error",
            CliError::Model(e) => match e {
                E::Domain(_) => "invalid_argument",
                E::Parse(_) => "invalid_input",
                E::Io(_) | E::Csv(_) | E::Json(_) => "io_error",
                E::Singularity(_) => "singularity",
                E::InvalidSolution(_) => "invalid_solution",
                E::NoSolution { .. } => "no_solution",
                E::Decomposition { .. } => "decomposition_failed",
                E::Numerical(_) => "numerical_failure",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "invalid_argument" | "invalid_input" => 2,
            "io_error" => 4,
            _ => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
