use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Outputs were written, but some budget ran out before its tolerance.
    #[error("budget exhausted before convergence; partial results written to {0}")]
    Partial(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Partial(_) => 4,
            CliError::Io { .. } | CliError::Csv(_) => 1,
        }
    }
}

impl From<mlas::Error> for CliError {
    fn from(e: mlas::Error) -> Self {
        use mlas::Error as E;
        match e {
            E::Conditioning { .. } | E::NonFinite(_) | E::NotSymmetric(_) | E::Model(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
