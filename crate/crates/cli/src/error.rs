use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure at {context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: cavity_core::Error,
    },

    /// One or more grid points failed; every output file was still written.
    #[error("{failed} of {total} points failed; see the manifest")]
    PointsFailed { failed: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn numerical(context: impl Into<String>, source: cavity_core::Error) -> Self {
        CliError::Numerical {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad configuration, 3 for numerical
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } | CliError::PointsFailed { .. } => 3,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}
