use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum BenchError {
    /// Bad flags or an inconsistent configuration.
    #[error("{0}")]
    Usage(String),

    /// Unreadable or malformed input data.
    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Runtime(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) => 2,
            BenchError::Data(_) => 3,
            BenchError::Runtime(_) => 4,
        }
    }
}

impl From<regagent_core::Error> for BenchError {
    fn from(e: regagent_core::Error) -> Self {
        use regagent_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Validation(_) => BenchError::Usage(msg),
            E::Parse { .. } | E::UnsupportedFormat(_) | E::Io(_) | E::Json(_) => {
                BenchError::Data(msg)
            }
            E::Degenerate(_) | E::NonFiniteGradient { .. } | E::RewardSource { .. } => {
                BenchError::Runtime(msg)
            }
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Data(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Data(e.to_string())
    }
}
