use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or solver parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data (logs, samples) violates its invariants.
    #[error("invalid data: {0}")]
    Data(String),

    /// An estimator was asked for a profile without any observed requests.
    #[error("no samples: the estimator is undefined without observed requests")]
    NoSamples,

    /// The requested accuracy cannot be reached for the given profile distance.
    #[error("accuracy infeasible: epsilon_bar {epsilon_bar} must exceed distance {distance}")]
    Infeasible { epsilon_bar: f64, distance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Experiment configuration problem, with the offending field path.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
