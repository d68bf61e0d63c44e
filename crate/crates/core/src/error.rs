use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("input error: {0}")]
    Input(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("solver error: {message} (relative residual {residual:.3e} after {iterations} iterations)")]
    Solver {
        message: String,
        residual: f64,
        iterations: usize,
    },

    #[error("range error: {0}")]
    Range(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("case {context}: {source}")]
    Case {
        context: String,
        #[source]
        source: Box<LabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        LabError::Input(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        LabError::Geometry(msg.into())
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        LabError::Case {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
