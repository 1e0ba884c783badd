use thiserror::Error;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge (residual {residual:.3e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("{what} diverged at iterate ({last_re}, {last_im})")]
    Divergence {
        what: String,
        last_re: f64,
        last_im: f64,
    },

    #[error("{what} stopped decreasing; residual history {history:?}")]
    Stalled { what: String, history: Vec<f64> },

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("inconsistency: {0}")]
    Inconsistency(String),

    #[error("lift failed at depth {depth}: {source}")]
    Lift {
        depth: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_depth(self, depth: usize) -> Self {
        Error::Lift {
            depth,
            source: Box::new(self),
        }
    }
}
