use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum GfdError {
    /// An argument violated an operation's precondition (dimension mismatch,
    /// expansions over different pre-bases, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("derivative of order {requested} requested but the kernel only supports order {supported}")]
    UnsupportedOrder { requested: usize, supported: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// A cached structure has not been extended far enough.
    #[error("state error: {0}")]
    State(String),

    #[error("index {requested} out of range: only {available} available")]
    Range { requested: usize, available: usize },

    /// The jitter cap was exceeded while factorizing a Gram matrix. `index` is
    /// the 0-based pivot that stayed non-positive.
    #[error("numerical rank deficiency at pre-basis index {index} (jitter reached {jitter:e}); centers are nearly dependent")]
    NumericalRank { index: usize, jitter: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("gram cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("run aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        #[source]
        source: Box<GfdError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GfdError>;
