use std::path::PathBuf;

/// Errors produced by the simulator and its experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty system: at least one user is required")]
    EmptySystem,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pairing error: {0} users cannot be split into cancelling pairs")]
    OddUserCount(usize),

    #[error("degenerate channel: user {user} has zero gain, channel inversion impossible")]
    DegenerateChannel { user: usize },

    #[error("degenerate alignment constant m = {0}")]
    DegenerateAlignment(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no transmit frames to superpose")]
    NoTransmitters,

    #[error("gradient of user {user} has norm {norm} above the bound {bound}; clip it first")]
    Unclipped { user: usize, norm: f64, bound: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss} exceeds {limit}")]
    Diverged { iteration: usize, loss: f64, limit: f64 },

    #[error("empty sweep: {0}")]
    EmptySweep(&'static str),

    #[error("config file not found: {}", .0.display())]
    ConfigMissing(PathBuf),

    #[error("config schema violation: {0}")]
    Schema(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
