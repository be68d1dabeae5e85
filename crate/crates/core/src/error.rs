use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0} contains no interactions")]
    EmptyInput(String),

    #[error("k-core eliminated all data (k = {k})")]
    KCoreEmpty { k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-norm {side} row {index} cannot be normalized")]
    ZeroNorm { side: &'static str, index: usize },

    #[error("{0} is outside the Lambert-W domain [-1/e, inf)")]
    LambertDomain(f64),

    #[error("condition not bracketed on [{lo}, {hi}]: E_u[sum p] = {at_lo} .. {at_hi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        at_lo: f64,
        at_hi: f64,
    },

    #[error("user {user} is positive on every item, cannot sample negatives")]
    NoNegatives { user: usize },

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (tau range [{tau_min}, {tau_max}], users {users:?})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        tau_min: f64,
        tau_max: f64,
        users: Vec<usize>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
