use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("inter-arrival law invariant violated: {0}")]
    LawInvariant(String),

    #[error("no bracket for {context} in [{lo}, {hi}]")]
    Bracket { context: &'static str, lo: f64, hi: f64 },

    #[error("fit window infeasible: {0}")]
    FitWindow(String),

    #[error("size cap exceeded: {0}")]
    CapExceeded(String),

    #[error("cache file {path}: {reason}")]
    Cache { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
