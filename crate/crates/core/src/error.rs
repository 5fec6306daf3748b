use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cell at depth {depth} cannot be split (depth cap {cap})")]
    DepthCap { depth: u32, cap: u32 },

    #[error("oracle contract violated: {0}")]
    Oracle(String),

    #[error("problem construction failed: {0}")]
    Construction(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
