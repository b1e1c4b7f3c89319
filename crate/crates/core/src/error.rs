use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not a probability vector: {0}")]
    Normalization(String),

    #[error("invalid model: {0}")]
    Model(String),

    /// All-zero message or posterior, e.g. an Equality node whose incoming
    /// messages have disjoint supports.
    #[error("inconsistent evidence on edge `{edge}`")]
    Inconsistency { edge: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("enumeration of {size} joint configurations exceeds the limit of {limit}")]
    SizeGuard { size: u128, limit: u128 },
}
