use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the domain of an operation (bounds, dimensions, radii).
    #[error("domain error: {0}")]
    Domain(String),

    /// A candidate grid would exceed the configured size cap.
    #[error("grid of {requested} points exceeds cap of {cap}; use random candidates instead")]
    GridBudget { requested: u128, cap: usize },

    /// Operation called in the wrong engine phase or on empty data.
    #[error("state error: {0}")]
    State(String),

    /// Told results do not match the pending suggestions.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Non-finite objective value.
    #[error("value error: {0}")]
    Value(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Normalized score with a zero baseline gap.
    #[error("normalized score undefined: random-search baseline gap is zero")]
    UndefinedScore,
}
