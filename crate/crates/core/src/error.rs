use thiserror::Error;

/// Errors produced by the blind regression routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The matrix has fewer numerically independent columns than required.
    #[error("rank deficient: numerical rank {rank}, required {required}")]
    RankDeficient { rank: usize, required: usize },

    /// The estimate is constant, so the scale of the affine fit is unidentifiable.
    #[error("degenerate estimate: all locations are equal")]
    DegenerateEstimate,

    #[error("search budget exceeded: {patterns} patterns, budget {budget}")]
    BudgetExceeded { patterns: u128, budget: u128 },
}

impl Error {
    /// Short machine-readable code, used in result tables.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::DegenerateEstimate => "degenerate-estimate",
            Error::BudgetExceeded { .. } => "budget-exceeded",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
