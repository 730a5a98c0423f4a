use thiserror::Error;

/// Errors raised by game construction, equilibrium search and verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    /// Malformed or inconsistent input (dimensions, ranges, JSON fields).
    #[error("invalid input at `{field}`: {message}")]
    Input { field: String, message: String },

    /// A linear solve or normalization could not be carried out reliably.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A structural assumption required by a construction does not hold.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// The requested configuration admits no feasible construction.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A result contradicts a guaranteed bound; usually the grid is too coarse.
    #[error("bound contradiction: {0}")]
    Contradiction(String),
}

impl GameError {
    pub fn input(field: impl Into<String>, message: impl Into<String>) -> Self {
        GameError::Input {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's input rather than the model.
    pub fn is_input(&self) -> bool {
        matches!(self, GameError::Input { .. })
    }
}

pub type Result<T> = std::result::Result<T, GameError>;
