use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario or experiment parameters violate an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inputs have inconsistent shapes or out-of-range values.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("allocator diverged with step size {mu:e} at iteration {iteration}")]
    Divergence { mu: f64, iteration: usize },

    #[error("degenerate objective: {0}")]
    Degenerate(String),

    #[error("grid search needs {count} candidates, budget is {budget}")]
    Budget { count: u128, budget: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular(_) | Error::Divergence { .. } | Error::Degenerate(_))
    }
}
