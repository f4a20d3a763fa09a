use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("not converged: {what} (achieved {achieved:.3e})")]
    NotConverged { what: String, achieved: f64 },

    #[error("overflow after {completed} of {requested} steps")]
    Overflow { completed: u64, requested: u64 },

    #[error("cap exceeded: {0}")]
    CapExceeded(String),

    #[error("structure violation: {0}")]
    Structure(String),

    #[error("series diverged at term {term}: running factor {factor:.3e}")]
    SeriesDiverged { term: usize, factor: f64 },

    #[error("work budget exceeded: need {needed}, budget {budget}")]
    BudgetExceeded { needed: String, budget: String },

    #[error("too few samples: {got} < {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
