//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument: dimension mismatch, non-finite entries, malformed input.
    #[error("{0}")]
    Argument(String),

    /// A triangular factor has a diagonal entry below the singularity floor.
    #[error("singular factor: diagonal entry {index} is {value:e}, below floor {floor:e}")]
    SingularFactor {
        index: usize,
        value: f64,
        floor: f64,
    },

    /// The innovation factor of a measurement-update pair could not be inverted.
    #[error("singular innovation factor for component {component}: {source}")]
    SingularInnovation {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    /// All mixture weights are zero (or their sum is not positive).
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// A linearization produced non-finite values.
    #[error("linearization failed: {0}")]
    Linearization(String),

    /// A full-covariance recursion lost positive definiteness.
    #[error("covariance breakdown: {0}")]
    CovarianceBreakdown(String),

    /// The measurement has zero density under the predicted mixture.
    #[error("model mismatch at step {step}: measurement has zero density under the predicted mixture")]
    ModelMismatch { step: usize },

    /// Every particle received zero likelihood.
    #[error("particle degeneracy at step {step}: total weight is zero")]
    ParticleDegeneracy { step: usize },

    /// A filtering error annotated with the step at which it occurred.
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Invalid experiment or model configuration; the message names the field.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the (1-based) filter step at which it occurred.
    pub fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
