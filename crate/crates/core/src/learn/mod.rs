//! Regression, optimization and inverse design on instrument data.

pub mod features;
pub mod gp;
pub mod inverse;
pub mod nelder_mead;
pub mod split;

pub use features::FeaturePipeline;
pub use gp::{GpFitOptions, GpModel, Hyperparams, Prediction};
pub use inverse::{inverse_design, InverseSolution};
pub use nelder_mead::{nelder_mead, Minimum, NelderMeadOptions};
pub use split::{r2_score, train_test_split, Split};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("cannot score: {0}")]
    Score(String),
    #[error("malformed model: {0}")]
    Format(String),
}
