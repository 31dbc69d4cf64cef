//! Intrinsic dimension estimation from the singular-value spectrum of
//! diffusion-model score vectors.
//!
//! Scores at points diffused from a base point concentrate in the normal
//! space of the data manifold as the noise level shrinks, so the number of
//! vanishing singular values of the score matrix estimates the manifold's
//! dimension.

pub mod baselines;
pub mod diffusion;
pub mod estimator;
pub mod error;
pub mod field;
pub mod linalg;
pub mod manifolds;
pub mod oracle;
pub mod rng;
pub mod scorenet;

pub use diffusion::NoiseSchedule;
pub use error::{Error, Result};
pub use field::ScoreField;
pub use manifolds::{Dataset, EmbeddingMap};
