//! Text classification with calibrated deferral.
//!
//! A small convolutional classifier is trained with cross-entropy plus a
//! metric-learning loss on its penultimate features. Predictions are then
//! ranked by uncertainty (dropout-entropy or one of three baselines) and the
//! most uncertain fraction is handed to human reviewers; [`evaluation`]
//! measures what that buys.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod metric;
pub mod nn;
pub mod uncertainty;

pub use error::{Error, Result};
