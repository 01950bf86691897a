//! Eye-tracking classification from saliency-model agreement.
//!
//! Each image is run through `T` bottom-up saliency models. Every model's map
//! is scored against a subject's (or a group's) fixations with `p`
//! saliency-evaluation metrics, and the `T x p` scores form the feature
//! vector that a kernel SVM or gradient-boosted trees classify.

pub mod error;
pub mod features;
pub mod gaze;
pub mod imaging;
pub mod learners;
pub mod metrics;
pub mod saliency;
pub mod seed;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
