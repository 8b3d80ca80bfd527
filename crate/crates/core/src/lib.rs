//! Banding-aware no-reference video quality assessment.
//!
//! The pipeline decodes frames ([`ingest`]), runs them through the early
//! stages of a pretrained CNN ([`backbone`]), summarizes every activation map
//! by the generalized Gaussian fit of its MSCN coefficients ([`nss`]) and
//! regresses the per-frame feature vector to a quality score with a small
//! MLP ([`regressor`]). Frame scores are average-pooled into a video score.
//!
//! [`eval`] holds the benchmark protocol (rank/linear correlations, logistic
//! linearization, content-disjoint splits), [`sureal`] recovers ground-truth
//! scores from raw subjective ratings and [`synth`] generates controlled
//! banding stimuli.

pub mod backbone;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod nss;
pub mod regressor;
pub mod sureal;
pub mod synth;

pub use error::{Error, Result};
