//! Auditing the disparate impact of model compression.
//!
//! Populations of small classifiers are trained with and without compression
//! (magnitude pruning, post-training quantization); their prediction logs are
//! then compared per class (Welch's t-test on mean-shifted recall), per
//! example (modal-label disagreement, "PIEs"), and under synthetic corruption.

pub mod data_model;
pub mod error;
pub mod par;
pub mod pie_audit;
pub mod pipeline;
pub mod report;
pub mod robustness;
pub mod stats_audit;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
