//! Per-class hypothesis tests comparing a compressed population against a baseline.

mod audit;
pub mod special;
mod welch;

pub use audit::{
    audit_classes, mean_shift, normalized_recall_difference, read_class_audit, shifted_samples,
    write_class_audit, ClassAccuracySample, ClassAuditRow,
};
pub use welch::{welch_t_test, WelchResult};
