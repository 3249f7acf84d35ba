//! Protocol-variance harness for prediction/label tables.
//!
//! Quantifies two distinct sources of instability in evaluation protocols:
//! the split lottery of subject-exclusive k-fold cross-validation (fold
//! prevalence perturbation, per-AU noise floors, F1-vs-AUC volatility) and
//! domain shift under leave-one-dataset-out transfer (subject-level
//! bootstrap significance, domain sensitivity). It operates purely on
//! per-frame score/label tables; model training is out of scope.
//!
//! Everything is deterministic for a fixed master seed: randomized tasks
//! derive per-task seeds by hashing, so results do not depend on thread
//! count or scheduling. The `parallel` feature (default) runs independent
//! tasks on rayon; disabling it yields the sequential fallback.

pub mod error;
pub mod exec;
pub mod lodo;
pub mod metrics;
pub mod noise;
pub mod report;
pub mod seed;
pub mod split;
pub mod stats;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use metrics::MetricKind;
pub use table::{AuId, AuSchema, EvalTable};
