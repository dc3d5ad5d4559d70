//! Hierarchical language identification driven by confusion analysis.
//!
//! The pipeline: train (or replay) a high-coverage root classifier, find the
//! language clusters it systematically confuses, train a small resolution
//! unit per cluster, and route root predictions through those units. Units
//! can also emit languages the root does not support, so coverage grows
//! without retraining the root.
//!
//! Modules follow the pipeline stages:
//!
//! - [`corpus`]: story corpora — loading, variety merging, story-disjoint
//!   splits, English-contamination filtering, parallel-segment extraction
//! - [`features`]: n-gram count vectors, incremental PCA, minority
//!   oversampling
//! - [`classifier`]: multinomial Naive Bayes, the root-model contract, and
//!   a replay adapter for black-box identifiers
//! - [`confusion`]: confusion matrices, hit ratios, confused-cluster
//!   extraction
//! - [`hierarchy`]: resolution units and the two-level predictor
//! - [`eval`]: per-language precision/recall/F1 and cluster aggregates
//! - [`persist`]: versioned binary container for trained artifacts
//! - [`synth`]: deterministic generator of confusable artificial languages,
//!   used by the benchmark command and the end-to-end tests

pub mod classifier;
pub mod confusion;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod hierarchy;
mod label;
pub mod persist;
pub mod synth;
pub(crate) mod util;

pub use error::{Error, Result};
pub use label::LanguageLabel;
