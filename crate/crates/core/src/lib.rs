//! Question vs. not-question labeling for issue-tracker exports.
//!
//! The crate is organised around the stages of the pipeline:
//!
//! * [`corpus`] – shared data model and on-disk formats (raw issue lines, vector CSV).
//! * [`labels`] – label frequency mining, category lexicons and corpus selection.
//! * [`clean`] – markdown stripping and noise-pattern removal.
//! * [`lang`] – English gate, Treebank-style tokenizer and token-count gate.
//! * [`embed`] – hashed bag-of-words embedder and external vector ingestion.
//! * [`classify`] – logistic regression, C4.5, random forest, linear SVM and k-NN.
//! * [`eval`] – class balancing, stratified splitting, confusion matrices and reports.
//! * [`pipeline`] – stage orchestration used by the `qlabel` binary.

pub mod classify;
pub mod clean;
pub mod corpus;
pub mod embed;
mod error;
pub mod eval;
pub mod labels;
pub mod lang;
pub mod pipeline;
pub mod seed;

pub use error::{Error, ErrorKind, Result};
