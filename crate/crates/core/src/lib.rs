//! Evidence-based explainability primitives for credit-transaction classification.
//!
//! The crate is organised along the flow of the pipeline:
//!
//! * [`ingest`] parses application documents and CSV exports, enriches them and
//!   generates seeded synthetic datasets.
//! * [`featurize`] fits a versioned [`featurize::FeatureSchema`] and turns each
//!   transaction into a fixed-width [`featurize::FeatureVector`].
//! * [`pnn`] is the Probabilistic Neural Network classifier.
//! * [`metrics`] builds confusion matrices and the evaluation report.
//! * [`explain`] computes permutation importance per feature group and runs
//!   what-if probes.
//! * [`evidence`] joins transactions, features and predictions into a queryable
//!   store for the discovery views.
//!
//! Batch-heavy loops go through [`exec`], which runs on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.

pub mod evidence;
pub mod exec;
pub mod explain;
pub mod featurize;
pub mod fixtures;
pub mod ingest;
pub mod label;
pub mod metrics;
pub mod pnn;
pub mod split;

pub use exec::Execution;
pub use label::ClassLabel;
