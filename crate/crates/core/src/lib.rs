//! Repayment-rate factor analysis: ingest category-tagged CSV panels, screen
//! features, and fit grouped-PCA least squares, elastic-net and random-forest
//! models under a shared cross-validation harness.
//!
//! # Modules
//!
//! - [`ingest`] / [`table`]: dictionary and CSV loading, year merging, missingness filter
//! - [`screening`]: target selection, variance and correlation screens, summaries
//! - [`pca`]: per-category PCA with an explained-variance cutoff
//! - [`linreg`]: logit transform and QR least squares with t-tests
//! - [`enet`]: coordinate-descent elastic net paths, CV tuning, KKT check
//! - [`forest`]: bootstrap regression forests and impurity importance
//! - [`evaluate`]: folds, RMSE, cross-validation, validation curves, comparison
//! - [`pipeline`]: run configuration, end-to-end runs and manifests
//! - [`synth`]: synthetic panels with planted ground truth

pub mod enet;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod ingest;
pub mod io;
pub mod linreg;
pub mod pca;
pub mod pipeline;
pub mod screening;
pub mod stats;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use table::{Category, Dtype, FeatureMeta, FeatureTable, RowKey};
