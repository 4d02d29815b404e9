//! Benchmark harness: metrics, corpus evaluation, threshold sweeps and the
//! settings shared by the command-line front end.

mod corpus;
mod metrics;
mod settings;
mod sweep;

pub use corpus::{evaluate_corpus, load_corpus, save_corpus, CorpusReport, ItemResult};
pub use metrics::{compute_metrics, MetricsReport};
pub use settings::{Backend, Model, Settings};
pub use sweep::{sweep, sweep_values, SweepParam, SweepRow};
