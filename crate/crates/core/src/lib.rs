//! Globally optimal maximum-likelihood estimation of item ground truth and
//! worker confusion matrices from crowdsourced filtering and rating data.
//!
//! Items with identical response tallies are grouped into buckets, buckets
//! are partially ordered by dominance, and every dominance-consistent
//! bucket labeling is scored with its closed-form parameters. The best one
//! is the estimate. An EM baseline, brute-force oracles, synthetic data and
//! evaluation metrics are provided alongside.

pub mod em;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod extensions;
pub mod filtering;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod poset;
pub mod rating;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{
    bucketize, log_likelihood_given_matrix, Bucket, Buckets, ConfusionMatrix, Dataset, Item,
    Labels, LogLikelihood, Mapping, RawResponse, ResponseCounts, WorkerClass,
};
pub use search::{SearchOptions, DEFAULT_ENUMERATION_CAP};
