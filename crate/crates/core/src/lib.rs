//! Collaborative filtering with normalized embeddings, sampled softmax loss
//! and adaptive temperatures.
//!
//! The crate is organised around the training pipeline:
//!
//! * [`dataset`] loads, filters, splits and corrupts implicit-feedback data.
//! * [`embedding`] holds the user/item tables, scoring and the LightGCN backbone.
//! * [`loss`] evaluates softmax losses and their analytic gradients.
//! * [`temperature`] computes the global temperature `tau0` and per-user
//!   temperatures from the Lambert-W closed form.
//! * [`trainer`] runs epochs under the four strategies.
//! * [`evaluation`] computes full-ranking recall/NDCG and popularity breakdowns.
//! * [`oracles`] contains brute-force references used to validate the above.
//! * [`runs`] has the experiment plumbing behind the `adaptau` binary.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod loss;
pub mod optim;
pub mod oracles;
pub mod report;
pub mod runs;
pub mod temperature;
pub mod trainer;

pub use error::{Error, Result};
