//! Policy interrogation for recorded reinforcement-learning trajectories.
//!
//! The pipeline turns an XRL dataset (per-step transitions plus policy
//! internals) into 2-D t-SNE embeddings, staged state clusters, per-cluster
//! analytics and a semi-aggregated MDP over the clusters with path queries.

pub mod analysis;
pub mod cli;
pub mod clustering;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod render;
pub mod samdp;
pub mod synth;
pub mod xrld;

pub use error::{Error, Result};
