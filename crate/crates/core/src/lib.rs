//! Sparse non-negative latent factor analysis for temporal link prediction
//! on bipartite transaction networks.
//!
//! The pipeline: parse timestamped sender->receiver transactions, slice
//! them into an ordered sequence of sparse network snapshots, train latent
//! factor models on the historical slices (optionally regularized by a
//! decayed combination of receiver co-transaction graphs), and score
//! predictions on held-out future slices.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod factorization;
pub mod regularizer;
pub mod temporal_graph;

pub use error::{Error, Result};
