//! Vertical federated learning by block coordinate descent.
//!
//! Parties hold disjoint feature columns of the same samples; the last
//! party also holds the labels. Each sync round the parties exchange one
//! score per sample and the label party answers with the loss derivative,
//! after which every party may take several local steps on its own block.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod harness;
pub mod model;
pub mod numkit;
pub mod protocol;
pub mod security_audit;

pub use error::{Error, Result};

/// RNG stream ids derived from one seed; party-indexed streams add `k`.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const HOLDOUT: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const WITNESS: u64 = 4;
    pub const INIT: u64 = 1_000;
    pub const PARTY: u64 = 2_000;
}
