//! Building blocks for studying prediction ensembles under a serving budget.
//!
//! The crate covers the full loop: generate or load per-model class
//! probabilities ([`prediction`], [`cohort`]), combine them
//! ([`aggregate`]), price them ([`cost`]), trace accuracy–cost trade-offs
//! and Pareto frontiers ([`pareto`]), replay parallel serving to get
//! latency distributions ([`simulator`]), and search an architecture space
//! for latency-aware ensembles ([`search`]).
//!
//! Everything randomized draws from counter-derived streams ([`rng`]), so
//! results are bit-reproducible for a given master seed and independent of
//! thread scheduling.

pub mod aggregate;
pub mod cohort;
pub mod cost;
pub mod error;
pub mod pareto;
pub mod prediction;
pub mod rng;
pub mod search;
pub mod simulator;

pub use error::{Error, Result};
