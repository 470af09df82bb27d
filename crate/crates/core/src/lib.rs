//! Multiple-instance survival learning on tile-feature bags.
//!
//! A shared scorer turns every tile of a patient's bag into a scalar score;
//! the scores are sorted and read off at fixed percentile locations (with
//! optional neighbouring instances), and a small head maps the resulting
//! vector to a Cox log relative hazard. The crate also carries the baseline
//! aggregators, survival statistics, a cross-validation harness and a seeded
//! synthetic bag generator.

pub mod data;
pub mod error;
pub mod harness;
pub mod network;
pub mod pooling;
pub mod survival;

pub use error::{Error, ErrorClass, Result};
