//! Probing and statistical validation of ordered annotations (seven tiers
//! and a continuous energy score) in fixed sentence-embedding spaces.

pub mod config;
pub mod corpus;
pub mod embedstore;
pub mod error;
pub mod lexical;
pub mod metrics;
pub mod permtest;
pub mod probes;
pub mod projection;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
