//! Long-horizon multi-stage navigation harness.
//!
//! A 2D grid world with continuous pose, forward task generation, backward
//! trajectory splitting, the multi-stage metric suite, an entropy-pooled
//! short-term memory with top-k long-term retrieval, pluggable policies and
//! an episode runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expert;
pub mod memory;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod splitter;
pub mod taskforge;
pub mod world;
