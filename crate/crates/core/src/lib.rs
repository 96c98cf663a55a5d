//! Benchmark engine for black-box model extraction against graph neural
//! networks.
//!
//! The crate trains small node-classification GNNs (GCN, GraphSAGE, GAT)
//! with hand-derived gradients, exposes them through a budgeted query
//! oracle, runs twelve extraction attacks against that oracle, protects
//! targets with watermarking and output-limiting defenses, and measures
//! fidelity, ownership verification and watermark survival.
//!
//! Module map:
//! - [`graph`]: graphs, bundles, SBM generation, splits, regimes, statistics
//! - [`nn`]: matrices, backbones, losses, Adam, training, classification metrics
//! - [`oracle`]: the budgeted black-box endpoint
//! - [`attacks`]: the extraction attacks
//! - [`defenses`]: watermarking, fingerprinting, inference transforms, verification
//! - [`metrics`]: fidelity, utility drop, sample efficiency, aggregation
//! - [`harness`]: experiment configs, tracks, sweeps, JSONL records, reports

pub mod attacks;
pub mod defenses;
pub mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod seed;

pub use error::{Error, Result};
