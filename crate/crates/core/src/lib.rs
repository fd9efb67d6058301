//! Micromobility fleet rebalancing: demand ingestion, a slot-level
//! simulator, baseline rebalancers, emergent scenarios, plan adaptation
//! through a pluggable language-model adapter, metrics, and an experiment
//! harness.

pub mod adaptation;
pub mod apportion;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod rebalancer;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
