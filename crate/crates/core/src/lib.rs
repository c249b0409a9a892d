//! Cyberphysical sequencing.
//!
//! Physical assets are classified and fingerprinted from sensor features,
//! bound to an identity and a provenance bundle, mirrored by a sparse-state
//! data proxy, and anchored on a simulated DAG ledger behind a permissioned
//! asset manager.

pub mod asset_manager;
pub mod config;
pub mod digest;
pub mod harness;
pub mod identification;
pub mod ledger;
pub mod metadata;
pub mod proxy;

/// Discrete logical time shared by sensors, proxies and ledger rounds.
pub type Tick = u64;
