//! Scenario-driven orchestration of the whole pipeline.
//!
//! A scenario file names assets with their true features, a ledger
//! network, and a script of manager calls. One global tick drives scans,
//! proxy steps, ledger gossip and the script; the run ends in a
//! [`RunReport`] that is byte-identical for a fixed scenario and seed.

mod report;
mod run;
mod scenario;

use std::path::PathBuf;

pub use report::{
    AssetRecord, AttackRecord, AttackRow, LedgerRecord, NodeRecord, ProxyRecord, RunReport, ScanRecord, StateError,
    REPORT_FILE, SUMMARY_FILE,
};
pub use run::{attack_table, execute, run_scenario};
pub use scenario::{
    bundled_scenario, AssetSpec, AttackSpec, ConsensusSpec, LifecycleEvent, NetworkSpec, Scenario, ScriptAction,
    ScriptStep, Topology, TriggerSpec, ATTACK_SWEEP, TENANT_KEYS,
};

use crate::Tick;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("invariant violated at tick {tick}: {label}")]
    Invariant { tick: Tick, label: String },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// True for problems with the input rather than the run.
    pub fn is_validation(&self) -> bool {
        matches!(self, HarnessError::Io { .. } | HarnessError::Parse(_) | HarnessError::Validation(_))
    }
}
