//! A simulated DAG ledger holding the asset manifest.
//!
//! Each transaction approves two earlier ones. Confirmation is by
//! cumulative weight; double mints and competing transfers are settled by
//! weight. Nodes exchange transactions by round-based gossip.

mod attack;
mod confirm;
mod dag;
mod node;
mod tips;
mod tx;
pub mod wire;

pub use attack::{reversion_rate, run_attack, AttackParams, AttackReport, ADVERSARY_NODE, TARGET_IDENTITY};
pub use confirm::{
    confirmed_set, conflict_winner, ConfirmedView, ConsensusConfig, DEFAULT_ALPHA, DEFAULT_CONFIRMATION_THRESHOLD,
};
pub use dag::{DagError, DagLedger};
pub use node::{connect, deliver_frames, gossip_round, GossipStats, LedgerNode, TxRequest};
pub use tips::{select_tips, weighted_pick};
pub use tx::{NodeId, Transaction, TxContents, TxId, TxKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("invalid consensus configuration: {0}")]
    InvalidConfig(String),
    #[error("identity `{0}` already has a mint")]
    DuplicateMint(String),
    #[error("no mint for identity `{0}`")]
    UnknownAsset(String),
    #[error("`{actor}` is not the confirmed owner of `{identity_id}`")]
    Unauthorized { actor: String, identity_id: String },
    #[error("a transfer of `{0}` is already pending")]
    PendingTransfer(String),
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error(transparent)]
    Dag(#[from] DagError),
}
