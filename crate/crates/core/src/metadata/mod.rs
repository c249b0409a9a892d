//! Provenance bundles and CPS sequences.
//!
//! Each asset carries an append-only, digest-chained provenance log plus a
//! current-state snapshot. Together with the identity and the proxy address
//! it forms the sequence whose digest is anchored on the ledger; the bundle
//! itself stays off-ledger.

mod bundle;
mod codec;
mod event;
mod sequence;

pub use bundle::{verify_bundle, MetadataBundle, SnapshotSource, StateSnapshot, StateVariable, Verification};
pub use codec::{export_bundle, import_bundle};
pub use event::{EventDraft, EventKind, GeoPoint, ProvenanceEvent, SensorMetadata};
pub use sequence::{compose_sequence, sequence_digest, CpsSequence, ProxyLocator};

use crate::Tick;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetadataError {
    #[error("provenance chain broken at event {broken_at}")]
    Integrity { broken_at: u64 },
    #[error("invalid sensor metadata: {0}")]
    InvalidSensorMetadata(String),
    #[error("state snapshot at tick {attempted} is older than current tick {last}")]
    StateRegression { last: Tick, attempted: Tick },
    #[error("proxy locator must not be empty")]
    EmptyLocator,
    #[error("bundle record on line {line}: {message}")]
    Codec { line: usize, message: String },
}
