use serde::{Deserialize, Serialize};

use super::{EventDraft, MetadataError, ProvenanceEvent};
use crate::digest::{Digest, DigestBuilder};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotSource {
    ProxyEstimate,
    DirectObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVariable {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub state: Vec<StateVariable>,
    pub as_of: Tick,
    pub source: SnapshotSource,
}

impl StateSnapshot {
    pub fn empty() -> Self {
        StateSnapshot {
            state: Vec::new(),
            as_of: 0,
            source: SnapshotSource::DirectObservation,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.state.iter().find(|v| v.name == name).map(|v| v.value)
    }

    fn hash_into(&self, b: &mut DigestBuilder) {
        b.u64(self.as_of)
            .str(match self.source {
                SnapshotSource::ProxyEstimate => "proxy",
                SnapshotSource::DirectObservation => "direct",
            })
            .u64(self.state.len() as u64);
        for v in &self.state {
            b.str(&v.name).f64(v.value).str(&v.unit);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verification {
    Valid,
    /// Position-based id (1-based) of the first event that fails to verify.
    BrokenAt(u64),
}

impl Verification {
    pub fn is_valid(self) -> bool {
        self == Verification::Valid
    }
}

/// Append-only provenance log plus the latest state snapshot.
///
/// Events carry contiguous ids starting at 1, and each event's
/// `prev_digest` is the digest of its predecessor (zero for the first).
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataBundle {
    events: Vec<ProvenanceEvent>,
    current_state: StateSnapshot,
}

impl Default for MetadataBundle {
    fn default() -> Self {
        Self::new()
    }
}

impl MetadataBundle {
    pub fn new() -> Self {
        MetadataBundle {
            events: Vec::new(),
            current_state: StateSnapshot::empty(),
        }
    }

    /// Rebuilds a bundle from stored parts without checking it; use
    /// [`verify`](Self::verify) before trusting the result.
    pub fn from_parts(events: Vec<ProvenanceEvent>, current_state: StateSnapshot) -> Self {
        MetadataBundle { events, current_state }
    }

    pub fn events(&self) -> &[ProvenanceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn current_state(&self) -> &StateSnapshot {
        &self.current_state
    }

    pub fn last_digest(&self) -> Digest {
        self.events.last().map(|e| e.digest).unwrap_or(Digest::ZERO)
    }

    pub fn verify(&self) -> Verification {
        let mut prev = Digest::ZERO;
        for (i, ev) in self.events.iter().enumerate() {
            let position = i as u64 + 1;
            if ev.event_id != position || ev.prev_digest != prev || ev.compute_digest() != ev.digest {
                return Verification::BrokenAt(position);
            }
            prev = ev.digest;
        }
        Verification::Valid
    }

    /// Appends a new event after checking the existing chain.
    pub fn append(&mut self, draft: EventDraft, at: Tick) -> Result<&ProvenanceEvent, MetadataError> {
        if let Verification::BrokenAt(id) = self.verify() {
            return Err(MetadataError::Integrity { broken_at: id });
        }
        if let Some(s) = &draft.sensor_metadata {
            s.validate()?;
        }
        let event = ProvenanceEvent::seal(draft, self.events.len() as u64 + 1, at, self.last_digest());
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn update_state(&mut self, snapshot: StateSnapshot) -> Result<(), MetadataError> {
        if snapshot.as_of < self.current_state.as_of {
            return Err(MetadataError::StateRegression {
                last: self.current_state.as_of,
                attempted: snapshot.as_of,
            });
        }
        self.current_state = snapshot;
        Ok(())
    }

    /// Digest over every stored event field, in order, and the current state.
    /// Unlike [`last_digest`](Self::last_digest) it is recomputed from the
    /// stored fields, so tampering anywhere changes it.
    pub fn head_digest(&self) -> Digest {
        let mut b = DigestBuilder::new("bundle-head");
        b.u64(self.events.len() as u64);
        for ev in &self.events {
            b.digest(&ev.compute_digest()).digest(&ev.digest);
        }
        self.current_state.hash_into(&mut b);
        b.finish()
    }
}

/// Verifies the provenance chain of `bundle`.
pub fn verify_bundle(bundle: &MetadataBundle) -> Verification {
    bundle.verify()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::EventKind;

    fn bundle(n: usize) -> MetadataBundle {
        let mut b = MetadataBundle::new();
        for i in 0..n {
            b.append(
                EventDraft::new(EventKind::ALL[i % 5], format!("actor-{i}")).with("i", i),
                i as Tick,
            )
            .unwrap();
        }
        b
    }

    /// Recomputes the chain from scratch, returning the 1-based position of
    /// the first event whose stored digest or link disagrees.
    fn oracle_first_break(events: &[ProvenanceEvent]) -> Option<u64> {
        let mut expected_prev = [0u8; 32];
        for (i, e) in events.iter().enumerate() {
            let mut probe = e.clone();
            probe.digest = Digest::ZERO;
            let fresh = ProvenanceEvent::seal(
                EventDraft {
                    kind: probe.kind,
                    actor_id: probe.actor_id.clone(),
                    sensor_metadata: probe.sensor_metadata.clone(),
                    payload: probe.payload.clone(),
                },
                probe.event_id,
                probe.timestamp,
                probe.prev_digest,
            );
            if e.prev_digest.as_bytes() != &expected_prev || fresh.digest != e.digest {
                return Some(i as u64 + 1);
            }
            expected_prev = *e.digest.as_bytes();
        }
        None
    }

    #[test]
    fn genesis_event_links_to_zero() {
        let b = bundle(1);
        assert_eq!(b.events()[0].event_id, 1);
        assert_eq!(b.events()[0].prev_digest, Digest::ZERO);
        assert!(b.verify().is_valid());
    }

    #[test]
    fn append_keeps_chain_valid() {
        let mut b = bundle(3);
        b.append(EventDraft::new(EventKind::CustodyTransfer, "o1").with("to", "o2"), 9)
            .unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.events()[3].prev_digest, b.events()[2].digest);
        assert_eq!(verify_bundle(&b), Verification::Valid);
    }

    #[test]
    fn tampered_payload_blocks_append() {
        let b = bundle(3);
        let mut events = b.events().to_vec();
        events[1].payload.insert("i".into(), "99".into());
        assert_eq!(oracle_first_break(&events), Some(2));
        let mut tampered = MetadataBundle::from_parts(events, b.current_state().clone());
        let err = tampered
            .append(EventDraft::new(EventKind::Maintenance, "x"), 10)
            .unwrap_err();
        assert_eq!(err, MetadataError::Integrity { broken_at: 2 });
        assert_eq!(tampered.len(), 3);
    }

    #[test]
    fn mutated_payload_breaks_at_that_event() {
        let b = bundle(5);
        assert!(b.verify().is_valid());
        let mut events = b.events().to_vec();
        events[2].payload.insert("note".into(), "forged".into());
        let t = MetadataBundle::from_parts(events, b.current_state().clone());
        assert_eq!(t.verify(), Verification::BrokenAt(3));
    }

    #[test]
    fn resealed_event_breaks_at_successor() {
        let b = bundle(5);
        let mut events = b.events().to_vec();
        events[2].payload.insert("note".into(), "forged".into());
        events[2].digest = events[2].compute_digest();
        assert_eq!(oracle_first_break(&events), Some(4));
        let t = MetadataBundle::from_parts(events, b.current_state().clone());
        assert_eq!(t.verify(), Verification::BrokenAt(4));
    }

    #[test]
    fn renumbered_event_is_detected() {
        let b = bundle(4);
        let mut events = b.events().to_vec();
        events[1].event_id = 7;
        events[1].digest = events[1].compute_digest();
        let t = MetadataBundle::from_parts(events, b.current_state().clone());
        assert_eq!(t.verify(), Verification::BrokenAt(2));
    }

    #[test]
    fn snapshots_never_go_back() {
        let mut b = bundle(1);
        let snap = |t| StateSnapshot {
            state: vec![StateVariable { name: "wear_index".into(), value: 0.2, unit: "1".into() }],
            as_of: t,
            source: SnapshotSource::ProxyEstimate,
        };
        b.update_state(snap(5)).unwrap();
        b.update_state(snap(5)).unwrap();
        assert_eq!(
            b.update_state(snap(4)).unwrap_err(),
            MetadataError::StateRegression { last: 5, attempted: 4 }
        );
        assert_eq!(b.current_state().get("wear_index"), Some(0.2));
    }

    #[test]
    fn head_digest_sees_stale_tampering() {
        let b = bundle(3);
        let mut events = b.events().to_vec();
        events[0].actor_id = "mallory".into();
        let t = MetadataBundle::from_parts(events, b.current_state().clone());
        assert_eq!(t.last_digest(), b.last_digest());
        assert_ne!(t.head_digest(), b.head_digest());
    }
}
