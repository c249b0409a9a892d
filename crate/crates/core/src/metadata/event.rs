use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::MetadataError;
use crate::digest::{Digest, DigestBuilder};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Acquisition,
    Modification,
    Maintenance,
    CustodyTransfer,
    ConditionTrigger,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::Acquisition,
        EventKind::Modification,
        EventKind::Maintenance,
        EventKind::CustodyTransfer,
        EventKind::ConditionTrigger,
    ];

    fn tag(self) -> &'static str {
        match self {
            EventKind::Acquisition => "acquisition",
            EventKind::Modification => "modification",
            EventKind::Maintenance => "maintenance",
            EventKind::CustodyTransfer => "custody_transfer",
            EventKind::ConditionTrigger => "condition_trigger",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Where a reading came from: the sensor, the device variant that produced
/// it, the clock that stamped it and optionally where it was taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMetadata {
    pub sensor_details: String,
    pub device_variant: String,
    pub clock_source: String,
    pub clock_reading: u64,
    pub geospatial: Option<GeoPoint>,
}

impl SensorMetadata {
    pub fn validate(&self) -> Result<(), MetadataError> {
        if let Some(g) = self.geospatial {
            if !(-90.0..=90.0).contains(&g.lat) || !(-180.0..=180.0).contains(&g.lon) {
                return Err(MetadataError::InvalidSensorMetadata(format!(
                    "coordinates ({}, {}) out of range",
                    g.lat, g.lon
                )));
            }
        }
        Ok(())
    }
}

/// Input for a new provenance event; ids and digests are assigned on append.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub kind: EventKind,
    pub actor_id: String,
    pub sensor_metadata: Option<SensorMetadata>,
    pub payload: BTreeMap<String, String>,
}

impl EventDraft {
    pub fn new(kind: EventKind, actor_id: impl Into<String>) -> Self {
        EventDraft {
            kind,
            actor_id: actor_id.into(),
            sensor_metadata: None,
            payload: BTreeMap::new(),
        }
    }

    pub fn with_sensor(mut self, sensor: SensorMetadata) -> Self {
        self.sensor_metadata = Some(sensor);
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.payload.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEvent {
    pub event_id: u64,
    pub kind: EventKind,
    pub timestamp: Tick,
    pub actor_id: String,
    pub sensor_metadata: Option<SensorMetadata>,
    pub payload: BTreeMap<String, String>,
    pub prev_digest: Digest,
    pub digest: Digest,
}

impl ProvenanceEvent {
    /// Digest over every field except `digest` itself.
    pub fn compute_digest(&self) -> Digest {
        let mut b = DigestBuilder::new("provenance-event");
        b.u64(self.event_id)
            .str(self.kind.tag())
            .u64(self.timestamp)
            .str(&self.actor_id);
        match &self.sensor_metadata {
            None => {
                b.u64(0);
            }
            Some(s) => {
                b.u64(1)
                    .str(&s.sensor_details)
                    .str(&s.device_variant)
                    .str(&s.clock_source)
                    .u64(s.clock_reading);
                match s.geospatial {
                    None => b.u64(0),
                    Some(g) => b.u64(1).f64(g.lat).f64(g.lon),
                };
            }
        }
        b.u64(self.payload.len() as u64);
        for (k, v) in &self.payload {
            b.str(k).str(v);
        }
        b.digest(&self.prev_digest);
        b.finish()
    }

    pub(crate) fn seal(draft: EventDraft, event_id: u64, timestamp: Tick, prev_digest: Digest) -> Self {
        let mut ev = ProvenanceEvent {
            event_id,
            kind: draft.kind,
            timestamp,
            actor_id: draft.actor_id,
            sensor_metadata: draft.sensor_metadata,
            payload: draft.payload,
            prev_digest,
            digest: Digest::ZERO,
        };
        ev.digest = ev.compute_digest();
        ev
    }
}
