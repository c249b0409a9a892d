//! Line-delimited JSON export of a bundle: one `event` record per line in
//! chain order, followed by a single `state` record. Digests are lowercase
//! hex strings.
//!
//! ```text
//! {"record":"event","event_id":1,"kind":"Acquisition",...,"digest":"9f2c..."}
//! {"record":"state","state":[...],"as_of":12,"source":"ProxyEstimate"}
//! ```

use serde::{Deserialize, Serialize};

use super::{MetadataBundle, MetadataError, ProvenanceEvent, StateSnapshot};

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Event(ProvenanceEvent),
    State(StateSnapshot),
}

pub fn export_bundle(bundle: &MetadataBundle) -> String {
    let mut out = String::new();
    for ev in bundle.events() {
        out.push_str(&serde_json::to_string(&Record::Event(ev.clone())).expect("event serializes"));
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(&Record::State(bundle.current_state().clone())).expect("state serializes"));
    out.push('\n');
    out
}

/// Parses an exported bundle. The chain is not verified here.
pub fn import_bundle(text: &str) -> Result<MetadataBundle, MetadataError> {
    let mut events = Vec::new();
    let mut state = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| MetadataError::Codec {
            line: i + 1,
            message: e.to_string(),
        })?;
        match rec {
            Record::Event(e) => {
                if state.is_some() {
                    return Err(MetadataError::Codec {
                        line: i + 1,
                        message: "event record after state record".into(),
                    });
                }
                events.push(e)
            }
            Record::State(s) => {
                if state.replace(s).is_some() {
                    return Err(MetadataError::Codec {
                        line: i + 1,
                        message: "duplicate state record".into(),
                    });
                }
            }
        }
    }
    let state = state.ok_or(MetadataError::Codec {
        line: text.lines().count(),
        message: "missing state record".into(),
    })?;
    Ok(MetadataBundle::from_parts(events, state))
}
