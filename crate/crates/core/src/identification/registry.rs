use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{physical_hash, FeatureVector, IdentificationError, PhysicalHash};
use crate::digest::{Digest, DigestBuilder};
use crate::Tick;

/// Default sigma-normalised distance under which a scan matches an identity.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityId(String);

impl IdentityId {
    pub fn new(s: impl Into<String>) -> Self {
        IdentityId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A minted identity. Fields are read-only once minted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    identity_id: IdentityId,
    physical_hash: PhysicalHash,
    minted_at: Tick,
}

impl Identity {
    pub fn id(&self) -> &IdentityId {
        &self.identity_id
    }

    pub fn physical_hash(&self) -> &PhysicalHash {
        &self.physical_hash
    }

    pub fn minted_at(&self) -> Tick {
        self.minted_at
    }

    pub fn class_label(&self) -> &str {
        &self.physical_hash.class_label
    }

    pub fn digest(&self) -> Digest {
        let mut b = DigestBuilder::new("identity");
        b.str(self.identity_id.as_str())
            .digest(&self.physical_hash.digest)
            .u64(self.minted_at);
        b.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolutionKind {
    Resolved,
    Minted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub identity: Identity,
    pub kind: ResolutionKind,
    /// Distance to the matched identity; `None` when minted.
    pub distance: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RegistryState {
    identities: Vec<Identity>,
    next_seq: u64,
}

/// Identity store with an atomic resolve-or-mint operation.
#[derive(Debug)]
pub struct IdentityRegistry {
    state: Mutex<RegistryState>,
    quantization_factor: f64,
}

impl Default for IdentityRegistry {
    fn default() -> Self {
        Self::new(super::DEFAULT_QUANTIZATION_FACTOR)
    }
}

impl IdentityRegistry {
    pub fn new(quantization_factor: f64) -> Self {
        IdentityRegistry {
            state: Mutex::new(RegistryState::default()),
            quantization_factor,
        }
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, RegistryState>, IdentificationError> {
        self.state
            .lock()
            .map_err(|_| IdentificationError::Storage("registry lock poisoned".into()))
    }

    pub fn len(&self) -> usize {
        self.lock().map(|s| s.identities.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn identities(&self) -> Result<Vec<Identity>, IdentificationError> {
        Ok(self.lock()?.identities.clone())
    }

    pub fn get(&self, id: &IdentityId) -> Option<Identity> {
        self.lock()
            .ok()?
            .identities
            .iter()
            .find(|i| &i.identity_id == id)
            .cloned()
    }

    /// Resolves `fv` to the nearest registered identity of the same class if
    /// it lies within `match_threshold`, otherwise mints and registers a new
    /// one. Equal distances resolve to the smallest identity id.
    pub fn mint_or_resolve(
        &self,
        fv: &FeatureVector,
        match_threshold: f64,
        now: Tick,
    ) -> Result<Resolution, IdentificationError> {
        if !(match_threshold > 0.0 && match_threshold.is_finite()) {
            return Err(IdentificationError::BadThreshold(match_threshold));
        }
        let hash = physical_hash(fv, self.quantization_factor)?;
        let mut state = self.lock()?;

        let best = state
            .identities
            .iter()
            .filter_map(|ident| {
                ident
                    .physical_hash
                    .raw_features
                    .distance(fv)
                    .map(|d| (d, ident))
            })
            .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.identity_id.cmp(&b.identity_id)));

        if let Some((d, ident)) = best {
            if d <= match_threshold {
                return Ok(Resolution {
                    identity: ident.clone(),
                    kind: ResolutionKind::Resolved,
                    distance: Some(d),
                });
            }
        }

        state.next_seq += 1;
        let identity = Identity {
            identity_id: IdentityId(format!("{}-{:06}", fv.class_label, state.next_seq)),
            physical_hash: hash,
            minted_at: now,
        };
        state.identities.push(identity.clone());
        Ok(Resolution {
            identity,
            kind: ResolutionKind::Minted,
            distance: None,
        })
    }

    pub fn to_json(&self) -> Result<String, IdentificationError> {
        let state = self.lock()?;
        let doc = serde_json::json!({
            "quantization_factor": self.quantization_factor,
            "state": &*state,
        });
        serde_json::to_string_pretty(&doc).map_err(|e| IdentificationError::Storage(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, IdentificationError> {
        #[derive(Deserialize)]
        struct Doc {
            quantization_factor: f64,
            state: RegistryState,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| IdentificationError::Storage(e.to_string()))?;
        Ok(IdentityRegistry {
            state: Mutex::new(doc.state),
            quantization_factor: doc.quantization_factor,
        })
    }
}
