use std::fmt;

use serde::{Deserialize, Serialize};

use super::{MetadataBundle, MetadataError, Verification};
use crate::digest::{Digest, DigestBuilder};
use crate::identification::Identity;

/// Address of a data proxy, e.g. `proxy://key-000001`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProxyLocator(String);

impl ProxyLocator {
    pub fn new(s: impl Into<String>) -> Result<Self, MetadataError> {
        let s = s.into();
        if s.trim().is_empty() {
            return Err(MetadataError::EmptyLocator);
        }
        Ok(ProxyLocator(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProxyLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identity plus metadata bundle plus proxy address: the unit anchored on
/// the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsSequence {
    identity: Identity,
    bundle: MetadataBundle,
    proxy_locator: ProxyLocator,
}

impl CpsSequence {
    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn bundle(&self) -> &MetadataBundle {
        &self.bundle
    }

    pub fn proxy_locator(&self) -> &ProxyLocator {
        &self.proxy_locator
    }

    pub fn digest(&self) -> Digest {
        sequence_digest(&self.identity, &self.bundle, &self.proxy_locator)
    }
}

pub fn sequence_digest(identity: &Identity, bundle: &MetadataBundle, locator: &ProxyLocator) -> Digest {
    let mut b = DigestBuilder::new("cps-sequence");
    b.digest(&identity.digest())
        .digest(&bundle.head_digest())
        .str(locator.as_str());
    b.finish()
}

pub fn compose_sequence(
    identity: Identity,
    bundle: MetadataBundle,
    proxy_locator: ProxyLocator,
) -> Result<CpsSequence, MetadataError> {
    if let Verification::BrokenAt(id) = bundle.verify() {
        return Err(MetadataError::Integrity { broken_at: id });
    }
    Ok(CpsSequence {
        identity,
        bundle,
        proxy_locator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::{characterize, FeatureSchema, IdentityRegistry, Observation, SchemaRegistry};
    use crate::metadata::{EventDraft, EventKind};

    fn identity() -> Identity {
        let mut s = SchemaRegistry::new();
        s.register(FeatureSchema::builtin_key()).unwrap();
        let obs: Observation = [
            ("cut_depth_1", 2.0),
            ("cut_depth_2", 3.5),
            ("cut_depth_3", 1.0),
            ("cut_depth_4", 4.0),
            ("cut_depth_5", 2.5),
            ("wear_index", 0.1),
            ("material_score", 0.9),
        ]
        .into_iter()
        .collect();
        let fv = characterize(&s, "key", &obs).unwrap();
        IdentityRegistry::default().mint_or_resolve(&fv, 3.0, 0).unwrap().identity
    }

    fn one_event() -> MetadataBundle {
        let mut b = MetadataBundle::new();
        b.append(EventDraft::new(EventKind::Acquisition, "cam"), 0).unwrap();
        b
    }

    #[test]
    fn deterministic_digest() {
        let a = compose_sequence(identity(), one_event(), ProxyLocator::new("proxy://k1").unwrap()).unwrap();
        let b = compose_sequence(identity(), one_event(), ProxyLocator::new("proxy://k1").unwrap()).unwrap();
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn locator_changes_digest() {
        let id = identity();
        let a = compose_sequence(id.clone(), one_event(), ProxyLocator::new("proxy://k1").unwrap()).unwrap();
        let b = compose_sequence(id.clone(), one_event(), ProxyLocator::new("proxy://k2").unwrap()).unwrap();
        // oracle: the same composite digest with only the locator swapped
        let oracle = |loc: &str| {
            let mut d = DigestBuilder::new("cps-sequence");
            d.digest(&id.digest()).digest(&one_event().head_digest()).str(loc);
            d.finish()
        };
        assert_eq!(a.digest(), oracle("proxy://k1"));
        assert_eq!(b.digest(), oracle("proxy://k2"));
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn rejects_broken_bundle_and_empty_locator() {
        let b = one_event();
        let mut events = b.events().to_vec();
        events[0].actor_id = "x".into();
        let broken = MetadataBundle::from_parts(events, b.current_state().clone());
        assert_eq!(
            compose_sequence(identity(), broken, ProxyLocator::new("proxy://k1").unwrap()).unwrap_err(),
            MetadataError::Integrity { broken_at: 1 }
        );
        assert_eq!(ProxyLocator::new("  ").unwrap_err(), MetadataError::EmptyLocator);
    }
}
