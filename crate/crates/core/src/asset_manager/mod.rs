//! Permissioned access to assets.
//!
//! Owners grant scoped access to users. Users either fetch the sequence
//! (identity, optionally with its provenance bundle) or open a handle that
//! streams the proxy estimate. Ownership is whatever the serving ledger node
//! has confirmed; the manager keeps no ownership table of its own.

mod access;
mod protocol;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use access::{decide, AccessGrant, DenyReason, Request, Scope};
pub use protocol::{handle_line, serve, WireRequest, WireResponse, WireStatus};

use crate::digest::Digest;
use crate::identification::Identity;
use crate::ledger::{gossip_round, GossipStats, LedgerError, LedgerNode, Transaction, TxId, TxRequest};
use crate::metadata::{
    compose_sequence, sequence_digest, EventDraft, EventKind, MetadataBundle, MetadataError, ProxyLocator,
    StateSnapshot,
};
use crate::proxy::DataProxy;
use crate::Tick;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManagerError {
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("`{actor}` is not the confirmed owner of `{identity_id}`")]
    Unauthorized { actor: String, identity_id: String },
    #[error("a grant needs at least one scope")]
    EmptyScope,
    #[error("proxy handle {0} is not valid")]
    InvalidHandle(u64),
    #[error("no ledger node at position {0}")]
    UnknownNode(usize),
    #[error("ledger rejected the request: {0}")]
    Ledger(LedgerError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
}

impl From<LedgerError> for ManagerError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Unauthorized { actor, identity_id } => ManagerError::Unauthorized { actor, identity_id },
            LedgerError::UnknownAsset(id) => ManagerError::UnknownAsset(id),
            other => ManagerError::Ledger(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManagedAsset {
    pub identity: Identity,
    pub bundle: MetadataBundle,
    pub proxy: DataProxy,
    pub locator: ProxyLocator,
    /// Ledger node the asset was minted at.
    pub home_node: usize,
}

impl ManagedAsset {
    pub fn sequence_digest(&self) -> Digest {
        sequence_digest(&self.identity, &self.bundle, &self.locator)
    }
}

/// The low-frequency answer: the identity, plus the bundle when metadata
/// was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceView {
    pub identity: Identity,
    pub bundle: Option<MetadataBundle>,
    pub proxy_locator: ProxyLocator,
    pub sequence_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyHandle {
    pub handle_id: u64,
    pub user_id: String,
    pub identity_id: String,
    pub locator: ProxyLocator,
    pub issued_at: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Sequence(SequenceView),
    ProxyHandle(ProxyHandle),
    Denied(DenyReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub tick: Tick,
    pub actor: String,
    pub verb: String,
    pub identity_id: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PendingTransfer {
    tx_id: TxId,
    identity_id: String,
    from: String,
    to: String,
}

/// Changes applied at a tick boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TickOutcome {
    pub confirmed_transfers: Vec<(String, String, String)>,
    pub revoked_grants: usize,
    pub invalidated_handles: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct AssetManager {
    network: Vec<LedgerNode>,
    serving: usize,
    assets: BTreeMap<String, ManagedAsset>,
    /// Keyed by (identity, user): one effective grant per pair.
    grants: BTreeMap<(String, String), AccessGrant>,
    handles: BTreeMap<u64, ProxyHandle>,
    next_handle: u64,
    pending: Vec<PendingTransfer>,
    audit: Vec<AuditEntry>,
}

impl AssetManager {
    pub fn new(network: Vec<LedgerNode>, serving: usize) -> Result<Self, ManagerError> {
        if serving >= network.len() {
            return Err(ManagerError::UnknownNode(serving));
        }
        Ok(AssetManager {
            network,
            serving,
            assets: BTreeMap::new(),
            grants: BTreeMap::new(),
            handles: BTreeMap::new(),
            next_handle: 1,
            pending: Vec::new(),
            audit: Vec::new(),
        })
    }

    pub fn network(&self) -> &[LedgerNode] {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut [LedgerNode] {
        &mut self.network
    }

    pub fn serving_node(&self) -> &LedgerNode {
        &self.network[self.serving]
    }

    pub fn gossip(&mut self) -> GossipStats {
        gossip_round(&mut self.network)
    }

    pub fn asset(&self, identity_id: &str) -> Option<&ManagedAsset> {
        self.assets.get(identity_id)
    }

    pub fn assets(&self) -> impl Iterator<Item = (&str, &ManagedAsset)> {
        self.assets.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn proxy_mut(&mut self, identity_id: &str) -> Option<&mut DataProxy> {
        self.assets.get_mut(identity_id).map(|a| &mut a.proxy)
    }

    pub fn grants(&self) -> impl Iterator<Item = &AccessGrant> {
        self.grants.values()
    }

    pub fn active_grants(&self) -> impl Iterator<Item = &AccessGrant> {
        self.grants.values().filter(|g| !g.revoked)
    }

    pub fn handle(&self, handle_id: u64) -> Option<&ProxyHandle> {
        self.handles.get(&handle_id)
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn owner_of(&self, identity_id: &str) -> Option<String> {
        self.serving_node().owner_of(identity_id)
    }

    fn log(&mut self, tick: Tick, actor: &str, verb: &str, identity_id: &str, outcome: impl Into<String>) {
        self.audit.push(AuditEntry {
            tick,
            actor: actor.to_string(),
            verb: verb.to_string(),
            identity_id: identity_id.to_string(),
            outcome: outcome.into(),
        });
    }

    fn node_mut(&mut self, node: usize) -> Result<&mut LedgerNode, ManagerError> {
        self.network.get_mut(node).ok_or(ManagerError::UnknownNode(node))
    }

    /// Takes custody of a freshly identified asset and mints it at `node`.
    pub fn register(
        &mut self,
        identity: Identity,
        bundle: MetadataBundle,
        proxy: DataProxy,
        locator: ProxyLocator,
        owner_id: &str,
        node: usize,
    ) -> Result<Transaction, ManagerError> {
        let identity_id = identity.id().to_string();
        if self.assets.contains_key(&identity_id) {
            return Err(LedgerError::DuplicateMint(identity_id).into());
        }
        let sequence = compose_sequence(identity, bundle, locator)?;
        let tx = self.node_mut(node)?.submit(TxRequest::Mint {
            identity_id: identity_id.clone(),
            sequence_digest: sequence.digest(),
            proxy_locator: sequence.proxy_locator().to_string(),
            owner_id: owner_id.to_string(),
        })?;
        self.assets.insert(
            identity_id.clone(),
            ManagedAsset {
                identity: sequence.identity().clone(),
                bundle: sequence.bundle().clone(),
                proxy,
                locator: sequence.proxy_locator().clone(),
                home_node: node,
            },
        );
        let at = tx.timestamp;
        self.log(at, owner_id, "MINT", &identity_id, format!("tx {}", tx.tx_id.short()));
        Ok(tx)
    }

    /// Appends a provenance event and anchors the new sequence digest at
    /// the asset's home node.
    pub fn record_event(
        &mut self,
        identity_id: &str,
        draft: EventDraft,
        now: Tick,
    ) -> Result<Transaction, ManagerError> {
        let asset = self
            .assets
            .get_mut(identity_id)
            .ok_or_else(|| ManagerError::UnknownAsset(identity_id.to_string()))?;
        asset.bundle.append(draft, now)?;
        let digest = asset.sequence_digest();
        let home = asset.home_node;
        let tx = self.network[home].submit(TxRequest::MetadataUpdate {
            identity_id: identity_id.to_string(),
            sequence_digest: digest,
        })?;
        Ok(tx)
    }

    /// Anchors the current sequence digest at `node` without a new event.
    pub fn anchor(&mut self, identity_id: &str, node: usize) -> Result<Transaction, ManagerError> {
        let digest = self
            .assets
            .get(identity_id)
            .ok_or_else(|| ManagerError::UnknownAsset(identity_id.to_string()))?
            .sequence_digest();
        let tx = self.node_mut(node)?.submit(TxRequest::MetadataUpdate {
            identity_id: identity_id.to_string(),
            sequence_digest: digest,
        })?;
        Ok(tx)
    }

    pub fn update_state(&mut self, identity_id: &str, snapshot: StateSnapshot) -> Result<(), ManagerError> {
        let asset = self
            .assets
            .get_mut(identity_id)
            .ok_or_else(|| ManagerError::UnknownAsset(identity_id.to_string()))?;
        asset.bundle.update_state(snapshot)?;
        Ok(())
    }

    fn require_owner(&self, actor: &str, identity_id: &str) -> Result<(), ManagerError> {
        if !self.assets.contains_key(identity_id) {
            return Err(ManagerError::UnknownAsset(identity_id.to_string()));
        }
        if self.owner_of(identity_id).as_deref() != Some(actor) {
            return Err(ManagerError::Unauthorized {
                actor: actor.to_string(),
                identity_id: identity_id.to_string(),
            });
        }
        Ok(())
    }

    /// Records (or replaces) `user_id`'s grant on `identity_id`.
    pub fn grant(
        &mut self,
        owner_id: &str,
        user_id: &str,
        identity_id: &str,
        scope: impl IntoIterator<Item = Scope>,
        now: Tick,
    ) -> Result<AccessGrant, ManagerError> {
        let scope: std::collections::BTreeSet<Scope> = scope.into_iter().collect();
        if let Err(e) = self.require_owner(owner_id, identity_id) {
            self.log(now, owner_id, "GRANT", identity_id, format!("error: {e}"));
            return Err(e);
        }
        if scope.is_empty() {
            return Err(ManagerError::EmptyScope);
        }
        let g = AccessGrant {
            owner_id: owner_id.to_string(),
            user_id: user_id.to_string(),
            identity_id: identity_id.to_string(),
            scope,
            granted_at: now,
            revoked: false,
        };
        let names: Vec<String> = g.scope.iter().map(Scope::to_string).collect();
        self.log(now, owner_id, "GRANT", identity_id, format!("{user_id} {{{}}}", names.join(",")));
        self.grants
            .insert((identity_id.to_string(), user_id.to_string()), g.clone());
        Ok(g)
    }

    pub fn revoke(&mut self, owner_id: &str, user_id: &str, identity_id: &str, now: Tick) -> Result<(), ManagerError> {
        if let Err(e) = self.require_owner(owner_id, identity_id) {
            self.log(now, owner_id, "REVOKE", identity_id, format!("error: {e}"));
            return Err(e);
        }
        if let Some(g) = self.grants.get_mut(&(identity_id.to_string(), user_id.to_string())) {
            g.revoked = true;
        }
        self.log(now, owner_id, "REVOKE", identity_id, user_id.to_string());
        Ok(())
    }

    pub fn query(
        &mut self,
        user_id: &str,
        identity_id: &str,
        request: Request,
        now: Tick,
    ) -> Result<QueryResult, ManagerError> {
        let Some(asset) = self.assets.get(identity_id) else {
            self.log(now, user_id, "QUERY", identity_id, "error: unknown asset");
            return Err(ManagerError::UnknownAsset(identity_id.to_string()));
        };
        let owner = self.owner_of(identity_id);
        let grant = self.grants.get(&(identity_id.to_string(), user_id.to_string()));
        let result = match decide(user_id, owner.as_deref(), grant, request) {
            Err(reason) => QueryResult::Denied(reason),
            Ok(()) => match request {
                Request::Identity | Request::Metadata => QueryResult::Sequence(SequenceView {
                    identity: asset.identity.clone(),
                    bundle: (request == Request::Metadata).then(|| asset.bundle.clone()),
                    proxy_locator: asset.locator.clone(),
                    sequence_digest: asset.sequence_digest(),
                }),
                Request::ProxyStream => {
                    let h = ProxyHandle {
                        handle_id: self.next_handle,
                        user_id: user_id.to_string(),
                        identity_id: identity_id.to_string(),
                        locator: asset.locator.clone(),
                        issued_at: now,
                    };
                    self.next_handle += 1;
                    self.handles.insert(h.handle_id, h.clone());
                    QueryResult::ProxyHandle(h)
                }
            },
        };
        let outcome = match &result {
            QueryResult::Sequence(_) => format!("{request}: sequence"),
            QueryResult::ProxyHandle(h) => format!("{request}: handle {}", h.handle_id),
            QueryResult::Denied(r) => format!("{request}: denied ({r})"),
        };
        self.log(now, user_id, "QUERY", identity_id, outcome);
        Ok(result)
    }

    /// Reads the live proxy estimate through a handle.
    pub fn read_proxy(&self, handle_id: u64) -> Result<StateSnapshot, ManagerError> {
        let h = self.handles.get(&handle_id).ok_or(ManagerError::InvalidHandle(handle_id))?;
        let asset = self
            .assets
            .get(&h.identity_id)
            .ok_or_else(|| ManagerError::UnknownAsset(h.identity_id.clone()))?;
        Ok(asset.proxy.snapshot())
    }

    /// Submits an ownership transfer at `node` and records the custody change
    /// in the asset's provenance.
    pub fn transfer(
        &mut self,
        owner_id: &str,
        new_owner_id: &str,
        identity_id: &str,
        node: usize,
        now: Tick,
    ) -> Result<Transaction, ManagerError> {
        if !self.assets.contains_key(identity_id) {
            return Err(ManagerError::UnknownAsset(identity_id.to_string()));
        }
        let digest = self.assets[identity_id].sequence_digest();
        let submitted = self.node_mut(node).and_then(|n| {
            n.submit(TxRequest::OwnershipTransfer {
                identity_id: identity_id.to_string(),
                sequence_digest: digest,
                from: owner_id.to_string(),
                to: new_owner_id.to_string(),
            })
            .map_err(ManagerError::from)
        });
        let tx = match submitted {
            Ok(tx) => tx,
            Err(e) => {
                self.log(now, owner_id, "TRANSFER", identity_id, format!("error: {e}"));
                return Err(e);
            }
        };
        let asset = self.assets.get_mut(identity_id).expect("checked above");
        asset.bundle.append(
            EventDraft::new(EventKind::CustodyTransfer, owner_id)
                .with("from", owner_id)
                .with("to", new_owner_id)
                .with("tx_id", tx.tx_id.to_hex()),
            now,
        )?;
        self.pending.push(PendingTransfer {
            tx_id: tx.tx_id,
            identity_id: identity_id.to_string(),
            from: owner_id.to_string(),
            to: new_owner_id.to_string(),
        });
        self.log(now, owner_id, "TRANSFER", identity_id, format!("to {new_owner_id}, tx {}", tx.tx_id.short()));
        Ok(tx)
    }

    /// Tick boundary: settles transfers the serving node has decided,
    /// revoking grants issued by former owners, and invalidates handles
    /// whose access no longer stands.
    pub fn tick(&mut self, now: Tick) -> TickOutcome {
        let mut out = TickOutcome::default();
        let view = self.serving_node().view();
        let mut settled = Vec::new();
        let mut still_pending = Vec::new();
        let pending = std::mem::take(&mut self.pending);
        let dag = self.network[self.serving].dag();
        for p in pending {
            match dag.index_of(&p.tx_id) {
                Some(i) if view.is_confirmed(i) => settled.push(p),
                Some(i) if view.is_excluded(i) => {}
                Some(_) => still_pending.push(p),
                // not yet gossiped to the serving node
                None => still_pending.push(p),
            }
        }
        self.pending = still_pending;
        for p in settled {
            for g in self.grants.values_mut() {
                if g.identity_id == p.identity_id && g.owner_id == p.from && !g.revoked {
                    g.revoked = true;
                    out.revoked_grants += 1;
                }
            }
            self.log(now, &p.from, "TRANSFER", &p.identity_id, format!("confirmed to {}", p.to));
            out.confirmed_transfers.push((p.identity_id, p.from, p.to));
        }
        let mut stale = Vec::new();
        for (id, h) in &self.handles {
            let owner = self.owner_of(&h.identity_id);
            let grant = self.grants.get(&(h.identity_id.clone(), h.user_id.clone()));
            if decide(&h.user_id, owner.as_deref(), grant, Request::ProxyStream).is_err() {
                stale.push(*id);
            }
        }
        for id in &stale {
            let h = self.handles.remove(id).expect("listed above");
            self.log(now, &h.user_id, "HANDLE", &h.identity_id, format!("handle {id} invalidated"));
        }
        out.invalidated_handles = stale;
        out
    }
}
