use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::confirm::{ConfirmedView, ConsensusConfig};
use super::dag::DagLedger;
use super::tips::select_tips;
use super::tx::{NodeId, Transaction, TxContents, TxKind};
use super::wire;
use super::LedgerError;
use crate::digest::Digest;

/// What a caller asks a node to put on the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxRequest {
    Mint {
        identity_id: String,
        sequence_digest: Digest,
        proxy_locator: String,
        owner_id: String,
    },
    MetadataUpdate {
        identity_id: String,
        sequence_digest: Digest,
    },
    OwnershipTransfer {
        identity_id: String,
        sequence_digest: Digest,
        from: String,
        to: String,
    },
}

impl TxRequest {
    pub fn identity_id(&self) -> &str {
        match self {
            TxRequest::Mint { identity_id, .. }
            | TxRequest::MetadataUpdate { identity_id, .. }
            | TxRequest::OwnershipTransfer { identity_id, .. } => identity_id,
        }
    }
}

/// One ledger replica.
#[derive(Debug, Clone)]
pub struct LedgerNode {
    id: NodeId,
    dag: DagLedger,
    peers: BTreeSet<NodeId>,
    honest: bool,
    config: ConsensusConfig,
    rng: ChaCha8Rng,
    clock: u64,
    /// Per peer, how much of the local insertion order has been sent.
    sent: BTreeMap<NodeId, usize>,
    orphans: Vec<Transaction>,
    dropped: u64,
}

impl LedgerNode {
    pub fn new(id: NodeId, config: ConsensusConfig, seed: u64) -> Self {
        LedgerNode {
            id,
            dag: DagLedger::new(),
            peers: BTreeSet::new(),
            honest: true,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed ^ (u64::from(id.0) << 32)),
            clock: 0,
            sent: BTreeMap::new(),
            orphans: Vec::new(),
            dropped: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn dag(&self) -> &DagLedger {
        &self.dag
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.config
    }

    pub fn peers(&self) -> &BTreeSet<NodeId> {
        &self.peers
    }

    pub fn add_peer(&mut self, peer: NodeId) {
        if peer != self.id {
            self.peers.insert(peer);
        }
    }

    pub fn remove_peer(&mut self, peer: NodeId) {
        self.peers.remove(&peer);
    }

    pub fn is_honest(&self) -> bool {
        self.honest
    }

    /// A dishonest node relays only the transactions it issued itself.
    pub fn set_honest(&mut self, honest: bool) {
        self.honest = honest;
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Transactions received with an id that does not match their contents.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.len()
    }

    pub fn view(&self) -> ConfirmedView {
        ConfirmedView::compute(&self.dag, self.config.confirmation_threshold)
    }

    pub fn confirmed_set(&self) -> BTreeSet<Digest> {
        super::confirm::confirmed_set(&self.dag, &self.config)
    }

    pub fn owner_of(&self, identity_id: &str) -> Option<String> {
        self.view().owner(&self.dag, identity_id).map(str::to_string)
    }

    fn mints_of<'a>(&'a self, identity_id: &'a str) -> impl Iterator<Item = usize> + 'a {
        (0..self.dag.len()).filter(move |&i| {
            let t = self.dag.at(i);
            t.kind == TxKind::Mint && t.identity_id == identity_id
        })
    }

    /// Validates a request against the local view, attaches it to two tips
    /// and stores it.
    pub fn submit(&mut self, request: TxRequest) -> Result<Transaction, LedgerError> {
        let identity_id = request.identity_id().to_string();
        if identity_id.is_empty() {
            return Err(LedgerError::EmptyField("identity_id"));
        }
        let view = self.view();
        let (kind, sequence_digest, proxy_locator, owner_id, prior) = match request {
            TxRequest::Mint {
                sequence_digest,
                proxy_locator,
                owner_id,
                ..
            } => {
                if proxy_locator.is_empty() {
                    return Err(LedgerError::EmptyField("proxy_locator"));
                }
                if owner_id.is_empty() {
                    return Err(LedgerError::EmptyField("owner_id"));
                }
                if self.mints_of(&identity_id).any(|i| !view.is_excluded(i)) {
                    return Err(LedgerError::DuplicateMint(identity_id));
                }
                (TxKind::Mint, sequence_digest, Some(proxy_locator), Some(owner_id), None)
            }
            TxRequest::MetadataUpdate { sequence_digest, .. } => {
                if self.mints_of(&identity_id).next().is_none() {
                    return Err(LedgerError::UnknownAsset(identity_id));
                }
                (TxKind::MetadataUpdate, sequence_digest, None, None, None)
            }
            TxRequest::OwnershipTransfer {
                sequence_digest,
                from,
                to,
                ..
            } => {
                if self.mints_of(&identity_id).next().is_none() {
                    return Err(LedgerError::UnknownAsset(identity_id));
                }
                if to.is_empty() {
                    return Err(LedgerError::EmptyField("owner_id"));
                }
                let head = view.ownership_head(&identity_id);
                let owner = head.and_then(|h| self.dag.at(h).owner_id.as_deref());
                if owner != Some(from.as_str()) {
                    return Err(LedgerError::Unauthorized {
                        actor: from,
                        identity_id,
                    });
                }
                let head_id = self.dag.at(head.expect("owner implies head")).tx_id;
                let pending = (0..self.dag.len()).any(|i| {
                    let t = self.dag.at(i);
                    t.kind == TxKind::OwnershipTransfer && t.prior == Some(head_id) && !view.is_excluded(i)
                });
                if pending {
                    return Err(LedgerError::PendingTransfer(identity_id));
                }
                (TxKind::OwnershipTransfer, sequence_digest, None, Some(to), Some(head_id))
            }
        };
        let [a, b] = select_tips(&self.dag, self.config.alpha, &mut self.rng);
        let parents = [self.dag.at(a).tx_id, self.dag.at(b).tx_id];
        let parent_clock = self.dag.at(a).timestamp.max(self.dag.at(b).timestamp);
        self.clock = self.clock.max(parent_clock) + 1;
        let tx = Transaction::seal(TxContents {
            kind,
            identity_id,
            sequence_digest,
            proxy_locator,
            owner_id,
            prior,
            parents,
            issuer: self.id,
            timestamp: self.clock,
        });
        self.dag.insert(tx.clone())?;
        Ok(tx)
    }

    /// Stores received transactions, deferring any whose parents are not yet
    /// known. Returns how many were newly stored.
    pub fn receive(&mut self, txs: impl IntoIterator<Item = Transaction>) -> usize {
        let mut stored = 0;
        for tx in txs {
            if self.dag.contains(&tx.tx_id) || self.orphans.iter().any(|o| o.tx_id == tx.tx_id) {
                continue;
            }
            if DagLedger::check_standalone(&tx).is_err() || tx.kind == TxKind::Genesis {
                self.dropped += 1;
                continue;
            }
            if self.dag.missing_parents(&tx).next().is_some() {
                self.orphans.push(tx);
                continue;
            }
            self.clock = self.clock.max(tx.timestamp);
            self.dag.insert(tx).expect("checked above");
            stored += 1;
            stored += self.adopt_orphans();
        }
        stored
    }

    fn adopt_orphans(&mut self) -> usize {
        let mut stored = 0;
        loop {
            let ready = self.orphans.iter().position(|o| self.dag.missing_parents(o).next().is_none());
            let Some(pos) = ready else {
                return stored;
            };
            let tx = self.orphans.remove(pos);
            self.clock = self.clock.max(tx.timestamp);
            self.dag.insert(tx).expect("parents present");
            stored += 1;
        }
    }

    /// Everything `peer` has not been sent yet, advancing the high-water mark.
    fn outgoing(&mut self, peer: NodeId) -> Vec<Transaction> {
        let from = self.sent.get(&peer).copied().unwrap_or(1);
        let txs = &self.dag.transactions()[from..];
        let out = txs
            .iter()
            .filter(|t| self.honest || t.issuer == self.id)
            .cloned()
            .collect();
        self.sent.insert(peer, self.dag.len());
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GossipStats {
    pub frames_sent: usize,
    pub stored: usize,
    pub dropped: usize,
}

/// One synchronous gossip round: every node sends each peer what it has
/// not sent it before, then all messages are delivered. A transaction
/// therefore travels one hop per round.
pub fn gossip_round(nodes: &mut [LedgerNode]) -> GossipStats {
    let position: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut inbox: Vec<Vec<String>> = vec![Vec::new(); nodes.len()];
    let mut stats = GossipStats::default();
    for node in nodes.iter_mut() {
        let peers: Vec<NodeId> = node.peers.iter().copied().collect();
        for peer in peers {
            let Some(&to) = position.get(&peer) else {
                continue;
            };
            let batch = node.outgoing(peer);
            if !batch.is_empty() {
                stats.frames_sent += batch.len();
                inbox[to].push(wire::encode_batch(&batch));
            }
        }
    }
    for (node, messages) in nodes.iter_mut().zip(inbox) {
        for m in messages {
            let mut good = Vec::new();
            for record in wire::decode_stream(&m) {
                match record {
                    Ok(tx) => good.push(tx),
                    Err(_) => {
                        node.dropped += 1;
                        stats.dropped += 1;
                    }
                }
            }
            let before = node.dropped;
            stats.stored += node.receive(good);
            stats.dropped += (node.dropped - before) as usize;
        }
    }
    stats
}

/// Injects raw wire frames into a node, as if received from the network.
pub fn deliver_frames(node: &mut LedgerNode, stream: &str) -> usize {
    let mut good = Vec::new();
    for record in wire::decode_stream(stream) {
        match record {
            Ok(tx) => good.push(tx),
            Err(_) => node.dropped += 1,
        }
    }
    node.receive(good)
}

/// Connects nodes along `edges` (undirected).
pub fn connect(nodes: &mut [LedgerNode], edges: &[(usize, usize)]) {
    for &(a, b) in edges {
        let (ia, ib) = (nodes[a].id, nodes[b].id);
        nodes[a].add_peer(ib);
        nodes[b].add_peer(ia);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mint(id: &str, owner: &str) -> TxRequest {
        TxRequest::Mint {
            identity_id: id.into(),
            sequence_digest: Digest::from_bytes([1; 32]),
            proxy_locator: format!("proxy://{id}"),
            owner_id: owner.into(),
        }
    }

    fn update(id: &str) -> TxRequest {
        TxRequest::MetadataUpdate {
            identity_id: id.into(),
            sequence_digest: Digest::from_bytes([2; 32]),
        }
    }

    fn transfer(id: &str, from: &str, to: &str) -> TxRequest {
        TxRequest::OwnershipTransfer {
            identity_id: id.into(),
            sequence_digest: Digest::from_bytes([3; 32]),
            from: from.into(),
            to: to.into(),
        }
    }

    fn small_threshold() -> ConsensusConfig {
        ConsensusConfig {
            confirmation_threshold: 3,
            ..Default::default()
        }
    }

    #[test]
    fn submit_rules() {
        let mut n = LedgerNode::new(NodeId(0), small_threshold(), 1);
        n.submit(mint("k1", "o1")).unwrap();
        assert_eq!(n.submit(mint("k1", "o2")).unwrap_err(), LedgerError::DuplicateMint("k1".into()));
        assert_eq!(n.submit(update("k9")).unwrap_err(), LedgerError::UnknownAsset("k9".into()));
        // mint not yet confirmed: nobody owns it
        assert!(matches!(
            n.submit(transfer("k1", "o1", "o2")).unwrap_err(),
            LedgerError::Unauthorized { .. }
        ));
        n.submit(update("k1")).unwrap();
        n.submit(update("k1")).unwrap();
        assert_eq!(n.owner_of("k1").as_deref(), Some("o1"));
        assert!(matches!(
            n.submit(transfer("k1", "u9", "u9")).unwrap_err(),
            LedgerError::Unauthorized { .. }
        ));
        let t = n.submit(transfer("k1", "o1", "o2")).unwrap();
        assert_eq!(t.prior, Some(n.dag().at(1).tx_id));
        assert_eq!(
            n.submit(transfer("k1", "o1", "o3")).unwrap_err(),
            LedgerError::PendingTransfer("k1".into())
        );
        n.submit(update("k1")).unwrap();
        n.submit(update("k1")).unwrap();
        assert_eq!(n.owner_of("k1").as_deref(), Some("o2"));
        assert!(matches!(
            n.submit(transfer("k1", "o1", "o3")).unwrap_err(),
            LedgerError::Unauthorized { .. }
        ));
    }

    #[test]
    fn timestamps_are_lamport() {
        let mut a = LedgerNode::new(NodeId(0), small_threshold(), 1);
        let mut b = LedgerNode::new(NodeId(1), small_threshold(), 1);
        for _ in 0..5 {
            a.submit(update("x")).ok();
        }
        a.submit(mint("x", "o")).unwrap();
        for _ in 0..4 {
            a.submit(update("x")).unwrap();
        }
        b.receive(a.dag().transactions()[1..].to_vec());
        let t = b.submit(update("x")).unwrap();
        assert!(t.timestamp > a.clock());
    }

    #[test]
    fn two_nodes_one_round() {
        let mut nodes = vec![
            LedgerNode::new(NodeId(0), small_threshold(), 1),
            LedgerNode::new(NodeId(1), small_threshold(), 1),
        ];
        connect(&mut nodes, &[(0, 1)]);
        let tx = nodes[0].submit(mint("k1", "o1")).unwrap();
        gossip_round(&mut nodes);
        assert!(nodes[1].dag().contains(&tx.tx_id));
    }

    #[test]
    fn line_needs_diameter_rounds() {
        let mut nodes: Vec<_> = (0..5).map(|i| LedgerNode::new(NodeId(i), small_threshold(), 1)).collect();
        connect(&mut nodes, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let tx = nodes[0].submit(mint("k1", "o1")).unwrap();
        for round in 1..=4 {
            gossip_round(&mut nodes);
            assert_eq!(nodes[4].dag().contains(&tx.tx_id), round == 4);
            assert!(nodes[round].dag().contains(&tx.tx_id));
        }
    }

    #[test]
    fn orphans_wait_for_parents() {
        let mut a = LedgerNode::new(NodeId(0), small_threshold(), 1);
        let first = a.submit(mint("k1", "o1")).unwrap();
        let second = a.submit(update("k1")).unwrap();
        let mut b = LedgerNode::new(NodeId(1), small_threshold(), 1);
        assert_eq!(b.receive([second.clone()]), 0);
        assert_eq!(b.orphan_count(), 1);
        assert_eq!(b.receive([first]), 2);
        assert_eq!(b.orphan_count(), 0);
        assert!(b.dag().contains(&second.tx_id));
    }

    #[test]
    fn forged_transactions_are_dropped() {
        let mut a = LedgerNode::new(NodeId(0), small_threshold(), 1);
        let mut tx = a.submit(mint("k1", "o1")).unwrap();
        tx.owner_id = Some("mallory".into());
        let mut b = LedgerNode::new(NodeId(1), small_threshold(), 1);
        assert_eq!(deliver_frames(&mut b, &wire::encode_tx(&tx)), 0);
        assert_eq!(b.dropped(), 1);
        assert_eq!(deliver_frames(&mut b, "12:garbage"), 0);
        assert_eq!(b.dropped(), 2);
        assert_eq!(b.dag().len(), 1);
    }

    #[test]
    fn dishonest_node_relays_only_its_own() {
        let mut nodes: Vec<_> = (0..3).map(|i| LedgerNode::new(NodeId(i), small_threshold(), 1)).collect();
        connect(&mut nodes, &[(0, 1), (1, 2)]);
        nodes[1].set_honest(false);
        let t0 = nodes[0].submit(mint("k1", "o1")).unwrap();
        let t1 = nodes[1].submit(mint("k2", "o1")).unwrap();
        for _ in 0..3 {
            gossip_round(&mut nodes);
        }
        assert!(nodes[2].dag().contains(&t1.tx_id));
        assert!(!nodes[2].dag().contains(&t0.tx_id));
        assert!(nodes[0].dag().contains(&t1.tx_id));
    }
}
