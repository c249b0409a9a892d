use std::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::{Digest, DigestBuilder};

pub type TxId = Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Genesis,
    Mint,
    MetadataUpdate,
    OwnershipTransfer,
}

impl TxKind {
    pub const ALL: [TxKind; 4] = [
        TxKind::Genesis,
        TxKind::Mint,
        TxKind::MetadataUpdate,
        TxKind::OwnershipTransfer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Genesis => "genesis",
            TxKind::Mint => "mint",
            TxKind::MetadataUpdate => "update",
            TxKind::OwnershipTransfer => "transfer",
        }
    }

    pub fn parse(s: &str) -> Option<TxKind> {
        TxKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// A ledger record. `tx_id` is the digest of every other field.
///
/// `owner_id` is set on mints and transfers. A transfer also names `prior`,
/// the mint or transfer that established the ownership it hands over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: TxId,
    pub kind: TxKind,
    pub identity_id: String,
    pub sequence_digest: Digest,
    pub proxy_locator: Option<String>,
    pub owner_id: Option<String>,
    pub prior: Option<TxId>,
    pub parents: [TxId; 2],
    pub issuer: NodeId,
    pub timestamp: u64,
}

impl Transaction {
    /// The shared root every ledger starts from.
    pub fn genesis() -> Transaction {
        Transaction::seal(TxContents {
            kind: TxKind::Genesis,
            identity_id: String::new(),
            sequence_digest: Digest::ZERO,
            proxy_locator: None,
            owner_id: None,
            prior: None,
            parents: [Digest::ZERO; 2],
            issuer: NodeId(0),
            timestamp: 0,
        })
    }

    pub fn seal(c: TxContents) -> Transaction {
        let mut tx = Transaction {
            tx_id: Digest::ZERO,
            kind: c.kind,
            identity_id: c.identity_id,
            sequence_digest: c.sequence_digest,
            proxy_locator: c.proxy_locator,
            owner_id: c.owner_id,
            prior: c.prior,
            parents: c.parents,
            issuer: c.issuer,
            timestamp: c.timestamp,
        };
        tx.tx_id = tx.compute_id();
        tx
    }

    pub fn compute_id(&self) -> TxId {
        let mut b = DigestBuilder::new("ledger-tx");
        b.str(self.kind.as_str())
            .str(&self.identity_id)
            .digest(&self.sequence_digest)
            .opt_str(self.proxy_locator.as_deref())
            .opt_str(self.owner_id.as_deref())
            .opt_str(self.prior.map(|p| p.to_hex()).as_deref())
            .digest(&self.parents[0])
            .digest(&self.parents[1])
            .u64(self.issuer.0 as u64)
            .u64(self.timestamp);
        b.finish()
    }

    pub fn id_is_valid(&self) -> bool {
        self.compute_id() == self.tx_id
    }

    /// Distinct parent ids (a transaction may approve the same tip twice).
    pub fn distinct_parents(&self) -> impl Iterator<Item = &TxId> {
        let dup = self.parents[0] == self.parents[1];
        self.parents.iter().take(if dup { 1 } else { 2 })
    }
}

/// Everything but the id, for building a [`Transaction`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxContents {
    pub kind: TxKind,
    pub identity_id: String,
    pub sequence_digest: Digest,
    pub proxy_locator: Option<String>,
    pub owner_id: Option<String>,
    pub prior: Option<TxId>,
    pub parents: [TxId; 2],
    pub issuer: NodeId,
    pub timestamp: u64,
}
