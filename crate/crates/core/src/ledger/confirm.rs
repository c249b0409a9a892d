use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::dag::DagLedger;
use super::tx::{TxId, TxKind};
use super::LedgerError;

pub const DEFAULT_CONFIRMATION_THRESHOLD: u64 = 10;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub confirmation_threshold: u64,
    pub adversary_fraction: f64,
    /// Tip-selection bias.
    pub alpha: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            confirmation_threshold: DEFAULT_CONFIRMATION_THRESHOLD,
            adversary_fraction: 0.0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.confirmation_threshold < 1 {
            return Err(LedgerError::InvalidConfig("confirmation threshold must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.adversary_fraction) {
            return Err(LedgerError::InvalidConfig("adversary fraction must lie in [0, 1)".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(LedgerError::InvalidConfig("alpha must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Among conflicting transactions, the heaviest wins; equal weight goes to
/// the smaller id.
pub fn conflict_winner(dag: &DagLedger, group: &[usize]) -> Option<usize> {
    group
        .iter()
        .copied()
        .max_by_key(|&i| (dag.weight_at(i), Reverse(dag.at(i).tx_id)))
}

/// The confirmed state of one ledger replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedView {
    confirmed: Vec<bool>,
    /// Transactions past the threshold that lost a conflict.
    excluded: BTreeSet<usize>,
    mint_of: HashMap<String, usize>,
    successor: HashMap<usize, usize>,
}

impl ConfirmedView {
    pub fn compute(dag: &DagLedger, threshold: u64) -> Self {
        let n = dag.len();
        let mut confirmed = vec![false; n];
        let mut passing = BTreeSet::new();
        let mut mints: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut transfers: HashMap<TxId, Vec<usize>> = HashMap::new();
        for (i, slot) in confirmed.iter_mut().enumerate() {
            if dag.weight_at(i) < threshold {
                continue;
            }
            passing.insert(i);
            let tx = dag.at(i);
            match tx.kind {
                TxKind::Genesis | TxKind::MetadataUpdate => *slot = true,
                TxKind::Mint => mints.entry(&tx.identity_id).or_default().push(i),
                TxKind::OwnershipTransfer => {
                    if let Some(prior) = tx.prior {
                        transfers.entry(prior).or_default().push(i);
                    }
                }
            }
        }
        let heaviest = |group: &[usize]| conflict_winner(dag, group).expect("groups are non-empty");
        let mut mint_of = HashMap::new();
        let mut successor = HashMap::new();
        let mut frontier = Vec::new();
        for (identity, group) in &mints {
            let w = heaviest(group);
            confirmed[w] = true;
            mint_of.insert(identity.to_string(), w);
            frontier.push(w);
        }
        while let Some(head) = frontier.pop() {
            let head_tx = dag.at(head);
            let Some(group) = transfers.get(&head_tx.tx_id) else {
                continue;
            };
            let same: Vec<usize> = group
                .iter()
                .copied()
                .filter(|&i| dag.at(i).identity_id == head_tx.identity_id)
                .collect();
            if same.is_empty() {
                continue;
            }
            let w = heaviest(&same);
            confirmed[w] = true;
            successor.insert(head, w);
            frontier.push(w);
        }
        let excluded = passing.into_iter().filter(|&i| !confirmed[i]).collect();
        ConfirmedView {
            confirmed,
            excluded,
            mint_of,
            successor,
        }
    }

    pub fn is_confirmed(&self, index: usize) -> bool {
        self.confirmed.get(index).copied().unwrap_or(false)
    }

    pub fn is_excluded(&self, index: usize) -> bool {
        self.excluded.contains(&index)
    }

    pub fn confirmed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.confirmed.iter().enumerate().filter(|(_, c)| **c).map(|(i, _)| i)
    }

    pub fn excluded_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.excluded.iter().copied()
    }

    /// Index of the confirmed mint for `identity_id`.
    pub fn mint_of(&self, identity_id: &str) -> Option<usize> {
        self.mint_of.get(identity_id).copied()
    }

    /// Index of the confirmed mint or transfer that currently establishes
    /// ownership of `identity_id`.
    pub fn ownership_head(&self, identity_id: &str) -> Option<usize> {
        let mut head = self.mint_of(identity_id)?;
        while let Some(&next) = self.successor.get(&head) {
            head = next;
        }
        Some(head)
    }

    pub fn owner<'a>(&self, dag: &'a DagLedger, identity_id: &str) -> Option<&'a str> {
        self.ownership_head(identity_id)
            .and_then(|h| dag.at(h).owner_id.as_deref())
    }
}

/// Ids of every confirmed transaction.
pub fn confirmed_set(dag: &DagLedger, config: &ConsensusConfig) -> BTreeSet<TxId> {
    let view = ConfirmedView::compute(dag, config.confirmation_threshold);
    view.confirmed_indices().map(|i| dag.at(i).tx_id).collect()
}
