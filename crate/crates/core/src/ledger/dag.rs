use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::tx::{Transaction, TxId, TxKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DagError {
    #[error("transaction {0} is already present")]
    Duplicate(TxId),
    #[error("transaction {0} does not hash to its id")]
    BadId(TxId),
    #[error("transaction {tx} references unknown parent {parent}")]
    MissingParent { tx: TxId, parent: TxId },
    #[error("only the genesis transaction may be a genesis record")]
    StrayGenesis,
}

/// Transactions linked by approval edges, with incrementally maintained
/// cumulative weights.
///
/// Transactions are stored in insertion order, which is always a
/// topological order: a transaction is accepted only once both parents are
/// present.
#[derive(Debug, Clone)]
pub struct DagLedger {
    txs: Vec<Transaction>,
    index: HashMap<TxId, usize>,
    parents: Vec<[usize; 2]>,
    approvers: Vec<Vec<usize>>,
    /// Bit `j` of `ancestry[i]` is set when `j` is an ancestor of `i`.
    ancestry: Vec<Vec<u64>>,
    weights: Weights,
    past_cone: Vec<u64>,
    tips: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
enum Weights {
    Full(Vec<u64>),
    /// Only the listed transactions are kept current; others are counted on
    /// demand.
    Watched(HashMap<usize, u64>),
}

impl Default for DagLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl DagLedger {
    pub fn new() -> Self {
        let genesis = Transaction::genesis();
        let mut index = HashMap::new();
        index.insert(genesis.tx_id, 0);
        DagLedger {
            txs: vec![genesis],
            index,
            parents: vec![[0, 0]],
            approvers: vec![Vec::new()],
            ancestry: vec![Vec::new()],
            weights: Weights::Full(vec![1]),
            past_cone: vec![1],
            tips: BTreeSet::from([0]),
        }
    }

    /// A ledger that keeps cumulative weights current only for transactions
    /// registered with [`DagLedger::watch`]. Other weights stay exact but
    /// cost a scan per query. Suited to long simulations where only a few
    /// weights matter.
    pub fn new_watched() -> Self {
        let mut d = Self::new();
        d.weights = Weights::Watched(HashMap::new());
        d
    }

    /// Keeps the weight of `index` current from now on.
    pub fn watch(&mut self, index: usize) {
        let w = self.count_weight(index);
        if let Weights::Watched(map) = &mut self.weights {
            map.insert(index, w);
        }
    }

    fn has_ancestor(&self, index: usize, ancestor: usize) -> bool {
        self.ancestry[index]
            .get(ancestor / 64)
            .is_some_and(|word| word & (1u64 << (ancestor % 64)) != 0)
    }

    fn count_weight(&self, index: usize) -> u64 {
        1 + (index + 1..self.txs.len())
            .filter(|&j| self.has_ancestor(j, index))
            .count() as u64
    }

    pub fn genesis(&self) -> &Transaction {
        &self.txs[0]
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &TxId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &TxId) -> Option<&Transaction> {
        self.index_of(id).map(|i| &self.txs[i])
    }

    pub fn at(&self, index: usize) -> &Transaction {
        &self.txs[index]
    }

    /// Transactions in insertion (topological) order.
    pub fn transactions(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn weight(&self, id: &TxId) -> Option<u64> {
        self.index_of(id).map(|i| self.weight_at(i))
    }

    /// Cumulative weight: one plus the number of direct and indirect
    /// approvers.
    pub fn weight_at(&self, index: usize) -> u64 {
        match &self.weights {
            Weights::Full(w) => w[index],
            Weights::Watched(map) => map.get(&index).copied().unwrap_or_else(|| self.count_weight(index)),
        }
    }

    /// Size of the transaction's past cone, itself included.
    pub fn past_cone_at(&self, index: usize) -> u64 {
        self.past_cone[index]
    }

    pub fn approvers_at(&self, index: usize) -> &[usize] {
        &self.approvers[index]
    }

    pub fn parents_at(&self, index: usize) -> [usize; 2] {
        self.parents[index]
    }

    /// Tip indices in insertion order.
    pub fn tips(&self) -> impl Iterator<Item = usize> + '_ {
        self.tips.iter().copied()
    }

    pub fn tip_count(&self) -> usize {
        self.tips.len()
    }

    /// Checks everything that does not depend on ledger state.
    pub fn check_standalone(tx: &Transaction) -> Result<(), DagError> {
        if !tx.id_is_valid() {
            return Err(DagError::BadId(tx.tx_id));
        }
        Ok(())
    }

    pub fn missing_parents<'a>(&'a self, tx: &'a Transaction) -> impl Iterator<Item = &'a TxId> + 'a {
        tx.distinct_parents().filter(|p| !self.contains(p))
    }

    /// Adds a transaction whose parents are already present and returns its
    /// index.
    pub fn insert(&mut self, tx: Transaction) -> Result<usize, DagError> {
        if self.contains(&tx.tx_id) {
            return Err(DagError::Duplicate(tx.tx_id));
        }
        Self::check_standalone(&tx)?;
        if tx.kind == TxKind::Genesis {
            return Err(DagError::StrayGenesis);
        }
        if let Some(p) = self.missing_parents(&tx).next() {
            return Err(DagError::MissingParent {
                tx: tx.tx_id,
                parent: *p,
            });
        }
        let n = self.txs.len();
        let pa = self.index[&tx.parents[0]];
        let pb = self.index[&tx.parents[1]];
        self.index.insert(tx.tx_id, n);
        self.txs.push(tx);
        self.parents.push([pa, pb]);
        self.approvers.push(Vec::new());
        self.approvers[pa].push(n);
        self.tips.remove(&pa);
        if pb != pa {
            self.approvers[pb].push(n);
            self.tips.remove(&pb);
        }
        self.tips.insert(n);
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; words];
        for p in [pa, pb] {
            for (dst, src) in bits.iter_mut().zip(&self.ancestry[p]) {
                *dst |= src;
            }
            bits[p / 64] |= 1u64 << (p % 64);
        }
        let cone: u64 = bits.iter().map(|w| u64::from(w.count_ones())).sum();
        self.past_cone.push(cone + 1);
        match &mut self.weights {
            Weights::Full(w) => {
                w.push(1);
                for (k, &word) in bits.iter().enumerate() {
                    let mut rest = word;
                    while rest != 0 {
                        w[k * 64 + rest.trailing_zeros() as usize] += 1;
                        rest &= rest - 1;
                    }
                }
            }
            Weights::Watched(map) => {
                for (&i, w) in map.iter_mut() {
                    if bits[i / 64] & (1u64 << (i % 64)) != 0 {
                        *w += 1;
                    }
                }
            }
        }
        self.ancestry.push(bits);
        Ok(n)
    }

    /// Cumulative weights recomputed from scratch by forward reachability.
    pub fn recompute_weights(&self) -> Vec<u64> {
        let n = self.txs.len();
        let mut seen = vec![usize::MAX; n];
        (0..n)
            .map(|start| {
                let mut count = 1u64;
                let mut stack = vec![start];
                seen[start] = start;
                while let Some(i) = stack.pop() {
                    for &a in &self.approvers[i] {
                        if seen[a] != start {
                            seen[a] = start;
                            count += 1;
                            stack.push(a);
                        }
                    }
                }
                count
            })
            .collect()
    }

    /// Structural check: every parent precedes its child and every edge is
    /// mirrored by an approver entry.
    pub fn is_acyclic(&self) -> bool {
        (1..self.txs.len()).all(|i| {
            let [a, b] = self.parents[i];
            a < i && b < i && self.approvers[a].contains(&i) && self.approvers[b].contains(&i)
        })
    }

    /// Graphviz rendering; edges point from a transaction to its parents.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ledger {\n  rankdir=RL;\n");
        for (i, tx) in self.txs.iter().enumerate() {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{} {}\\nw={}\"];",
                tx.tx_id.short(),
                tx.kind.as_str(),
                tx.identity_id,
                self.weight_at(i)
            );
        }
        for (i, tx) in self.txs.iter().enumerate().skip(1) {
            let [a, b] = self.parents[i];
            let mut ps = vec![a];
            if b != a {
                ps.push(b);
            }
            for p in ps {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", tx.tx_id.short(), self.txs[p].tx_id.short());
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::Digest;
    use crate::ledger::tx::{NodeId, TxContents};

    pub(crate) fn update(parents: [TxId; 2], ts: u64) -> Transaction {
        Transaction::seal(TxContents {
            kind: TxKind::MetadataUpdate,
            identity_id: "k".into(),
            sequence_digest: Digest::ZERO,
            proxy_locator: None,
            owner_id: None,
            prior: None,
            parents,
            issuer: NodeId(1),
            timestamp: ts,
        })
    }

    #[test]
    fn genesis_only() {
        let d = DagLedger::new();
        assert_eq!(d.len(), 1);
        assert_eq!(d.tips().collect::<Vec<_>>(), vec![0]);
        assert_eq!(d.weight_at(0), 1);
    }

    #[test]
    fn weights_count_distinct_approvers() {
        // g <- a <- c, g <- b <- c, c <- d
        let mut d = DagLedger::new();
        let g = d.genesis().tx_id;
        let a = update([g, g], 1);
        let b = update([g, g], 2);
        let (ai, bi) = (a.tx_id, b.tx_id);
        d.insert(a).unwrap();
        d.insert(b).unwrap();
        let c = update([ai, bi], 3);
        let ci = c.tx_id;
        d.insert(c).unwrap();
        d.insert(update([ci, ci], 4)).unwrap();
        assert_eq!(d.weight(&g), Some(5));
        assert_eq!(d.weight(&ai), Some(3));
        assert_eq!(d.weight(&bi), Some(3));
        assert_eq!(d.weight(&ci), Some(2));
        assert_eq!(d.past_cone_at(3), 4);
        assert_eq!(d.tip_count(), 1);
        assert_eq!(d.recompute_weights(), (0..d.len()).map(|i| d.weight_at(i)).collect::<Vec<_>>());
        assert!(d.is_acyclic());
    }

    #[test]
    fn watched_mode_agrees_with_full() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut full = DagLedger::new();
        let mut watched = DagLedger::new_watched();
        for ts in 1..300u64 {
            let n = full.len();
            let a = full.at(rng.random_range(n.saturating_sub(8)..n)).tx_id;
            let b = full.at(rng.random_range(n.saturating_sub(8)..n)).tx_id;
            let t = update([a, b], ts);
            full.insert(t.clone()).unwrap();
            watched.insert(t).unwrap();
            if ts == 5 || ts == 100 {
                watched.watch(ts as usize);
            }
        }
        let oracle = full.recompute_weights();
        for (i, &w) in oracle.iter().enumerate() {
            assert_eq!(full.weight_at(i), w);
            assert_eq!(watched.weight_at(i), w);
            assert_eq!(full.past_cone_at(i), watched.past_cone_at(i));
        }
    }

    #[test]
    fn insertion_errors() {
        let mut d = DagLedger::new();
        let g = d.genesis().tx_id;
        let a = update([g, g], 1);
        d.insert(a.clone()).unwrap();
        assert_eq!(d.insert(a.clone()), Err(DagError::Duplicate(a.tx_id)));
        let orphan = update([Digest::from_bytes([9; 32]), g], 2);
        assert!(matches!(d.insert(orphan), Err(DagError::MissingParent { .. })));
        let mut forged = update([g, g], 3);
        forged.timestamp = 99;
        assert!(matches!(d.insert(forged), Err(DagError::BadId(_))));
        assert_eq!(d.insert(Transaction::genesis()), Err(DagError::Duplicate(g)));
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn dot_lists_every_edge() {
        let mut d = DagLedger::new();
        let g = d.genesis().tx_id;
        let a = update([g, g], 1);
        let ai = a.tx_id;
        d.insert(a).unwrap();
        d.insert(update([ai, g], 2)).unwrap();
        let dot = d.to_dot();
        assert_eq!(dot.matches(" -> ").count(), 3);
        assert!(dot.starts_with("digraph"));
    }
}
