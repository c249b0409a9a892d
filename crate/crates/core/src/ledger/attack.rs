//! Parasite-chain double-mint attack.
//!
//! Honest nodes share one fully connected network: whatever is issued in a
//! round is seen by every honest node at the start of the next, so a single
//! replica stands for all of them. At round 0 an honest node mints the
//! target asset; the adversary mints a conflicting token on genesis and
//! grows a private sub-DAG that approves only its own transactions. It
//! publishes once the honest mint is confirmed and its own mint is heavier.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::confirm::{conflict_winner, ConsensusConfig};
use super::dag::DagLedger;
use super::tips::select_tips;
use super::tx::{NodeId, Transaction, TxContents, TxKind};
use super::LedgerError;
use crate::digest::{Digest, DigestBuilder};

pub const TARGET_IDENTITY: &str = "target";
pub const ADVERSARY_NODE: NodeId = NodeId(u32::MAX);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub honest_count: usize,
    pub adversary_fraction: f64,
    pub rounds: u64,
    pub seed: u64,
    pub config: ConsensusConfig,
}

impl AttackParams {
    pub fn new(adversary_fraction: f64, rounds: u64, seed: u64) -> Self {
        AttackParams {
            honest_count: 10,
            adversary_fraction,
            rounds,
            seed,
            config: ConsensusConfig {
                adversary_fraction,
                ..ConsensusConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub seed: u64,
    pub adversary_fraction: f64,
    pub honest_count: usize,
    pub rounds: u64,
    pub rounds_run: u64,
    pub honest_txs: u64,
    pub adversary_txs: u64,
    pub target_confirmed_at: Option<u64>,
    pub released_at: Option<u64>,
    pub reverted_confirmations: u64,
    pub success: bool,
    /// Digest over the honest replica's transaction ids, in order.
    pub dag_digest: Digest,
}

impl AttackReport {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |r| r.to_string());
        format!(
            "seed={}\nfraction={}\nhonest_nodes={}\nrounds={}\nrounds_run={}\nhonest_txs={}\nadversary_txs={}\n\
             target_confirmed_at={}\nreleased_at={}\nreverted_confirmations={}\nsuccess={}\ndag_digest={}\n",
            self.seed,
            self.adversary_fraction,
            self.honest_count,
            self.rounds,
            self.rounds_run,
            self.honest_txs,
            self.adversary_txs,
            opt(self.target_confirmed_at),
            opt(self.released_at),
            self.reverted_confirmations,
            self.success,
            self.dag_digest
        )
    }
}

fn issue(
    dag: &DagLedger,
    kind: TxKind,
    owner: Option<&str>,
    issuer: NodeId,
    round: u64,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Transaction {
    let [a, b] = select_tips(dag, alpha, rng);
    let mut payload = DigestBuilder::new("attack-payload");
    payload.u64(rng.random());
    Transaction::seal(TxContents {
        kind,
        identity_id: TARGET_IDENTITY.into(),
        sequence_digest: payload.finish(),
        proxy_locator: (kind == TxKind::Mint).then(|| format!("proxy://{TARGET_IDENTITY}")),
        owner_id: owner.map(str::to_string),
        prior: None,
        parents: [dag.at(a).tx_id, dag.at(b).tx_id],
        issuer,
        timestamp: round,
    })
}

pub fn run_attack(params: &AttackParams) -> Result<AttackReport, LedgerError> {
    params.config.validate()?;
    if params.honest_count == 0 {
        return Err(LedgerError::InvalidConfig("at least one honest node is required".into()));
    }
    let f = params.adversary_fraction;
    if !(0.0..1.0).contains(&f) {
        return Err(LedgerError::InvalidConfig("adversary fraction must lie in [0, 1)".into()));
    }
    let alpha = params.config.alpha;
    let threshold = params.config.confirmation_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let honest_rate = Poisson::new(1.0).expect("unit rate");
    let adversary_rate = (f > 0.0).then(|| Poisson::new(f / (1.0 - f)).expect("positive rate"));

    let mut honest = DagLedger::new_watched();
    let mut private = DagLedger::new_watched();
    let target = issue(&honest, TxKind::Mint, Some("owner"), NodeId(0), 0, alpha, &mut rng);
    let target_idx = honest.insert(target)?;
    honest.watch(target_idx);
    let mut adversary_mint = None;
    if adversary_rate.is_some() {
        let m = issue(&private, TxKind::Mint, Some("adversary"), ADVERSARY_NODE, 0, alpha, &mut rng);
        let idx = private.insert(m)?;
        private.watch(idx);
        adversary_mint = Some(idx);
    }

    let mut report = AttackReport {
        seed: params.seed,
        adversary_fraction: f,
        honest_count: params.honest_count,
        rounds: params.rounds,
        rounds_run: 0,
        honest_txs: 1,
        adversary_txs: adversary_mint.map_or(0, |_| 1),
        target_confirmed_at: None,
        released_at: None,
        reverted_confirmations: 0,
        success: false,
        dag_digest: Digest::ZERO,
    };
    // honest-replica indices of the contested mints, with their last status
    let mut tracked: Vec<(usize, bool)> = vec![(target_idx, false)];

    for round in 1..=params.rounds {
        report.rounds_run = round;
        let k = honest_rate.sample(&mut rng) as u64;
        let mut pending = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let issuer = NodeId(rng.random_range(0..params.honest_count as u32));
            pending.push(issue(&honest, TxKind::MetadataUpdate, None, issuer, round, alpha, &mut rng));
        }
        report.honest_txs += k;
        if let (Some(rate), None) = (adversary_rate, report.released_at) {
            let k = rate.sample(&mut rng) as u64;
            for _ in 0..k {
                let t = issue(&private, TxKind::MetadataUpdate, None, ADVERSARY_NODE, round, alpha, &mut rng);
                private.insert(t)?;
            }
            report.adversary_txs += k;
        }
        for t in pending {
            honest.insert(t)?;
        }

        report.reverted_confirmations += settle(&honest, threshold, &mut tracked);
        let target_weight = honest.weight_at(target_idx);
        if report.target_confirmed_at.is_none() && tracked[0].1 {
            report.target_confirmed_at = Some(round);
        }
        if let (Some(m), None) = (adversary_mint, report.released_at) {
            if tracked[0].1 && private.weight_at(m) > target_weight {
                for t in &private.transactions()[1..] {
                    honest.insert(t.clone())?;
                }
                let idx = honest.index_of(&private.at(m).tx_id).expect("just inserted");
                honest.watch(idx);
                tracked.push((idx, false));
                report.released_at = Some(round);
                report.reverted_confirmations += settle(&honest, threshold, &mut tracked);
            }
        }
        if report.reverted_confirmations > 0 {
            report.success = true;
            break;
        }
    }
    let mut b = DigestBuilder::new("attack-dag");
    for t in honest.transactions() {
        b.digest(&t.tx_id);
    }
    report.dag_digest = b.finish();
    Ok(report)
}

/// Re-evaluates the contested mints; returns how many lost a confirmation
/// they previously held.
fn settle(dag: &DagLedger, threshold: u64, tracked: &mut [(usize, bool)]) -> u64 {
    let passing: Vec<usize> = tracked
        .iter()
        .map(|(i, _)| *i)
        .filter(|&i| dag.weight_at(i) >= threshold)
        .collect();
    let winner = conflict_winner(dag, &passing);
    let mut reverted = 0;
    for (idx, was) in tracked.iter_mut() {
        let now = Some(*idx) == winner;
        if *was && !now {
            reverted += 1;
        }
        *was = now;
    }
    reverted
}

/// Fraction of seeds in which the attack reverted a confirmation.
pub fn reversion_rate(reports: &[AttackReport]) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    reports.iter().filter(|r| r.success).count() as f64 / reports.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_adversary_no_reversion() {
        let r = run_attack(&AttackParams::new(0.0, 500, 1)).unwrap();
        assert!(!r.success);
        assert_eq!(r.reverted_confirmations, 0);
        assert_eq!(r.adversary_txs, 0);
        assert_eq!(r.rounds_run, 500);
        assert!(r.target_confirmed_at.is_some());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = run_attack(&AttackParams::new(0.3, 400, 5)).unwrap();
        let b = run_attack(&AttackParams::new(0.3, 400, 5)).unwrap();
        assert_eq!(a, b);
        let c = run_attack(&AttackParams::new(0.3, 400, 6)).unwrap();
        assert_ne!(a.dag_digest, c.dag_digest);
    }

    #[test]
    fn dominant_adversary_wins() {
        let r = run_attack(&AttackParams::new(0.8, 300, 2)).unwrap();
        assert!(r.success);
        assert!(r.released_at.unwrap() >= r.target_confirmed_at.unwrap());
        assert_eq!(r.rounds_run, r.released_at.unwrap());
        assert_eq!(r.reverted_confirmations, 1);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(run_attack(&AttackParams::new(1.0, 10, 1)).is_err());
        let mut p = AttackParams::new(0.1, 10, 1);
        p.honest_count = 0;
        assert!(run_attack(&p).is_err());
    }

    #[test]
    fn report_text_has_fields() {
        let r = run_attack(&AttackParams::new(0.0, 10, 1)).unwrap();
        let t = r.to_text();
        assert!(t.contains("seed=1\n"));
        assert!(t.contains("fraction=0\n"));
        assert!(t.contains("reverted_confirmations=0\n"));
        assert!(t.contains("success=false\n"));
    }
}
