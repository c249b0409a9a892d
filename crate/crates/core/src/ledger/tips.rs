use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::dag::DagLedger;

/// Draws an index with probability proportional to `exp(alpha * score)`.
///
/// Panics if `scores` is empty.
pub fn weighted_pick<R: Rng + ?Sized>(scores: &[f64], alpha: f64, rng: &mut R) -> usize {
    assert!(!scores.is_empty(), "weighted_pick needs at least one candidate");
    if scores.len() == 1 {
        return 0;
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (alpha * (s - top)).exp()).collect();
    match WeightedIndex::new(&weights) {
        Ok(dist) => dist.sample(rng),
        Err(_) => rng.random_range(0..scores.len()),
    }
}

/// Picks two parents among the current tips, scoring each tip by the size
/// of its past cone. The second pick differs from the first whenever more
/// than one tip exists.
pub fn select_tips<R: Rng + ?Sized>(dag: &DagLedger, alpha: f64, rng: &mut R) -> [usize; 2] {
    let mut tips: Vec<usize> = dag.tips().collect();
    let mut scores: Vec<f64> = tips.iter().map(|&t| dag.past_cone_at(t) as f64).collect();
    let first = weighted_pick(&scores, alpha, rng);
    let a = tips[first];
    if tips.len() == 1 {
        return [a, a];
    }
    tips.remove(first);
    scores.remove(first);
    let b = tips[weighted_pick(&scores, alpha, rng)];
    [a, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn genesis_twice_when_alone() {
        let dag = DagLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_tips(&dag, 0.5, &mut rng), [0, 0]);
    }

    #[test]
    fn zero_alpha_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[weighted_pick(&[1.0, 40.0, 3.0], 0.0, &mut rng)] += 1;
        }
        let p = 1.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn large_alpha_prefers_heavier() {
        // softmax oracle: P(heavier) = 1 / (1 + exp(-10 * 4)) > 0.9999
        let oracle = 1.0 / (1.0 + (-40.0f64).exp());
        assert!(oracle > 0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let heavy = (0..1000).filter(|_| weighted_pick(&[5.0, 1.0], 10.0, &mut rng) == 0).count();
        assert!(heavy >= 990, "{heavy}");
    }

    #[test]
    fn two_distinct_tips_when_available() {
        use crate::digest::Digest;
        use crate::ledger::tx::{NodeId, Transaction, TxContents, TxKind};
        let mut dag = DagLedger::new();
        let g = dag.genesis().tx_id;
        for ts in 1..=3 {
            dag.insert(Transaction::seal(TxContents {
                kind: TxKind::MetadataUpdate,
                identity_id: "k".into(),
                sequence_digest: Digest::ZERO,
                proxy_locator: None,
                owner_id: None,
                prior: None,
                parents: [g, g],
                issuer: NodeId(0),
                timestamp: ts,
            }))
            .unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let [a, b] = select_tips(&dag, 0.5, &mut rng);
            assert_ne!(a, b);
            assert!(a >= 1 && b >= 1);
        }
    }
}
