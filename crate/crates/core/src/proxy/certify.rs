use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::estimator::{predict_covariance, update_covariance};
use super::model::{symmetrize, QualityOfData, StateSpaceModel};
use super::ProxyError;

/// Relative convergence tolerance on the post-update covariance.
pub const CONVERGENCE_TOL: f64 = 1e-9;
/// Maximum number of sampling cycles before certification gives up.
pub const MAX_CYCLES: usize = 10_000;
/// Covariance magnitude treated as divergence.
const DIVERGENCE_BOUND: f64 = 1e12;
/// Longest sampling period the adapter will consider.
pub const MAX_PERIOD: u32 = 1024;

/// Sample the `active_channels` once every `period` ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    period: u32,
    active_channels: Vec<usize>,
}

impl SamplingPolicy {
    pub fn new(period: u32, mut active_channels: Vec<usize>) -> Result<Self, ProxyError> {
        active_channels.sort_unstable();
        active_channels.dedup();
        if period == 0 {
            return Err(ProxyError::InvalidPolicy("period must be at least 1".into()));
        }
        if active_channels.is_empty() {
            return Err(ProxyError::InvalidPolicy("at least one channel must stay active".into()));
        }
        Ok(SamplingPolicy {
            period,
            active_channels,
        })
    }

    pub fn full_rate(n_channels: usize) -> Self {
        SamplingPolicy {
            period: 1,
            active_channels: (0..n_channels).collect(),
        }
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn active_channels(&self) -> &[usize] {
        &self.active_channels
    }

    /// Channel samples per tick.
    pub fn cost(&self) -> f64 {
        self.active_channels.len() as f64 / self.period as f64
    }

    /// Exact comparison of [`cost`](Self::cost) by cross-multiplication.
    pub fn cmp_cost(&self, other: &SamplingPolicy) -> Ordering {
        let lhs = self.active_channels.len() as u64 * other.period as u64;
        let rhs = other.active_channels.len() as u64 * self.period as u64;
        lhs.cmp(&rhs)
    }

    pub fn is_due(&self, tick: u64) -> bool {
        tick.is_multiple_of(self.period as u64)
    }

    pub fn check_against(&self, model: &StateSpaceModel) -> Result<(), ProxyError> {
        if let Some(&c) = self.active_channels.iter().find(|&&c| c >= model.n_channels()) {
            return Err(ProxyError::InvalidPolicy(format!(
                "channel {c} does not exist (model has {})",
                model.n_channels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rejection {
    /// Steady-state stddev of `variable` exceeds its bound.
    Violated { variable: String, stddev: f64, bound: f64 },
    /// The error covariance grows without bound or never settles.
    Diverged { cycles: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certification {
    Certified { steady_stddevs: Vec<f64> },
    Rejected(Rejection),
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certification::Certified { .. })
    }
}

/// Worst-phase steady-state standard deviations under periodic sampling.
///
/// Each cycle predicts `period` times and then updates on the active
/// channels. Once the post-update covariance settles, the reported stddev
/// of each state is its maximum over the ticks of one cycle: the post-update
/// value plus the `period - 1` predictions that follow it.
pub fn steady_state_stddevs(model: &StateSpaceModel, policy: &SamplingPolicy) -> Result<Vec<f64>, Rejection> {
    let (c, r) = model.restrict(policy.active_channels());
    let n = model.n_states();
    // `period` predictions folded into one step: P <- A^k P A^k' + Q_k
    let mut a_k = DMatrix::<f64>::identity(n, n);
    let mut q_k = DMatrix::<f64>::zeros(n, n);
    for _ in 0..policy.period() {
        a_k = &model.a * a_k;
        q_k = predict_covariance(model, &q_k);
    }
    let a_k_t = a_k.transpose();
    let mut post = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut cycles = 0;
    while cycles < MAX_CYCLES {
        cycles += 1;
        let mut prior = &a_k * &post * &a_k_t + &q_k;
        symmetrize(&mut prior);
        let Some((_, next)) = update_covariance(&prior, &c, &r) else {
            return Err(Rejection::Diverged {
                cycles,
                reason: "singular innovation covariance".into(),
            });
        };
        let scale = next.amax();
        if !scale.is_finite() || scale > DIVERGENCE_BOUND {
            return Err(Rejection::Diverged {
                cycles,
                reason: "error covariance grows without bound".into(),
            });
        }
        let delta = (&next - &post).amax();
        post = next;
        if delta <= CONVERGENCE_TOL * scale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Rejection::Diverged {
            cycles,
            reason: format!("no steady state within {MAX_CYCLES} cycles"),
        });
    }
    let mut worst: Vec<f64> = post.diagonal().iter().copied().collect();
    let mut p = post;
    for _ in 1..policy.period() {
        p = predict_covariance(model, &p);
        for (w, v) in worst.iter_mut().zip(p.diagonal().iter()) {
            *w = w.max(*v);
        }
    }
    Ok(worst.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

pub fn certify_policy(
    model: &StateSpaceModel,
    policy: &SamplingPolicy,
    qod: &QualityOfData,
) -> Result<Certification, ProxyError> {
    policy.check_against(model)?;
    qod.check_against(model)?;
    let stddevs = match steady_state_stddevs(model, policy) {
        Ok(s) => s,
        Err(r) => return Ok(Certification::Rejected(r)),
    };
    for (i, (s, b)) in stddevs.iter().zip(&qod.max_stddev).enumerate() {
        if s > b {
            return Ok(Certification::Rejected(Rejection::Violated {
                variable: model.states[i].name.clone(),
                stddev: *s,
                bound: *b,
            }));
        }
    }
    Ok(Certification::Certified { steady_stddevs: stddevs })
}

/// Greedy search for the cheapest certified policy.
///
/// Starting from `policy`, doubles the period while the result stays
/// certified, then tries dropping each active channel in channel order,
/// repeating both passes until neither changes anything. An uncertified
/// input is returned unchanged.
pub fn adapt_policy(model: &StateSpaceModel, policy: &SamplingPolicy, qod: &QualityOfData) -> SamplingPolicy {
    let ok = |p: &SamplingPolicy| matches!(certify_policy(model, p, qod), Ok(Certification::Certified { .. }));
    if !ok(policy) {
        return policy.clone();
    }
    let mut current = policy.clone();
    loop {
        let mut changed = false;
        while current.period * 2 <= MAX_PERIOD {
            let candidate = SamplingPolicy {
                period: current.period * 2,
                active_channels: current.active_channels.clone(),
            };
            if !ok(&candidate) {
                break;
            }
            current = candidate;
            changed = true;
        }
        let channels = current.active_channels.clone();
        for ch in channels {
            if current.active_channels.len() == 1 {
                break;
            }
            let remaining: Vec<usize> = current.active_channels.iter().copied().filter(|&c| c != ch).collect();
            let candidate = SamplingPolicy {
                period: current.period,
                active_channels: remaining,
            };
            if ok(&candidate) {
                current = candidate;
                changed = true;
            }
        }
        if !changed {
            return current;
        }
    }
}
