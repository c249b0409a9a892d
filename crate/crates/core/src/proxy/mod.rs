//! Data proxies: sparse-sample state estimators that mirror an asset.
//!
//! A proxy starts from its class's generalized model at full sampling rate
//! and can be leaned down ([`DataProxy::adapt_model`]) to the cheapest
//! sampling policy whose steady-state error still meets the quality-of-data
//! bound.

mod certify;
mod estimator;
mod model;
mod triggers;

use nalgebra::DVector;

pub use certify::{
    adapt_policy, certify_policy, steady_state_stddevs, Certification, Rejection, SamplingPolicy, CONVERGENCE_TOL,
    MAX_CYCLES, MAX_PERIOD,
};
pub use estimator::{predict_covariance, update_covariance, ProxyState, ProxyStateRecord};
pub use model::{observability_rank, GeneralizedModel, ModelRegistry, QualityOfData, StateSpaceModel, StateVar};
pub use triggers::{Crossing, Direction, Trigger};

use crate::metadata::{EventDraft, EventKind, SnapshotSource, StateSnapshot, StateVariable};
use crate::Tick;
use triggers::TriggerSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProxyError {
    #[error("no generalized model registered for class `{0}`")]
    UnknownClass(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid sampling policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid quality-of-data bound: {0}")]
    InvalidQod(String),
    #[error("unknown state variable `{0}`")]
    UnknownVariable(String),
    #[error("measurement has {got} values but {expected} channels are active")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("measurement contains a non-finite value")]
    NonFinite,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct DataProxy {
    class_label: String,
    model: StateSpaceModel,
    state: ProxyState,
    policy: SamplingPolicy,
    qod: QualityOfData,
    triggers: TriggerSet,
}

/// Creates a proxy for `class_label` at full rate from its generalized model.
pub fn instantiate_proxy(registry: &ModelRegistry, class_label: &str) -> Result<DataProxy, ProxyError> {
    let g = registry
        .get(class_label)
        .ok_or_else(|| ProxyError::UnknownClass(class_label.to_string()))?;
    Ok(DataProxy {
        class_label: class_label.to_string(),
        model: g.model.clone(),
        state: ProxyState::new(g.prior_mean.clone(), g.prior_cov.clone()),
        policy: SamplingPolicy::full_rate(g.model.n_channels()),
        qod: g.default_qod.clone(),
        triggers: TriggerSet::default(),
    })
}

impl DataProxy {
    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }

    pub fn state(&self) -> &ProxyState {
        &self.state
    }

    pub fn policy(&self) -> &SamplingPolicy {
        &self.policy
    }

    pub fn qod(&self) -> &QualityOfData {
        &self.qod
    }

    pub fn triggers(&self) -> impl Iterator<Item = &Trigger> {
        self.triggers.triggers()
    }

    /// Replaces the data-quality target. The current policy must still be
    /// certified under it.
    pub fn set_qod(&mut self, qod: QualityOfData) -> Result<(), ProxyError> {
        qod.check_against(&self.model)?;
        match certify_policy(&self.model, &self.policy, &qod)? {
            Certification::Certified { .. } => {
                self.qod = qod;
                Ok(())
            }
            Certification::Rejected(r) => Err(ProxyError::InvalidQod(format!(
                "current policy does not meet the bound: {r:?}"
            ))),
        }
    }

    pub fn add_trigger(&mut self, trigger: Trigger) -> Result<(), ProxyError> {
        let index = self
            .model
            .state_index(&trigger.variable)
            .ok_or_else(|| ProxyError::UnknownVariable(trigger.variable.clone()))?;
        let initial = self.state.x_hat[index];
        self.triggers.add(trigger, index, initial);
        Ok(())
    }

    pub fn is_sample_due(&self, tick: Tick) -> bool {
        self.policy.is_due(tick)
    }

    /// Advances the estimate by one tick: predict, then update from
    /// `measurement` (one value per active channel) if given.
    pub fn step_estimate(&mut self, now: Tick, measurement: Option<&[f64]>) -> Result<(), ProxyError> {
        if let Some(y) = measurement {
            let expected = self.policy.active_channels().len();
            if y.len() != expected {
                return Err(ProxyError::DimensionMismatch { expected, got: y.len() });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(ProxyError::NonFinite);
            }
        }
        let mut next = self.state.clone();
        next.predict(&self.model);
        if let Some(y) = measurement {
            next.update(&self.model, self.policy.active_channels(), y)?;
        }
        next.last_update = now;
        self.state = next;
        Ok(())
    }

    pub fn certify(&self) -> Result<Certification, ProxyError> {
        certify_policy(&self.model, &self.policy, &self.qod)
    }

    /// Leans the sampling policy as far as the quality bound allows.
    pub fn adapt_model(&self) -> DataProxy {
        let mut out = self.clone();
        out.policy = adapt_policy(&self.model, &self.policy, &self.qod);
        out
    }

    /// Provenance events for triggers crossed since the last evaluation.
    pub fn evaluate_triggers(&mut self, actor_id: &str) -> Vec<EventDraft> {
        let values: Vec<f64> = self.state.x_hat.iter().copied().collect();
        self.triggers
            .evaluate(&values)
            .into_iter()
            .map(|c| {
                EventDraft::new(EventKind::ConditionTrigger, actor_id)
                    .with("variable", &c.trigger.variable)
                    .with("threshold", c.trigger.threshold)
                    .with(
                        "direction",
                        match c.trigger.direction {
                            Direction::Rising => "rising",
                            Direction::Falling => "falling",
                        },
                    )
                    .with("value", format!("{:.6}", c.value))
            })
            .collect()
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.model.state_index(name).map(|i| self.state.x_hat[i])
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            state: self
                .model
                .states
                .iter()
                .zip(self.state.x_hat.iter())
                .map(|(s, v)| StateVariable {
                    name: s.name.clone(),
                    value: *v,
                    unit: s.unit.clone(),
                })
                .collect(),
            as_of: self.state.last_update,
            source: SnapshotSource::ProxyEstimate,
        }
    }

    /// Overwrites the estimate, e.g. when re-seeding from a direct scan.
    pub fn reset_estimate(&mut self, x_hat: Vec<f64>) -> Result<(), ProxyError> {
        if x_hat.len() != self.model.n_states() {
            return Err(ProxyError::DimensionMismatch {
                expected: self.model.n_states(),
                got: x_hat.len(),
            });
        }
        self.state.x_hat = DVector::from_vec(x_hat);
        Ok(())
    }
}
