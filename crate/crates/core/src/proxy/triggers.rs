use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub variable: String,
    pub threshold: f64,
    pub direction: Direction,
}

impl Trigger {
    fn beyond(&self, value: f64) -> bool {
        match self.direction {
            Direction::Rising => value > self.threshold,
            Direction::Falling => value < self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub trigger: Trigger,
    pub value: f64,
}

/// Edge-triggered threshold watchers over a state vector.
#[derive(Debug, Clone, Default)]
pub(crate) struct TriggerSet {
    entries: Vec<(Trigger, usize, bool)>,
}

impl TriggerSet {
    /// `index` is the state position watched; `initial` the current value.
    pub fn add(&mut self, trigger: Trigger, index: usize, initial: f64) {
        let beyond = trigger.beyond(initial);
        self.entries.push((trigger, index, beyond));
    }

    pub fn triggers(&self) -> impl Iterator<Item = &Trigger> {
        self.entries.iter().map(|(t, _, _)| t)
    }

    /// Reports triggers that crossed into their condition since the last
    /// call. A condition that persists is not reported again.
    pub fn evaluate(&mut self, values: &[f64]) -> Vec<Crossing> {
        let mut out = Vec::new();
        for (trigger, index, was_beyond) in &mut self.entries {
            let value = values[*index];
            let now = trigger.beyond(value);
            if now && !*was_beyond {
                out.push(Crossing {
                    trigger: trigger.clone(),
                    value,
                });
            }
            *was_beyond = now;
        }
        out
    }
}
