//! Tabular Q-learning, DQN and SAC agents plus the pieces they share.

pub mod dqn;
pub mod qlearning;
pub mod replay;
pub mod sac;

use crate::bem::HvacSetpoints;
use crate::env::{Action, Observation, OBS_DIM};
use crate::error::Result;

pub use dqn::{DqnAgent, DqnConfig};
pub use qlearning::{encode_state, epsilon_exponential, QLearningAgent, QLearningConfig, QTable};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{GaussianPolicy, SacAgent, SacConfig};

/// Fixed affine map applied to raw observations before they reach a network:
/// temperatures and set points are centred on room temperature in 10 K
/// units, ventilation on the middle of its range.
pub const OBS_CENTER: [f64; OBS_DIM] = [303.15, 288.15, 0.4, 293.15, 293.15];
pub const OBS_SCALE: [f64; OBS_DIM] = [10.0, 10.0, 0.1, 10.0, 10.0];

pub fn normalize_observation(obs: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
    let mut out = [0.0; OBS_DIM];
    for i in 0..OBS_DIM {
        out[i] = (obs[i] - OBS_CENTER[i]) / OBS_SCALE[i];
    }
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Why a training call did not touch any parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    BeforeLearningStart,
    OffSchedule,
    BufferUnderfull,
}

/// Result of a per-step training hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome<T> {
    Skipped(SkipReason),
    Updated(T),
}

impl<T> TrainOutcome<T> {
    pub fn is_update(&self) -> bool {
        matches!(self, TrainOutcome::Updated(_))
    }
}

/// Anything that can drive the environment during evaluation.
pub trait Controller {
    fn act(&mut self, obs: &Observation) -> Result<Action>;

    /// Short description for logs and reports.
    fn name(&self) -> String;
}

/// Constant set points, e.g. a city's default HVAC configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedController {
    pub setpoints: HvacSetpoints,
    pub label: &'static str,
}

impl FixedController {
    pub fn new(setpoints: HvacSetpoints, label: &'static str) -> Self {
        Self { setpoints, label }
    }
}

impl Controller for FixedController {
    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(Action::Setpoints(self.setpoints))
    }

    fn name(&self) -> String {
        self.label.to_string()
    }
}
