//! Tabular Q-learning over rounded observations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, Controller};
use crate::config::KeyValues;
use crate::env::{Action, DiscreteAction, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLearningConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub max_epsilon: f64,
    pub min_epsilon: f64,
    pub decay_rate: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            max_epsilon: 1.0,
            min_epsilon: 0.01,
            decay_rate: 0.01,
        }
    }
}

impl QLearningConfig {
    pub const KEYS: [&'static str; 5] = ["alpha", "gamma", "max_epsilon", "min_epsilon", "decay_rate"];

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&Self::KEYS)?;
        let mut c = Self::default();
        kv.apply("alpha", &mut c.alpha)?;
        kv.apply("gamma", &mut c.gamma)?;
        kv.apply("max_epsilon", &mut c.max_epsilon)?;
        kv.apply("min_epsilon", &mut c.min_epsilon)?;
        kv.apply("decay_rate", &mut c.decay_rate)?;
        if !(c.alpha > 0.0 && c.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", c.alpha)));
        }
        if !(c.min_epsilon >= 0.0 && c.min_epsilon <= c.max_epsilon && c.max_epsilon <= 1.0) {
            return Err(Error::Config("need 0 <= min_epsilon <= max_epsilon <= 1".into()));
        }
        Ok(c)
    }

    pub fn epsilon(&self, epoch: u32) -> f64 {
        epsilon_exponential(epoch, self.max_epsilon, self.min_epsilon, self.decay_rate)
    }
}

/// `min + (max − min)·exp(−decay·epoch)`
pub fn epsilon_exponential(epoch: u32, max_epsilon: f64, min_epsilon: f64, decay_rate: f64) -> f64 {
    min_epsilon + (max_epsilon - min_epsilon) * (-decay_rate * epoch as f64).exp()
}

/// Packs the rounded observation into one integer: set points and
/// temperatures in whole kelvin, ventilation in tenths, three decimal digits
/// per component with the AC set point least significant.
pub fn encode_state(obs: &Observation) -> Result<u64> {
    let parts = [
        obs.ac_setpoint_k,
        obs.heat_setpoint_k,
        obs.vent_ach * 10.0,
        obs.t_indoor_k,
        obs.t_canopy_k,
    ];
    let mut key = 0u64;
    let mut place = 1u64;
    for (i, v) in parts.iter().enumerate() {
        let r = v.round();
        if !(0.0..=999.0).contains(&r) {
            return Err(Error::Encoding(format!(
                "observation component {i} rounds to {r}, outside [0, 999]"
            )));
        }
        key += r as u64 * place;
        place *= 1000;
    }
    Ok(key)
}

/// Sparse action-value table; rows never written read as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    rows: HashMap<u64, Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_actions,
            rows: HashMap::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of states with a stored row.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self, state: u64) -> Vec<f64> {
        self.rows
            .get(&state)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    pub fn value(&self, state: u64, action: usize) -> f64 {
        self.rows.get(&state).map_or(0.0, |r| r[action])
    }

    pub fn max_value(&self, state: u64) -> f64 {
        match self.rows.get(&state) {
            Some(r) => r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    }

    pub fn greedy(&self, state: u64) -> usize {
        match self.rows.get(&state) {
            Some(r) => argmax(r),
            None => 0,
        }
    }

    /// `Q(s,a) ← Q(s,a) + α [r + γ max_a' Q(s',a') − Q(s,a)]`; a terminal
    /// successor (`None`) contributes no bootstrap term. Returns the new value.
    pub fn update(
        &mut self,
        state: u64,
        action: usize,
        reward: f64,
        next: Option<u64>,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        assert!(action < self.n_actions, "action {action} out of range");
        let bootstrap = next.map_or(0.0, |s| self.max_value(s));
        let n = self.n_actions;
        let row = self.rows.entry(state).or_insert_with(|| vec![0.0; n]);
        row[action] += alpha * (reward + gamma * bootstrap - row[action]);
        row[action]
    }

    /// One line per stored state, `key a0 a1 ...`, ordered by key.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&u64> = self.rows.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let _ = write!(out, "{k}");
            for v in &self.rows[k] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, n_actions: usize, origin: &Path) -> Result<Self> {
        let mut table = Self::new(n_actions);
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let key: u64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(origin, idx + 1, "bad state key"))?;
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(origin, idx + 1, "bad action value"))?;
            if values.len() != n_actions {
                return Err(Error::parse(
                    origin,
                    idx + 1,
                    format!("expected {n_actions} action values, found {}", values.len()),
                ));
            }
            if table.rows.insert(key, values).is_some() {
                return Err(Error::parse(origin, idx + 1, format!("duplicate state {key}")));
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, n_actions: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, n_actions, path)
    }
}

#[derive(Debug, Clone)]
pub struct QLearningAgent {
    pub table: QTable,
    pub config: QLearningConfig,
    rng: ChaCha8Rng,
}

impl QLearningAgent {
    pub fn new(config: QLearningConfig, seed: u64) -> Self {
        Self {
            table: QTable::new(DiscreteAction::COUNT),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_table(table: QTable, config: QLearningConfig, seed: u64) -> Self {
        Self {
            table,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// ε-greedy choice for the given exploration rate.
    pub fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<DiscreteAction> {
        let key = encode_state(obs)?;
        let index = if self.rng.random::<f64>() < epsilon {
            self.rng.random_range(0..DiscreteAction::COUNT)
        } else {
            self.table.greedy(key)
        };
        DiscreteAction::new(index)
    }

    pub fn greedy_action(&self, obs: &Observation) -> Result<DiscreteAction> {
        DiscreteAction::new(self.table.greedy(encode_state(obs)?))
    }

    pub fn learn(
        &mut self,
        obs: &Observation,
        action: DiscreteAction,
        reward: f64,
        next_obs: &Observation,
        done: bool,
    ) -> Result<()> {
        let s = encode_state(obs)?;
        let next = if done { None } else { Some(encode_state(next_obs)?) };
        self.table
            .update(s, action.index(), reward, next, self.config.alpha, self.config.gamma);
        Ok(())
    }
}

impl Controller for QLearningAgent {
    fn act(&mut self, obs: &Observation) -> Result<Action> {
        self.greedy_action(obs).map(Action::Discrete)
    }

    fn name(&self) -> String {
        "qlearning".into()
    }
}
