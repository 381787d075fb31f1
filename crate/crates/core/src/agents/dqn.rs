//! Deep Q-network over the eight discrete set-point actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::replay::{ReplayBuffer, Transition};
use super::{argmax, normalize_observation, Controller, SkipReason, TrainOutcome};
use crate::config::KeyValues;
use crate::env::{Action, DiscreteAction, Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, GradRequest, Matrix, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnConfig {
    pub hidden_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub learning_start: usize,
    pub train_every: usize,
    pub target_update_every: usize,
    pub start_epsilon: f64,
    pub end_epsilon: f64,
    /// Fraction of the total step budget over which ε decays linearly.
    pub exploration_fraction: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_size: 128,
            lr: 2.5e-4,
            gamma: 0.99,
            buffer_size: 10_000,
            batch_size: 100,
            tau: 1.0,
            learning_start: 10_000,
            train_every: 10,
            target_update_every: 500,
            start_epsilon: 1.0,
            end_epsilon: 0.05,
            exploration_fraction: 0.5,
        }
    }
}

impl DqnConfig {
    pub const KEYS: [&'static str; 12] = [
        "hidden_size",
        "lr",
        "gamma",
        "buffer_size",
        "batch_size",
        "tau",
        "learning_start",
        "train_every",
        "target_update_every",
        "start_epsilon",
        "end_epsilon",
        "exploration_fraction",
    ];

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&Self::KEYS)?;
        let mut c = Self::default();
        kv.apply("hidden_size", &mut c.hidden_size)?;
        kv.apply("lr", &mut c.lr)?;
        kv.apply("gamma", &mut c.gamma)?;
        kv.apply("buffer_size", &mut c.buffer_size)?;
        kv.apply("batch_size", &mut c.batch_size)?;
        kv.apply("tau", &mut c.tau)?;
        kv.apply("learning_start", &mut c.learning_start)?;
        kv.apply("train_every", &mut c.train_every)?;
        kv.apply("target_update_every", &mut c.target_update_every)?;
        kv.apply("start_epsilon", &mut c.start_epsilon)?;
        kv.apply("end_epsilon", &mut c.end_epsilon)?;
        kv.apply("exploration_fraction", &mut c.exploration_fraction)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.batch_size == 0 || self.buffer_size < self.batch_size {
            return Err(Error::Config(
                "hidden_size and batch_size must be positive and buffer_size >= batch_size".into(),
            ));
        }
        if self.train_every == 0 || self.target_update_every == 0 {
            return Err(Error::Config("train_every and target_update_every must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("gamma and tau must lie in (0, 1]".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Linear schedule from `start` to `end` over `duration` steps, then flat.
pub fn linear_epsilon(start: f64, end: f64, duration: f64, step: usize) -> f64 {
    if duration <= 0.0 || step as f64 >= duration {
        return end;
    }
    let slope = (end - start) / duration;
    let v = start + slope * step as f64;
    if start >= end {
        v.max(end)
    } else {
        v.min(end)
    }
}

/// Minibatch with observations already normalized.
#[derive(Debug, Clone)]
pub struct DqnBatch {
    pub obs: Matrix,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
}

impl DqnBatch {
    pub fn from_transitions(items: &[&Transition<DiscreteAction>]) -> Self {
        let m = items.len();
        let mut obs = Matrix::zeros(m, OBS_DIM);
        let mut next_obs = Matrix::zeros(m, OBS_DIM);
        for (i, t) in items.iter().enumerate() {
            obs.row_mut(i).copy_from_slice(&normalize_observation(&t.obs));
            next_obs.row_mut(i).copy_from_slice(&normalize_observation(&t.next_obs));
        }
        Self {
            obs,
            actions: items.iter().map(|t| t.action.index()).collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_obs,
            dones: items.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `y_i = r_i + γ max_a' Q_target(s'_i, a')`, or `r_i` for terminal rows.
pub fn dqn_td_targets(target: &Mlp, batch: &DqnBatch, gamma: f64) -> Result<Vec<f64>> {
    let q_next = target.forward_batch(&batch.next_obs)?;
    Ok((0..batch.len())
        .map(|i| {
            if batch.dones[i] {
                batch.rewards[i]
            } else {
                let best = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                batch.rewards[i] + gamma * best
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    q: Mlp,
    target: Mlp,
    optimizer: Adam,
    buffer: ReplayBuffer<DiscreteAction>,
    rng: ChaCha8Rng,
    total_steps: usize,
    updates: u64,
}

impl DqnAgent {
    /// `total_steps` is the training budget the ε schedule is laid over.
    pub fn new(config: DqnConfig, total_steps: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let q = Mlp::init(
            &[OBS_DIM, h, h, DiscreteAction::COUNT],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        Self::from_network(config, q, total_steps, rng)
    }

    fn from_network(config: DqnConfig, q: Mlp, total_steps: usize, rng: ChaCha8Rng) -> Result<Self> {
        if q.in_dim() != OBS_DIM || q.out_dim() != DiscreteAction::COUNT {
            return Err(Error::DimensionMismatch {
                expected: DiscreteAction::COUNT,
                found: q.out_dim(),
            });
        }
        Ok(Self {
            config,
            target: q.clone(),
            optimizer: Adam::for_mlp(&q, config.lr),
            q,
            buffer: ReplayBuffer::new(config.buffer_size),
            rng,
            total_steps,
            updates: 0,
        })
    }

    /// Wrap a trained network for greedy evaluation.
    pub fn with_network(config: DqnConfig, q: Mlp, seed: u64) -> Result<Self> {
        Self::from_network(config, q, 0, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn q_network(&self) -> &Mlp {
        &self.q
    }

    pub fn target_network(&self) -> &Mlp {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer<DiscreteAction> {
        &self.buffer
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self, global_step: usize) -> f64 {
        let c = &self.config;
        linear_epsilon(
            c.start_epsilon,
            c.end_epsilon,
            c.exploration_fraction * self.total_steps as f64,
            global_step,
        )
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.q.forward(&normalize_observation(&obs.to_array()))
    }

    pub fn greedy_action(&self, obs: &Observation) -> Result<DiscreteAction> {
        DiscreteAction::new(argmax(&self.q_values(obs)?))
    }

    /// Uniform before learning starts, ε-greedy afterwards.
    pub fn act(&mut self, obs: &Observation, global_step: usize) -> Result<DiscreteAction> {
        let explore = global_step < self.config.learning_start
            || self.rng.random::<f64>() < self.epsilon(global_step);
        if explore {
            DiscreteAction::new(self.rng.random_range(0..DiscreteAction::COUNT))
        } else {
            self.greedy_action(obs)
        }
    }

    pub fn observe(&mut self, transition: Transition<DiscreteAction>) {
        self.buffer.push(transition);
    }

    /// One Adam step on `(1/M) Σ (y_i − Q(s_i, a_i))²`. Returns the loss
    /// before the step.
    pub fn update_on_batch(&mut self, batch: &DqnBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let y = dqn_td_targets(&self.target, batch, self.config.gamma)?;
        let cache = self.q.forward_cached(&batch.obs)?;
        let q = cache.output();
        let m = batch.len() as f64;
        let mut upstream = Matrix::zeros(batch.len(), DiscreteAction::COUNT);
        let mut loss = 0.0;
        for i in 0..batch.len() {
            let a = batch.actions[i];
            let diff = q.get(i, a) - y[i];
            loss += diff * diff / m;
            upstream.set(i, a, 2.0 * diff / m);
        }
        let grads = self
            .q
            .backward(&cache, &upstream, GradRequest::PARAMS)?
            .params
            .expect("parameter gradients requested");
        self.optimizer.step_mlp(&mut self.q, &grads)?;
        self.updates += 1;
        Ok(loss)
    }

    pub fn update_target(&mut self) {
        if self.config.tau >= 1.0 {
            self.target.copy_from(&self.q);
        } else {
            self.target.soft_update_from(&self.q, self.config.tau);
        }
    }

    /// Per-environment-step training hook.
    pub fn train_step(&mut self, global_step: usize) -> Result<TrainOutcome<f64>> {
        let c = self.config;
        if global_step < c.learning_start {
            return Ok(TrainOutcome::Skipped(SkipReason::BeforeLearningStart));
        }
        let mut outcome = TrainOutcome::Skipped(SkipReason::OffSchedule);
        if global_step.is_multiple_of(c.train_every) {
            outcome = match self.buffer.sample(&mut self.rng, c.batch_size) {
                None => TrainOutcome::Skipped(SkipReason::BufferUnderfull),
                Some(items) => {
                    let batch = DqnBatch::from_transitions(&items);
                    TrainOutcome::Updated(self.update_on_batch(&batch)?)
                }
            };
        }
        if global_step.is_multiple_of(c.target_update_every) {
            self.update_target();
        }
        Ok(outcome)
    }
}

impl Controller for DqnAgent {
    fn act(&mut self, obs: &Observation) -> Result<Action> {
        self.greedy_action(obs).map(Action::Discrete)
    }

    fn name(&self) -> String {
        "dqn".into()
    }
}
