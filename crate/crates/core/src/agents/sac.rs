//! Soft actor-critic with twin critics, a tanh-squashed Gaussian policy and
//! automatic entropy tuning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::replay::{ReplayBuffer, Transition};
use super::{normalize_observation, Controller, SkipReason, TrainOutcome};
use crate::config::KeyValues;
use crate::env::{Action, ContinuousAction, Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, ForwardCache, GradRequest, Matrix, Mlp};

pub const ACTION_DIM: usize = 3;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// Added inside the log of the tanh Jacobian to keep it finite at the bounds.
const JACOBIAN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacConfig {
    pub hidden_size: usize,
    pub q_lr: f64,
    pub policy_lr: f64,
    pub gamma: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub learning_start: usize,
    pub tau: f64,
    pub policy_update_every: usize,
    pub target_update_every: usize,
    pub alpha_init: f64,
    pub autotune: bool,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            q_lr: 1e-3,
            policy_lr: 3e-4,
            gamma: 0.99,
            buffer_size: 1_000_000,
            batch_size: 256,
            learning_start: 5_000,
            tau: 0.005,
            policy_update_every: 2,
            target_update_every: 1,
            alpha_init: 0.2,
            autotune: true,
            log_std_min: -5.0,
            log_std_max: 2.0,
        }
    }
}

impl SacConfig {
    pub const KEYS: [&'static str; 14] = [
        "hidden_size",
        "q_lr",
        "policy_lr",
        "gamma",
        "buffer_size",
        "batch_size",
        "learning_start",
        "tau",
        "policy_update_every",
        "target_update_every",
        "alpha_init",
        "autotune",
        "log_std_min",
        "log_std_max",
    ];

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&Self::KEYS)?;
        let mut c = Self::default();
        kv.apply("hidden_size", &mut c.hidden_size)?;
        kv.apply("q_lr", &mut c.q_lr)?;
        kv.apply("policy_lr", &mut c.policy_lr)?;
        kv.apply("gamma", &mut c.gamma)?;
        kv.apply("buffer_size", &mut c.buffer_size)?;
        kv.apply("batch_size", &mut c.batch_size)?;
        kv.apply("learning_start", &mut c.learning_start)?;
        kv.apply("tau", &mut c.tau)?;
        kv.apply("policy_update_every", &mut c.policy_update_every)?;
        kv.apply("target_update_every", &mut c.target_update_every)?;
        kv.apply("alpha_init", &mut c.alpha_init)?;
        kv.apply("autotune", &mut c.autotune)?;
        kv.apply("log_std_min", &mut c.log_std_min)?;
        kv.apply("log_std_max", &mut c.log_std_max)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.batch_size == 0 || self.buffer_size < self.batch_size {
            return Err(Error::Config(
                "hidden_size and batch_size must be positive and buffer_size >= batch_size".into(),
            ));
        }
        if self.policy_update_every == 0 || self.target_update_every == 0 {
            return Err(Error::Config("update intervals must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("gamma and tau must lie in (0, 1]".into()));
        }
        if !(self.q_lr > 0.0 && self.policy_lr > 0.0 && self.alpha_init > 0.0) {
            return Err(Error::Config("learning rates and alpha_init must be positive".into()));
        }
        if !(self.log_std_min < self.log_std_max) {
            return Err(Error::Config("log_std_min must be below log_std_max".into()));
        }
        Ok(())
    }

    /// `−dim(A)`
    pub fn target_entropy(&self) -> f64 {
        -(ACTION_DIM as f64)
    }
}

/// Half-width of each action interval.
pub fn action_scale() -> [f64; ACTION_DIM] {
    ContinuousAction::BOUNDS.map(|(lo, hi)| 0.5 * (hi - lo))
}

/// Midpoint of each action interval.
pub fn action_bias() -> [f64; ACTION_DIM] {
    ContinuousAction::BOUNDS.map(|(lo, hi)| 0.5 * (hi + lo))
}

/// Map a squashed value in `[-1, 1]` onto the action intervals.
pub fn rescale_action(y: &[f64; ACTION_DIM]) -> ContinuousAction {
    let (s, b) = (action_scale(), action_bias());
    ContinuousAction::from_array([0, 1, 2].map(|i| y[i] * s[i] + b[i]))
}

/// Inverse of [`rescale_action`]; this is what the critics see.
pub fn unscale_action(a: &ContinuousAction) -> [f64; ACTION_DIM] {
    let (s, b) = (action_scale(), action_bias());
    let v = a.to_array();
    [0, 1, 2].map(|i| (v[i] - b[i]) / s[i])
}

/// Squash an unbounded head output into `[min, max]`.
pub fn squash_log_std(raw: f64, min: f64, max: f64) -> f64 {
    min + 0.5 * (max - min) * (raw.tanh() + 1.0)
}

/// Log density contribution of one action dimension, given the standard
/// normal draw `eps`, the log standard deviation and the squashed value `y`.
pub fn squashed_log_prob_1d(eps: f64, log_std: f64, y: f64, scale: f64) -> f64 {
    -0.5 * eps * eps - log_std - HALF_LN_2PI - (scale * (1.0 - y * y) + JACOBIAN_EPS).ln()
}

/// Actions, log densities and everything backward needs for a batch of
/// policy samples.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub cache: ForwardCache,
    /// Standard normal draws; all zero for deterministic samples.
    pub eps: Matrix,
    pub log_std: Matrix,
    /// `tanh(u)`, the critic-facing action in `[-1, 1]`.
    pub y: Matrix,
    pub log_prob: Vec<f64>,
}

/// Policy network `5 → h → h → 6`: the first three outputs are the Gaussian
/// mean, the last three the unsquashed log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    net: Mlp,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl GaussianPolicy {
    pub fn new(net: Mlp, log_std_min: f64, log_std_max: f64) -> Result<Self> {
        if net.in_dim() != OBS_DIM {
            return Err(Error::DimensionMismatch {
                expected: OBS_DIM,
                found: net.in_dim(),
            });
        }
        if net.out_dim() != 2 * ACTION_DIM {
            return Err(Error::DimensionMismatch {
                expected: 2 * ACTION_DIM,
                found: net.out_dim(),
            });
        }
        Ok(Self {
            net,
            log_std_min,
            log_std_max,
        })
    }

    pub fn init<R: Rng + ?Sized>(hidden: usize, log_std_min: f64, log_std_max: f64, rng: &mut R) -> Self {
        let net = Mlp::init(
            &[OBS_DIM, hidden, hidden, 2 * ACTION_DIM],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        Self {
            net,
            log_std_min,
            log_std_max,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// Mean and log standard deviation for one raw observation.
    pub fn distribution(&self, obs: &Observation) -> Result<([f64; ACTION_DIM], [f64; ACTION_DIM])> {
        let out = self.net.forward(&normalize_observation(&obs.to_array()))?;
        let mut mean = [0.0; ACTION_DIM];
        let mut log_std = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            mean[d] = out[d];
            log_std[d] = squash_log_std(out[ACTION_DIM + d], self.log_std_min, self.log_std_max);
        }
        Ok((mean, log_std))
    }

    /// `rescale(tanh(mean))`
    pub fn deterministic_action(&self, obs: &Observation) -> Result<ContinuousAction> {
        let (mean, _) = self.distribution(obs)?;
        Ok(rescale_action(&mean.map(f64::tanh)))
    }

    /// Draw an action and its log density. With `deterministic` the mean is
    /// used and the log density is evaluated at it.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        obs: &Observation,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(ContinuousAction, f64)> {
        let (mean, log_std) = self.distribution(obs)?;
        let scale = action_scale();
        let mut y = [0.0; ACTION_DIM];
        let mut log_prob = 0.0;
        for d in 0..ACTION_DIM {
            let eps: f64 = if deterministic { 0.0 } else { rng.sample(StandardNormal) };
            y[d] = (mean[d] + log_std[d].exp() * eps).tanh();
            log_prob += squashed_log_prob_1d(eps, log_std[d], y[d], scale[d]);
        }
        Ok((rescale_action(&y), log_prob))
    }

    /// Reparameterized samples for a batch of normalized observations.
    pub fn sample_batch<R: Rng + ?Sized>(&self, obs: &Matrix, rng: &mut R) -> Result<PolicySample> {
        let cache = self.net.forward_cached(obs)?;
        let out = cache.output();
        let m = obs.rows();
        let scale = action_scale();
        let mut eps = Matrix::zeros(m, ACTION_DIM);
        let mut log_std = Matrix::zeros(m, ACTION_DIM);
        let mut y = Matrix::zeros(m, ACTION_DIM);
        let mut log_prob = vec![0.0; m];
        for i in 0..m {
            for d in 0..ACTION_DIM {
                let e: f64 = rng.sample(StandardNormal);
                let ls = squash_log_std(out.get(i, ACTION_DIM + d), self.log_std_min, self.log_std_max);
                let yv = (out.get(i, d) + ls.exp() * e).tanh();
                eps.set(i, d, e);
                log_std.set(i, d, ls);
                y.set(i, d, yv);
                log_prob[i] += squashed_log_prob_1d(e, ls, yv, scale[d]);
            }
        }
        Ok(PolicySample {
            cache,
            eps,
            log_std,
            y,
            log_prob,
        })
    }
}

/// Minibatch with normalized observations and critic-facing actions.
#[derive(Debug, Clone)]
pub struct SacBatch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
}

impl SacBatch {
    pub fn from_transitions(items: &[&Transition<ContinuousAction>]) -> Self {
        let m = items.len();
        let mut obs = Matrix::zeros(m, OBS_DIM);
        let mut next_obs = Matrix::zeros(m, OBS_DIM);
        let mut actions = Matrix::zeros(m, ACTION_DIM);
        for (i, t) in items.iter().enumerate() {
            obs.row_mut(i).copy_from_slice(&normalize_observation(&t.obs));
            next_obs.row_mut(i).copy_from_slice(&normalize_observation(&t.next_obs));
            actions.row_mut(i).copy_from_slice(&unscale_action(&t.action));
        }
        Self {
            obs,
            actions,
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

/// `y = r + γ (1 − d) (min(Q1', Q2') − α log π(a'|s'))`
pub fn soft_td_target(reward: f64, done: bool, gamma: f64, q1: f64, q2: f64, alpha: f64, log_prob: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (q1.min(q2) - alpha * log_prob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacLosses {
    pub q_loss: f64,
    pub policy_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    policy: GaussianPolicy,
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    q1_opt: Adam,
    q2_opt: Adam,
    policy_opt: Adam,
    log_alpha: f64,
    alpha_opt: Adam,
    buffer: ReplayBuffer<ContinuousAction>,
    rng: ChaCha8Rng,
    /// Evaluation through [`Controller`] uses the mean action when set.
    pub deterministic_eval: bool,
}

impl SacAgent {
    pub fn new(config: SacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let policy = GaussianPolicy::init(h, config.log_std_min, config.log_std_max, &mut rng);
        let critic_sizes = [OBS_DIM + ACTION_DIM, h, h, 1];
        let q1 = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, &mut rng);
        let q2 = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, &mut rng);
        Ok(Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1_opt: Adam::for_mlp(&q1, config.q_lr),
            q2_opt: Adam::for_mlp(&q2, config.q_lr),
            policy_opt: Adam::for_mlp(policy.net(), config.policy_lr),
            log_alpha: config.alpha_init.ln(),
            alpha_opt: Adam::new(&[1], config.q_lr),
            buffer: ReplayBuffer::new(config.buffer_size),
            q1,
            q2,
            policy,
            config,
            rng,
            deterministic_eval: true,
        })
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut GaussianPolicy {
        &mut self.policy
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.q1, &self.q2)
    }

    pub fn target_critics(&self) -> (&Mlp, &Mlp) {
        (&self.q1_target, &self.q2_target)
    }

    /// Replace the critics (and their targets) with the given networks.
    pub fn set_critics(&mut self, q1: Mlp, q2: Mlp) -> Result<()> {
        for q in [&q1, &q2] {
            if q.in_dim() != OBS_DIM + ACTION_DIM || q.out_dim() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: OBS_DIM + ACTION_DIM,
                    found: q.in_dim(),
                });
            }
        }
        self.q1_target = q1.clone();
        self.q2_target = q2.clone();
        self.q1_opt = Adam::for_mlp(&q1, self.config.q_lr);
        self.q2_opt = Adam::for_mlp(&q2, self.config.q_lr);
        self.q1 = q1;
        self.q2 = q2;
        Ok(())
    }

    /// Swap the roles of the two critics and of the two targets.
    pub fn swap_critics(&mut self) {
        std::mem::swap(&mut self.q1, &mut self.q2);
        std::mem::swap(&mut self.q1_target, &mut self.q2_target);
        std::mem::swap(&mut self.q1_opt, &mut self.q2_opt);
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn buffer(&self) -> &ReplayBuffer<ContinuousAction> {
        &self.buffer
    }

    /// Reseed the sampling stream, e.g. before a reproducible computation.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Stochastic action for training, or the mean when `deterministic`.
    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<ContinuousAction> {
        if deterministic {
            self.policy.deterministic_action(obs)
        } else {
            Ok(self.policy.sample_action(obs, &mut self.rng, false)?.0)
        }
    }

    pub fn observe(&mut self, transition: Transition<ContinuousAction>) {
        self.buffer.push(transition);
    }

    fn critic_input(obs: &Matrix, actions: &Matrix) -> Result<Matrix> {
        obs.hstack(actions)
    }

    /// Soft TD targets with fresh next-state actions from the current policy.
    pub fn compute_targets(&mut self, batch: &SacBatch) -> Result<Vec<f64>> {
        let next = self.policy.sample_batch(&batch.next_obs, &mut self.rng)?;
        let input = Self::critic_input(&batch.next_obs, &next.y)?;
        let q1 = self.q1_target.forward_batch(&input)?;
        let q2 = self.q2_target.forward_batch(&input)?;
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|i| {
                soft_td_target(
                    batch.rewards[i],
                    batch.dones[i],
                    self.config.gamma,
                    q1.get(i, 0),
                    q2.get(i, 0),
                    alpha,
                    next.log_prob[i],
                )
            })
            .collect())
    }

    /// One Adam step per critic on its mean-squared error to `targets`.
    /// Returns the summed loss before the step.
    pub fn update_critics(&mut self, batch: &SacBatch, targets: &[f64]) -> Result<f64> {
        let input = Self::critic_input(&batch.obs, &batch.actions)?;
        let m = batch.len() as f64;
        let mut total = 0.0;
        for (net, opt) in [(&mut self.q1, &mut self.q1_opt), (&mut self.q2, &mut self.q2_opt)] {
            let cache = net.forward_cached(&input)?;
            let q = cache.output();
            let mut upstream = Matrix::zeros(batch.len(), 1);
            for i in 0..batch.len() {
                let diff = q.get(i, 0) - targets[i];
                total += diff * diff / m;
                upstream.set(i, 0, 2.0 * diff / m);
            }
            let grads = net
                .backward(&cache, &upstream, GradRequest::PARAMS)?
                .params
                .expect("parameter gradients requested");
            opt.step_mlp(net, &grads)?;
        }
        Ok(total)
    }

    /// Loss `(1/M) Σ (α log π(ã|s) − min_j Q_j(s, ã))` and its gradient with
    /// respect to the policy parameters, for a given set of noise draws.
    pub fn policy_loss_and_grad(&self, obs: &Matrix, eps: &Matrix) -> Result<(f64, crate::nn::Gradients, Vec<f64>)> {
        let m = obs.rows();
        let mf = m as f64;
        let cache = self.policy.net.forward_cached(obs)?;
        let out = cache.output();
        let scale = action_scale();
        let (lmin, lmax) = (self.policy.log_std_min, self.policy.log_std_max);
        let alpha = self.alpha();

        let mut y = Matrix::zeros(m, ACTION_DIM);
        let mut sigma = Matrix::zeros(m, ACTION_DIM);
        let mut log_prob = vec![0.0; m];
        for i in 0..m {
            for d in 0..ACTION_DIM {
                let ls = squash_log_std(out.get(i, ACTION_DIM + d), lmin, lmax);
                let e = eps.get(i, d);
                let yv = (out.get(i, d) + ls.exp() * e).tanh();
                y.set(i, d, yv);
                sigma.set(i, d, ls.exp());
                log_prob[i] += squashed_log_prob_1d(e, ls, yv, scale[d]);
            }
        }

        // Gradient of −min(Q1, Q2)/M with respect to the critic-facing action.
        let input = Self::critic_input(obs, &y)?;
        let c1 = self.q1.forward_cached(&input)?;
        let c2 = self.q2.forward_cached(&input)?;
        let mut up1 = Matrix::zeros(m, 1);
        let mut up2 = Matrix::zeros(m, 1);
        let mut loss = 0.0;
        for i in 0..m {
            let (a, b) = (c1.output().get(i, 0), c2.output().get(i, 0));
            if a <= b {
                up1.set(i, 0, -1.0 / mf);
            } else {
                up2.set(i, 0, -1.0 / mf);
            }
            loss += (alpha * log_prob[i] - a.min(b)) / mf;
        }
        let g1 = self.q1.backward(&c1, &up1, GradRequest::INPUT)?.input.expect("input gradient");
        let g2 = self.q2.backward(&c2, &up2, GradRequest::INPUT)?.input.expect("input gradient");

        let mut upstream = Matrix::zeros(m, 2 * ACTION_DIM);
        for i in 0..m {
            for d in 0..ACTION_DIM {
                let yv = y.get(i, d);
                let sj = scale[d] * (1.0 - yv * yv);
                let dlogp_du = 2.0 * yv * sj / (sj + JACOBIAN_EPS);
                let g_a = g1.get(i, OBS_DIM + d) + g2.get(i, OBS_DIM + d);
                let dj_du = alpha / mf * dlogp_du + g_a * (1.0 - yv * yv);
                let dj_dlogstd = -alpha / mf + dj_du * sigma.get(i, d) * eps.get(i, d);
                let t = out.get(i, ACTION_DIM + d).tanh();
                upstream.set(i, d, dj_du);
                upstream.set(i, ACTION_DIM + d, dj_dlogstd * 0.5 * (lmax - lmin) * (1.0 - t * t));
            }
        }
        let grads = self
            .policy
            .net
            .backward(&cache, &upstream, GradRequest::PARAMS)?
            .params
            .expect("parameter gradients requested");
        Ok((loss, grads, log_prob))
    }

    /// One Adam step on the policy objective. Returns the loss and the log
    /// densities of the actions it was evaluated at.
    pub fn update_policy(&mut self, batch: &SacBatch) -> Result<(f64, Vec<f64>)> {
        let m = batch.len();
        let mut eps = Matrix::zeros(m, ACTION_DIM);
        for v in eps.as_mut_slice() {
            *v = self.rng.sample(StandardNormal);
        }
        let (loss, grads, log_prob) = self.policy_loss_and_grad(&batch.obs, &eps)?;
        self.policy_opt.step_mlp(&mut self.policy.net, &grads)?;
        Ok((loss, log_prob))
    }

    /// Temperature step on `−α · mean(log π + H_target)` with respect to
    /// `log α`. Returns that loss.
    pub fn update_alpha(&mut self, log_probs: &[f64]) -> Result<f64> {
        if log_probs.is_empty() {
            return Err(Error::InvalidInput("no log densities".into()));
        }
        let mean = log_probs.iter().sum::<f64>() / log_probs.len() as f64 + self.config.target_entropy();
        let alpha = self.alpha();
        let grad = [-alpha * mean];
        let mut param = [self.log_alpha];
        self.alpha_opt.update(vec![&mut param[..]], vec![&grad[..]])?;
        self.log_alpha = param[0];
        Ok(-alpha * mean)
    }

    /// Polyak-average both targets towards their critics.
    pub fn update_targets(&mut self) {
        self.q1_target.soft_update_from(&self.q1, self.config.tau);
        self.q2_target.soft_update_from(&self.q2, self.config.tau);
    }

    /// All updates due on a batch at `global_step`.
    pub fn update_on_batch(&mut self, batch: &SacBatch, global_step: usize) -> Result<SacLosses> {
        let targets = self.compute_targets(batch)?;
        let q_loss = self.update_critics(batch, &targets)?;
        let mut losses = SacLosses {
            q_loss,
            policy_loss: None,
            alpha_loss: None,
        };
        if global_step.is_multiple_of(self.config.policy_update_every) {
            let (policy_loss, log_prob) = self.update_policy(batch)?;
            losses.policy_loss = Some(policy_loss);
            if self.config.autotune {
                losses.alpha_loss = Some(self.update_alpha(&log_prob)?);
            }
        }
        if global_step.is_multiple_of(self.config.target_update_every) {
            self.update_targets();
        }
        Ok(losses)
    }

    /// Per-environment-step training hook.
    pub fn train_step(&mut self, global_step: usize) -> Result<TrainOutcome<SacLosses>> {
        if global_step < self.config.learning_start {
            return Ok(TrainOutcome::Skipped(SkipReason::BeforeLearningStart));
        }
        let Some(items) = self.buffer.sample(&mut self.rng, self.config.batch_size) else {
            return Ok(TrainOutcome::Skipped(SkipReason::BufferUnderfull));
        };
        let batch = SacBatch::from_transitions(&items);
        self.update_on_batch(&batch, global_step).map(TrainOutcome::Updated)
    }
}

impl Controller for SacAgent {
    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let d = self.deterministic_eval;
        SacAgent::act(self, obs, d).map(Action::Continuous)
    }

    fn name(&self) -> String {
        "sac".into()
    }
}
