//! Twin Delayed DDPG.
//!
//! Critics regress to `y = r + gamma (1 - done) min(Q1', Q2')(s', a')` where
//! `a' = clip(actor'(s') + clip(noise, -c, c), -1, 1)`. The actor and all
//! targets are updated every `policy_delay` critic updates.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{CheckpointError, LearnError, Result};
use crate::net::{Activation, DenseNet};
use crate::replay::{Batch, ReplayBuffer};

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Config {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u32,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub exploration_noise_std: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
}

impl Td3Config {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            exploration_noise_std: 0.1,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            batch_size: 256,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(LearnError::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.tau) || self.policy_delay == 0 || self.batch_size == 0 {
            return Err(LearnError::Config("tau in [0,1], policy_delay and batch_size positive".into()));
        }
        if self.state_dim == 0 || self.action_dim == 0 || self.hidden.is_empty() {
            return Err(LearnError::Config("td3 dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub actor: DenseNet<f32>,
    pub actor_target: DenseNet<f32>,
    pub critic1: DenseNet<f32>,
    pub critic2: DenseNet<f32>,
    pub critic1_target: DenseNet<f32>,
    pub critic2_target: DenseNet<f32>,
    actor_opt: Adam<f32>,
    critic1_opt: Adam<f32>,
    critic2_opt: Adam<f32>,
    updates: u64,
}

/// Intermediate quantities of the critic regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBreakdown {
    pub target_actions: Vec<f32>,
    pub q1: Vec<f32>,
    pub q2: Vec<f32>,
    pub y: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Diagnostics {
    pub critic1_loss: f32,
    pub critic2_loss: f32,
    pub actor_loss: Option<f32>,
    pub targets: TargetBreakdown,
}

fn concat_rows(a: &[f32], a_dim: usize, b: &[f32], b_dim: usize) -> Vec<f32> {
    let rows = a.len() / a_dim;
    let mut out = Vec::with_capacity(rows * (a_dim + b_dim));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_dim..(r + 1) * a_dim]);
        out.extend_from_slice(&b[r * b_dim..(r + 1) * b_dim]);
    }
    out
}

impl Td3Agent {
    pub fn new(config: Td3Config, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut actor_sizes = vec![config.state_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(config.action_dim);
        let mut actor_acts = vec![Activation::Relu; config.hidden.len()];
        actor_acts.push(Activation::Tanh);
        let mut critic_sizes = vec![config.state_dim + config.action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let mut critic_acts = vec![Activation::Relu; config.hidden.len()];
        critic_acts.push(Activation::Linear);

        let actor = DenseNet::new(&actor_sizes, &actor_acts, rng)?;
        let critic1 = DenseNet::new(&critic_sizes, &critic_acts, rng)?;
        let critic2 = DenseNet::new(&critic_sizes, &critic_acts, rng)?;
        let actor_opt = Adam::new(AdamConfig { lr: config.actor_lr, ..Default::default() }, actor.params().len());
        let critic_cfg = AdamConfig { lr: config.critic_lr, ..Default::default() };
        Ok(Self {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            critic1_opt: Adam::new(critic_cfg, critic1.params().len()),
            critic2_opt: Adam::new(critic_cfg, critic2.params().len()),
            actor,
            critic1,
            critic2,
            actor_opt,
            config,
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Deterministic policy output in `[-1, 1]^action_dim`.
    pub fn act(&self, state: &[f32]) -> Result<Vec<f32>> {
        self.actor.forward(state, 1)
    }

    /// Policy output plus Gaussian exploration noise, clipped to `[-1, 1]`.
    pub fn act_explore(&self, state: &[f32], rng: &mut impl Rng) -> Result<Vec<f32>> {
        let mut a = self.act(state)?;
        if self.config.exploration_noise_std > 0.0 {
            let normal = Normal::new(0.0, self.config.exploration_noise_std).expect("positive std");
            for v in &mut a {
                *v = (*v + normal.sample(rng) as f32).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Draws the clipped target-policy smoothing noise for a batch.
    pub fn sample_target_noise(&self, batch: usize, rng: &mut impl Rng) -> Vec<f32> {
        let n = batch * self.config.action_dim;
        if self.config.target_noise_std <= 0.0 {
            return vec![0.0; n];
        }
        let normal = Normal::new(0.0, self.config.target_noise_std).expect("positive std");
        let c = self.config.target_noise_clip as f32;
        (0..n).map(|_| (normal.sample(rng) as f32).clamp(-c, c)).collect()
    }

    pub fn compute_targets(&self, batch: &Batch, noise: &[f32]) -> Result<TargetBreakdown> {
        let (s_dim, a_dim) = (self.config.state_dim, self.config.action_dim);
        let mut target_actions = self.actor_target.forward(&batch.next_states, batch.size)?;
        if noise.len() != target_actions.len() {
            return Err(LearnError::DimMismatch { context: "target noise", expected: target_actions.len(), got: noise.len() });
        }
        for (a, &n) in target_actions.iter_mut().zip(noise) {
            *a = (*a + n).clamp(-1.0, 1.0);
        }
        let input = concat_rows(&batch.next_states, s_dim, &target_actions, a_dim);
        let q1 = self.critic1_target.forward(&input, batch.size)?;
        let q2 = self.critic2_target.forward(&input, batch.size)?;
        let gamma = self.config.gamma as f32;
        let y = (0..batch.size)
            .map(|i| batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * q1[i].min(q2[i]))
            .collect();
        Ok(TargetBreakdown { target_actions, q1, q2, y })
    }

    pub fn update(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Result<Td3Diagnostics> {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        let noise = self.sample_target_noise(batch.size, rng);
        self.update_with_batch(&batch, &noise)
    }

    pub fn update_with_batch(&mut self, batch: &Batch, noise: &[f32]) -> Result<Td3Diagnostics> {
        let (s_dim, a_dim) = (self.config.state_dim, self.config.action_dim);
        let targets = self.compute_targets(batch, noise)?;
        let input = concat_rows(&batch.states, s_dim, &batch.actions, a_dim);
        let n = batch.size as f32;

        let critic_step = |critic: &mut DenseNet<f32>, opt: &mut Adam<f32>| -> Result<f32> {
            let cache = critic.forward_cached(&input, batch.size)?;
            let q = cache.output();
            let mut loss = 0.0f32;
            let grad: Vec<f32> = q
                .iter()
                .zip(&targets.y)
                .map(|(&qv, &y)| {
                    let d = qv - y;
                    loss += d * d;
                    2.0 * d / n
                })
                .collect();
            let g = critic.backward(&cache, &grad)?;
            opt.step(critic.params_mut(), &g.params)?;
            Ok(loss / n)
        };
        let critic1_loss = critic_step(&mut self.critic1, &mut self.critic1_opt)?;
        let critic2_loss = critic_step(&mut self.critic2, &mut self.critic2_opt)?;
        if !critic1_loss.is_finite() || !critic2_loss.is_finite() {
            return Err(LearnError::NonFinite("critic loss"));
        }
        self.updates += 1;

        let mut actor_loss = None;
        if self.updates % self.config.policy_delay as u64 == 0 {
            let a_cache = self.actor.forward_cached(&batch.states, batch.size)?;
            let c_in = concat_rows(&batch.states, s_dim, a_cache.output(), a_dim);
            let c_cache = self.critic1.forward_cached(&c_in, batch.size)?;
            let loss = -c_cache.output().iter().sum::<f32>() / n;
            let c_grads = self.critic1.backward(&c_cache, &vec![-1.0 / n; batch.size])?;
            let d_action: Vec<f32> = c_grads
                .input
                .chunks_exact(s_dim + a_dim)
                .flat_map(|row| row[s_dim..].iter().copied())
                .collect();
            let a_grads = self.actor.backward(&a_cache, &d_action)?;
            self.actor_opt.step(self.actor.params_mut(), &a_grads.params)?;
            actor_loss = Some(loss);

            let tau = self.config.tau as f32;
            self.actor_target.soft_update_from(&self.actor, tau);
            self.critic1_target.soft_update_from(&self.critic1, tau);
            self.critic2_target.soft_update_from(&self.critic2, tau);
        }
        Ok(Td3Diagnostics { critic1_loss, critic2_loss, actor_loss, targets })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "td3");
        ck.set_meta("state_dim", c.state_dim);
        ck.set_meta("action_dim", c.action_dim);
        ck.set_meta("hidden", c.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("x"));
        ck.set_meta("gamma", c.gamma);
        ck.set_meta("tau", c.tau);
        ck.set_meta("policy_delay", c.policy_delay);
        ck.set_meta("target_noise_std", c.target_noise_std);
        ck.set_meta("target_noise_clip", c.target_noise_clip);
        ck.set_meta("exploration_noise_std", c.exploration_noise_std);
        ck.set_meta("actor_lr", c.actor_lr);
        ck.set_meta("critic_lr", c.critic_lr);
        ck.set_meta("batch_size", c.batch_size);
        ck.set_meta("updates", self.updates);
        ck.set_meta("actor_adam_t", self.actor_opt.steps());
        ck.set_meta("critic1_adam_t", self.critic1_opt.steps());
        ck.set_meta("critic2_adam_t", self.critic2_opt.steps());
        ck.push_net("actor", &self.actor);
        ck.push_net("actor_target", &self.actor_target);
        ck.push_net("critic1", &self.critic1);
        ck.push_net("critic2", &self.critic2);
        ck.push_net("critic1_target", &self.critic1_target);
        ck.push_net("critic2_target", &self.critic2_target);
        for (name, opt) in [("actor", &self.actor_opt), ("critic1", &self.critic1_opt), ("critic2", &self.critic2_opt)] {
            ck.push_raw(&format!("{name}_adam_m"), opt.first_moment().to_vec());
            ck.push_raw(&format!("{name}_adam_v"), opt.second_moment().to_vec());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> std::result::Result<Self, CheckpointError> {
        if ck.require_meta("kind")? != "td3" {
            return Err(CheckpointError::Manifest("checkpoint is not a td3 agent".into()));
        }
        let hidden = ck
            .require_meta("hidden")?
            .split('x')
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| CheckpointError::Manifest("bad hidden sizes".into()))?;
        let config = Td3Config {
            state_dim: ck.parse_meta("state_dim")?,
            action_dim: ck.parse_meta("action_dim")?,
            hidden,
            gamma: ck.parse_meta("gamma")?,
            tau: ck.parse_meta("tau")?,
            policy_delay: ck.parse_meta("policy_delay")?,
            target_noise_std: ck.parse_meta("target_noise_std")?,
            target_noise_clip: ck.parse_meta("target_noise_clip")?,
            exploration_noise_std: ck.parse_meta("exploration_noise_std")?,
            actor_lr: ck.parse_meta("actor_lr")?,
            critic_lr: ck.parse_meta("critic_lr")?,
            batch_size: ck.parse_meta("batch_size")?,
        };
        let opt = |name: &str, lr: f64| -> std::result::Result<Adam<f32>, CheckpointError> {
            Adam::from_state(
                AdamConfig { lr, ..Default::default() },
                ck.raw(&format!("{name}_adam_m"))?.to_vec(),
                ck.raw(&format!("{name}_adam_v"))?.to_vec(),
                ck.parse_meta(&format!("{name}_adam_t"))?,
            )
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))
        };
        let agent = Self {
            actor: ck.net("actor")?,
            actor_target: ck.net("actor_target")?,
            critic1: ck.net("critic1")?,
            critic2: ck.net("critic2")?,
            critic1_target: ck.net("critic1_target")?,
            critic2_target: ck.net("critic2_target")?,
            actor_opt: opt("actor", config.actor_lr)?,
            critic1_opt: opt("critic1", config.critic_lr)?,
            critic2_opt: opt("critic2", config.critic_lr)?,
            updates: ck.parse_meta("updates")?,
            config,
        };
        if agent.actor.input_dim() != agent.config.state_dim || agent.actor.output_dim() != agent.config.action_dim {
            return Err(CheckpointError::Manifest("actor shape disagrees with config".into()));
        }
        Ok(agent)
    }
}
