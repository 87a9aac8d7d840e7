//! TD3 training of either layer with the other frozen, the three-phase
//! alternating schedule, and VAE pretraining on random-walk scans.
//!
//! Every training episode draws its world, disturbance and learner noise from
//! an RNG seeded by `(seed, episode index)`, so a snapshot taken between
//! episodes (agent, optimizer moments, replay contents, counters) is enough
//! to resume bit-exactly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use learnkit::{Checkpoint, ReplayBuffer, Td3Agent, Td3Config, Td3Diagnostics, Transition, Vae, VaeConfig, VaeLoss, VaeTrainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{domain_disturbance, ControlMode, ControllerState, FeedbackPolicy};
use crate::error::{HarnessError, TunerError};
use crate::geometry::Pose2;
use crate::sim::collision::check_collision;
use crate::sim::dynamics::{step_dynamics, Limits, RobotState, VelocityCommand};
use crate::sim::grid::World;
use crate::sim::lidar::{raycast_scan, SensorConfig};
use crate::tuner::{action_to_params, NavSession, NavStatus, TuningRate};

use super::eval::EpisodeConfig;
use super::policy::{controller_checkpoint, tuner_checkpoint, ControllerPolicy, TunerPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Settings {
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
    pub replay_capacity: usize,
    /// Environment steps taken with uniform random actions before learning.
    pub warmup_steps: u64,
    /// Environment steps between update rounds.
    pub update_every: u64,
    /// Gradient updates per round.
    pub updates_per_round: u32,
    /// Factor on the freshly initialized actor's output layer.
    pub actor_out_scale: f64,
}

impl Td3Settings {
    pub fn tuner_default() -> Self {
        Self { replay_capacity: 100_000, ..Self::base() }
    }

    pub fn controller_default() -> Self {
        Self { replay_capacity: 500_000, warmup_steps: 0, ..Self::base() }
    }

    fn base() -> Self {
        Self {
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
            replay_capacity: 100_000,
            warmup_steps: 1000,
            update_every: 1,
            updates_per_round: 1,
            actor_out_scale: 1.0,
        }
    }

    pub fn config(&self, state_dim: usize, action_dim: usize) -> Td3Config {
        Td3Config {
            state_dim,
            action_dim,
            hidden: self.hidden.clone(),
            gamma: self.gamma,
            tau: self.tau,
            policy_delay: self.policy_delay,
            target_noise_std: self.target_noise_std,
            target_noise_clip: self.target_noise_clip,
            exploration_noise_std: self.exploration_noise_std,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseConfig {
    pub seed: u64,
    /// Planning ticks (0.1 s of simulated driving each) of experience.
    pub budget_ticks: u64,
    pub td3: Td3Settings,
    pub episode: EpisodeConfig,
    /// Write a snapshot every this many episodes (0 = never).
    pub snapshot_every: u64,
    /// Stop before this episode index, as if interrupted.
    pub stop_after_episodes: Option<u64>,
}

impl PhaseConfig {
    pub fn new(seed: u64, budget_ticks: u64, td3: Td3Settings) -> Self {
        Self { seed, budget_ticks, td3, episode: EpisodeConfig::default(), snapshot_every: 0, stop_after_episodes: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    /// Planning ticks consumed when the episode ended.
    pub step: u64,
    pub ret: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

pub fn write_curve_csv(rows: &[CurveRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "step,return,critic_loss,actor_loss")?;
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(out, "{},{},{},{}", r.step, r.ret, o(r.critic_loss), o(r.actor_loss))?;
    }
    Ok(())
}

/// Everything a training phase carries between episodes.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub agent: Td3Agent,
    pub buffer: ReplayBuffer,
    pub episodes: u64,
    pub ticks: u64,
    pub env_steps: u64,
    pub curve: Vec<CurveRow>,
}

fn encode_curve(rows: &[CurveRow]) -> String {
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    rows.iter().map(|r| format!("{}|{}|{}|{}", r.step, r.ret, o(r.critic_loss), o(r.actor_loss))).collect::<Vec<_>>().join(";")
}

fn decode_curve(s: &str) -> Option<Vec<CurveRow>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    let o = |x: &str| if x.is_empty() { Some(None) } else { x.parse().ok().map(Some) };
    s.split(';')
        .map(|row| {
            let f: Vec<&str> = row.split('|').collect();
            if f.len() != 4 {
                return None;
            }
            Some(CurveRow { step: f[0].parse().ok()?, ret: f[1].parse().ok()?, critic_loss: o(f[2])?, actor_loss: o(f[3])? })
        })
        .collect()
}

impl TrainState {
    fn fresh(cfg: &PhaseConfig, state_dim: usize, action_dim: usize, init: Option<&Td3Agent>) -> Result<Self, HarnessError> {
        let agent = match init {
            Some(a) => a.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a9e7);
                let mut a = Td3Agent::new(cfg.td3.config(state_dim, action_dim), &mut rng)?;
                if cfg.td3.actor_out_scale != 1.0 {
                    a.actor.scale_output_layer(cfg.td3.actor_out_scale as f32);
                    a.actor_target = a.actor.clone();
                }
                a
            }
        };
        Ok(Self {
            agent,
            buffer: ReplayBuffer::new(state_dim, action_dim, cfg.td3.replay_capacity),
            episodes: 0,
            ticks: 0,
            env_steps: 0,
            curve: Vec::new(),
        })
    }

    /// Agent checkpoint plus replay contents and counters.
    pub fn snapshot(&self, role: &str) -> Checkpoint {
        let mut ck = self.agent.to_checkpoint();
        ck.set_meta("snapshot_role", role);
        ck.set_meta("episodes", self.episodes);
        ck.set_meta("ticks", self.ticks);
        ck.set_meta("env_steps", self.env_steps);
        let (data, [len, head]) = self.buffer.to_blocks();
        ck.set_meta("replay_capacity", self.buffer.capacity());
        ck.set_meta("replay_len", len);
        ck.set_meta("replay_head", head);
        ck.set_meta("curve", encode_curve(&self.curve));
        ck.push_raw("replay", data);
        ck
    }

    pub fn from_snapshot(ck: &Checkpoint, role: &str) -> Result<Self, HarnessError> {
        let wrap = |source| HarnessError::Checkpoint { id: format!("{role} snapshot"), source };
        if ck.require_meta("snapshot_role").map_err(wrap)? != role {
            return Err(HarnessError::Variant(format!("snapshot is not for {role}")));
        }
        let agent = Td3Agent::from_checkpoint(ck).map_err(wrap)?;
        let (sd, ad) = (agent.config.state_dim, agent.config.action_dim);
        let buffer = ReplayBuffer::from_blocks(
            sd,
            ad,
            ck.parse_meta("replay_capacity").map_err(wrap)?,
            ck.raw("replay").map_err(wrap)?,
            [ck.parse_meta("replay_len").map_err(wrap)?, ck.parse_meta("replay_head").map_err(wrap)?],
        )?;
        let curve = decode_curve(ck.require_meta("curve").map_err(wrap)?)
            .ok_or_else(|| HarnessError::Format("snapshot curve is malformed".into()))?;
        Ok(Self {
            agent,
            buffer,
            episodes: ck.parse_meta("episodes").map_err(wrap)?,
            ticks: ck.parse_meta("ticks").map_err(wrap)?,
            env_steps: ck.parse_meta("env_steps").map_err(wrap)?,
            curve,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// False when stopped by `stop_after_episodes`.
    pub finished: bool,
}

impl TrainOutcome {
    pub fn agent(&self) -> &Td3Agent {
        &self.state.agent
    }
}

/// How a phase obtains its initial agent.
#[derive(Clone, Copy, Debug)]
pub enum Start<'a> {
    Fresh,
    /// Continue from trained weights with an empty replay buffer.
    WarmStart(&'a Td3Agent),
    Resume(&'a Checkpoint),
}

#[derive(Default)]
struct LossAcc {
    critic: f64,
    actor: f64,
    n_critic: usize,
    n_actor: usize,
}

impl LossAcc {
    fn add(&mut self, d: &Td3Diagnostics) {
        self.critic += 0.5 * (d.critic1_loss as f64 + d.critic2_loss as f64);
        self.n_critic += 1;
        if let Some(a) = d.actor_loss {
            self.actor += a as f64;
            self.n_actor += 1;
        }
    }

    fn means(&self) -> (Option<f64>, Option<f64>) {
        let m = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        (m(self.critic, self.n_critic), m(self.actor, self.n_actor))
    }
}

/// Stores one transition and runs an update when due.
fn push_and_learn(
    state: &mut TrainState,
    td3: &Td3Settings,
    t: &Transition,
    rng: &mut ChaCha8Rng,
    acc: &mut LossAcc,
) -> Result<(), HarnessError> {
    state.buffer.push(t)?;
    state.env_steps += 1;
    let due = state.env_steps > td3.warmup_steps && state.env_steps % td3.update_every.max(1) == 0;
    if !due || state.buffer.len() < td3.batch_size {
        return Ok(());
    }
    for _ in 0..td3.updates_per_round {
        let d = state.agent.update(&state.buffer, rng)?;
        if !(d.critic1_loss.is_finite() && d.critic2_loss.is_finite() && d.actor_loss.is_none_or(f32::is_finite)) {
            return Err(HarnessError::Diverged(format!(
                "update {}: critic losses {} / {}, actor loss {:?}",
                state.agent.updates(),
                d.critic1_loss,
                d.critic2_loss,
                d.actor_loss
            )));
        }
        acc.add(&d);
    }
    Ok(())
}

fn episode_seed(seed: u64, episode: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ episode.wrapping_mul(0xd1b5_4a32_d192_ed03).rotate_left(17)
}

fn explore(agent: &Td3Agent, state: &[f32], warm: bool, rng: &mut ChaCha8Rng) -> Result<Vec<f32>, HarnessError> {
    if warm {
        Ok((0..agent.config.action_dim).map(|_| rng.random_range(-1.0f32..=1.0)).collect())
    } else {
        Ok(agent.act_explore(state, rng)?)
    }
}

/// Episode loop shared by both roles. `run` plays one episode and returns its
/// return, or `None` when the world has no global path.
fn drive(
    cfg: &PhaseConfig,
    worlds: &[World],
    mut state: TrainState,
    mut run: impl FnMut(&mut TrainState, &World, &mut ChaCha8Rng, &mut LossAcc) -> Result<Option<f64>, HarnessError>,
    mut on_snapshot: impl FnMut(&TrainState) -> Result<(), HarnessError>,
) -> Result<TrainOutcome, HarnessError> {
    if worlds.is_empty() && cfg.budget_ticks > 0 {
        return Err(HarnessError::Config("training needs at least one world".into()));
    }
    while state.ticks < cfg.budget_ticks {
        if cfg.stop_after_episodes == Some(state.episodes) {
            return Ok(TrainOutcome { state, finished: false });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(cfg.seed, state.episodes));
        let world = &worlds[rng.random_range(0..worlds.len())];
        let mut acc = LossAcc::default();
        let ret = run(&mut state, world, &mut rng, &mut acc)?;
        if let Some(ret) = ret {
            let (critic_loss, actor_loss) = acc.means();
            state.curve.push(CurveRow { step: state.ticks, ret, critic_loss, actor_loss });
        }
        state.episodes += 1;
        if cfg.snapshot_every > 0 && state.episodes % cfg.snapshot_every == 0 {
            on_snapshot(&state)?;
        }
    }
    Ok(TrainOutcome { state, finished: true })
}

fn new_session(world: &World, cfg: &PhaseConfig, rate: TuningRate, mode: ControlMode, rng: &mut ChaCha8Rng) -> Result<Option<NavSession>, HarnessError> {
    let actuator = domain_disturbance(&cfg.episode.disturbance, rng);
    let mut scfg = cfg.episode.session;
    scfg.rate = rate;
    scfg.controller.mode = mode;
    match NavSession::new(world, scfg, actuator) {
        Ok(s) => Ok(Some(s)),
        Err(TunerError::Plan(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn start_state(cfg: &PhaseConfig, start: Start, role: &str, sd: usize, ad: usize) -> Result<TrainState, HarnessError> {
    match start {
        Start::Fresh => TrainState::fresh(cfg, sd, ad, None),
        Start::WarmStart(a) => TrainState::fresh(cfg, sd, ad, Some(a)),
        Start::Resume(ck) => TrainState::from_snapshot(ck, role),
    }
}

/// TD3 on the tuning MDP with the controller frozen (`None` = feedforward).
pub fn train_tuner(
    cfg: &PhaseConfig,
    worlds: &[World],
    vae: &Vae,
    rate: TuningRate,
    controller: Option<&ControllerPolicy>,
    start: Start,
    on_snapshot: impl FnMut(&TrainState) -> Result<(), HarnessError>,
) -> Result<TrainOutcome, HarnessError> {
    let state = start_state(cfg, start, "tuner", vae.latent_dim() + 2, 4)?;
    let frozen = TunerPolicy { actor: state.agent.actor.clone(), vae: vae.clone(), rate, phase_seq: 0 };
    let mode = controller.map_or(ControlMode::Feedback, |c| c.mode);
    drive(
        cfg,
        worlds,
        state,
        |st, world, rng, acc| {
            let Some(mut session) = new_session(world, cfg, rate, mode, rng)? else { return Ok(None) };
            let mut ctrl = controller.map(|c| move |s: &[f32]| c.act(s));
            let mut s = frozen.state(&session)?.to_vector();
            let mut ret = 0.0;
            while session.status() == NavStatus::Running {
                let a = explore(&st.agent, &s, st.env_steps < cfg.td3.warmup_steps, rng)?;
                let action = [a[0] as f64, a[1] as f64, a[2] as f64, a[3] as f64];
                let policy = ctrl.as_mut().map(|f| f as &mut dyn FeedbackPolicy);
                let out = session.tuner_step(&action, policy, |_| {})?;
                let next = frozen.state(&session)?.to_vector();
                let done = matches!(out.status, NavStatus::Reached | NavStatus::Collided);
                let t = Transition { state: s, action: a, reward: out.reward as f32, next_state: next.clone(), done };
                push_and_learn(st, &cfg.td3, &t, rng, acc)?;
                ret += out.reward;
                s = next;
            }
            st.ticks += session.plans();
            Ok(Some(ret))
        },
        on_snapshot,
    )
}

/// Controller observation length for a sensor and controller config.
pub fn controller_state_dim(cfg: &EpisodeConfig) -> usize {
    let n = cfg.session.sensor.n_beams.div_ceil(cfg.session.controller.scan_downsample);
    ControllerState::vector_len(n)
}

/// TD3 on five-step control episodes inside navigation driven by the frozen
/// tuner.
pub fn train_controller(
    cfg: &PhaseConfig,
    worlds: &[World],
    tuner: &TunerPolicy,
    mode: ControlMode,
    start: Start,
    on_snapshot: impl FnMut(&TrainState) -> Result<(), HarnessError>,
) -> Result<TrainOutcome, HarnessError> {
    let state = start_state(cfg, start, "controller", controller_state_dim(&cfg.episode), 2)?;
    let pps = tuner.rate.plans_per_step() as u64;
    drive(
        cfg,
        worlds,
        state,
        |st, world, rng, acc| {
            let Some(mut session) = new_session(world, cfg, tuner.rate, mode, rng)? else { return Ok(None) };
            session.record_transitions = true;
            let mut ret = 0.0;
            while session.status() == NavStatus::Running {
                if session.plans() % pps == 0 {
                    let a = tuner.act(&session)?;
                    session.set_params(action_to_params(&a, &session.cfg.bounds));
                }
                let warm = st.env_steps < cfg.td3.warmup_steps;
                let ep = {
                    let agent = &st.agent;
                    let mut failure = None;
                    let mut policy = |o: &[f32]| -> [f64; 2] {
                        match explore(agent, o, warm, rng) {
                            Ok(a) => [a[0] as f64, a[1] as f64],
                            Err(e) => {
                                failure.get_or_insert(e);
                                [0.0, 0.0]
                            }
                        }
                    };
                    let ep = session.tick(Some(&mut policy))?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    ep
                };
                for t in &ep.transitions {
                    push_and_learn(st, &cfg.td3, t, rng, acc)?;
                    ret += t.reward as f64;
                }
            }
            st.ticks += session.plans();
            Ok(Some(ret))
        },
        on_snapshot,
    )
}

/// The three-phase schedule and where its artifacts go.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub tuner: PhaseConfig,
    pub controller: PhaseConfig,
    pub rate: TuningRate,
    pub mode: ControlMode,
    /// Run phases `1..=phases` (at most 3).
    pub phases: usize,
}

#[derive(Clone, Debug, Default)]
pub struct AlternatingOutcome {
    pub pt1: Option<Checkpoint>,
    pub rc1: Option<Checkpoint>,
    pub pt2: Option<Checkpoint>,
    pub curves: Vec<(String, Vec<CurveRow>)>,
    pub log: Vec<String>,
}

pub const PHASE_NAMES: [&str; 3] = ["pt1", "rc1", "pt2"];

fn save_ck(dir: Option<&Path>, name: &str, ck: &Checkpoint) -> Result<(), HarnessError> {
    if let Some(d) = dir {
        let path = d.join(name);
        ck.save(&path).map_err(|source| HarnessError::Checkpoint { id: path.display().to_string(), source })?;
    }
    Ok(())
}

fn load_ck(dir: Option<&Path>, name: &str) -> Result<Option<Checkpoint>, HarnessError> {
    let Some(d) = dir else { return Ok(None) };
    let path = d.join(name);
    if !path.exists() {
        return Ok(None);
    }
    Checkpoint::load(&path).map(Some).map_err(|source| HarnessError::Checkpoint { id: path.display().to_string(), source })
}

fn save_curve(dir: Option<&Path>, name: &str, rows: &[CurveRow]) -> Result<(), HarnessError> {
    if let Some(d) = dir {
        let path = d.join(format!("{name}_curve.csv"));
        let mut buf = Vec::new();
        write_curve_csv(rows, &mut buf).expect("write to memory");
        fs::write(&path, buf).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(())
}

/// Tuner with the feedforward controller, controller under that tuner, then
/// the tuner again (continuing from its phase-one weights) under the trained
/// controller. With `dir`, finished phases are loaded instead of retrained
/// and an unfinished phase resumes from its latest snapshot.
pub fn alternating_train(schedule: &Schedule, worlds: &[World], vae: &Vae, dir: Option<&Path>) -> Result<AlternatingOutcome, HarnessError> {
    let mut out = AlternatingOutcome::default();
    let phases = schedule.phases.min(3);
    let snapshot_writer = |name: &'static str, role: &'static str| {
        move |st: &TrainState| save_ck(dir, &format!("{name}.snapshot"), &st.snapshot(role))
    };

    let mut tuner_agent: Option<Td3Agent> = None;
    for (idx, &name) in PHASE_NAMES.iter().enumerate().take(phases) {
        let seq = idx as u32 + 1;
        let done = load_ck(dir, &format!("{name}.ckpt"))?;
        let ck = if let Some(ck) = done {
            out.log.push(format!("phase {seq} ({name}): loaded finished checkpoint"));
            ck
        } else {
            let snap = load_ck(dir, &format!("{name}.snapshot"))?;
            let resumed = snap.is_some();
            let outcome = match idx {
                0 | 2 => {
                    let controller = match &out.rc1 {
                        Some(c) if idx == 2 => Some(ControllerPolicy::from_checkpoint(c).map_err(|source| HarnessError::Checkpoint {
                            id: "rc1".into(),
                            source,
                        })?),
                        _ => None,
                    };
                    let start = match (&snap, &tuner_agent) {
                        (Some(s), _) => Start::Resume(s),
                        (None, Some(a)) if idx == 2 => Start::WarmStart(a),
                        _ => Start::Fresh,
                    };
                    let cfg = PhaseConfig { seed: schedule.tuner.seed.wrapping_add(idx as u64), ..schedule.tuner.clone() };
                    train_tuner(&cfg, worlds, vae, schedule.rate, controller.as_ref(), start, snapshot_writer(name, "tuner"))?
                }
                _ => {
                    let pt1 = out.pt1.as_ref().expect("phase one precedes phase two");
                    let tuner = TunerPolicy::from_checkpoint(pt1).map_err(|source| HarnessError::Checkpoint { id: "pt1".into(), source })?;
                    let start = snap.as_ref().map_or(Start::Fresh, Start::Resume);
                    train_controller(&schedule.controller, worlds, &tuner, schedule.mode, start, snapshot_writer(name, "controller"))?
                }
            };
            if !outcome.finished {
                out.log.push(format!("phase {seq} ({name}): stopped after {} episodes", outcome.state.episodes));
                let role = if idx == 1 { "controller" } else { "tuner" };
                save_ck(dir, &format!("{name}.snapshot"), &outcome.state.snapshot(role))?;
                return Ok(out);
            }
            out.log.push(format!(
                "phase {seq} ({name}): {} episodes, {} ticks, {} updates{}",
                outcome.state.episodes,
                outcome.state.ticks,
                outcome.agent().updates(),
                if resumed { ", resumed" } else { "" }
            ));
            out.curves.push((name.to_string(), outcome.state.curve.clone()));
            save_curve(dir, name, &outcome.state.curve)?;
            let ck = match idx {
                0 => tuner_checkpoint(outcome.agent(), vae, schedule.rate, seq, "FC"),
                1 => controller_checkpoint(outcome.agent(), schedule.mode, seq, "pt1"),
                _ => tuner_checkpoint(outcome.agent(), vae, schedule.rate, seq, "rc1"),
            };
            save_ck(dir, &format!("{name}.ckpt"), &ck)?;
            ck
        };
        if idx != 1 {
            tuner_agent = Some(Td3Agent::from_checkpoint(&ck).map_err(|source| HarnessError::Checkpoint { id: name.into(), source })?);
        }
        match idx {
            0 => out.pt1 = Some(ck),
            1 => out.rc1 = Some(ck),
            _ => out.pt2 = Some(ck),
        }
    }
    Ok(out)
}

/// Normalized scans from a scripted random walk: random velocity held for a
/// random number of 0.1 s steps, turning away (in place) when the next step
/// would collide.
pub fn collect_scans(worlds: &[World], count: usize, sensor: &SensorConfig, seed: u64) -> Result<Vec<Vec<f32>>, HarnessError> {
    if worlds.is_empty() {
        return Err(HarnessError::Config("scan collection needs at least one world".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limits = Limits::default();
    let fp = crate::sim::collision::Footprint::default();
    let per_world = count.div_ceil(worlds.len());
    let mut out = Vec::with_capacity(count);
    for w in worlds {
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut robot = RobotState::at_rest(Pose2::new(w.start.x, w.start.y, theta));
        let mut cmd = VelocityCommand::ZERO;
        let mut hold = 0;
        for _ in 0..per_world {
            if out.len() == count {
                break;
            }
            out.push(raycast_scan(&w.grid, &robot.pose(), sensor)?.normalized());
            if hold == 0 {
                cmd = VelocityCommand::new(rng.random_range(0.0..1.0), rng.random_range(-1.5..1.5));
                hold = rng.random_range(5..20);
            }
            hold -= 1;
            let next = step_dynamics(robot, cmd, 0.1, &limits)?;
            if check_collision(&w.grid, next.x, next.y, &fp) {
                let turn = if rng.random::<bool>() { 1.5 } else { -1.5 };
                robot = step_dynamics(robot, VelocityCommand::new(0.0, turn), 0.5, &limits)?;
                hold = 0;
            } else {
                robot = next;
            }
        }
    }
    Ok(out)
}

/// Minibatch Adam on the scan corpus; returns the model and per-step losses.
pub fn pretrain_vae(
    scans: &[Vec<f32>],
    cfg: &VaeConfig,
    steps: usize,
    batch: usize,
    seed: u64,
) -> Result<(Vae, Vec<VaeLoss>), HarnessError> {
    if scans.is_empty() || scans.iter().any(|s| s.len() != cfg.input_dim) {
        return Err(HarnessError::Config(format!("vae corpus must be non-empty scans of {} beams", cfg.input_dim)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vae = Vae::new(cfg, &mut rng)?;
    let mut tr = VaeTrainer::new(vae, cfg.lr, ChaCha8Rng::seed_from_u64(seed ^ 0xfeed));
    let batch = batch.min(scans.len()).max(1);
    let mut losses = Vec::with_capacity(steps);
    let mut buf = Vec::with_capacity(batch * cfg.input_dim);
    for _ in 0..steps {
        buf.clear();
        for _ in 0..batch {
            buf.extend_from_slice(&scans[rng.random_range(0..scans.len())]);
        }
        losses.push(tr.train_step(&buf, batch)?);
    }
    Ok((tr.into_vae(), losses))
}
