//! Frozen policies and their checkpoint layout.
//!
//! Both roles store the full TD3 agent (so training can continue) plus
//! manifest keys `role`, `phase_seq` and `partner`. Tuner checkpoints also
//! carry the VAE that produced their state (`vae_encoder`, `vae_decoder`,
//! `vae_beta`) and their `rate`; controller checkpoints carry their `mode`.

use std::collections::HashMap;
use std::path::PathBuf;

use learnkit::{Checkpoint, CheckpointError, DenseNet, Td3Agent, Vae};

use crate::controller::ControlMode;
use crate::error::HarnessError;
use crate::tuner::{build_tuner_state, NavSession, TunerState, TuningRate};

pub fn rate_name(rate: TuningRate) -> &'static str {
    match rate {
        TuningRate::OneHz => "1hz",
        TuningRate::TenHz => "10hz",
    }
}

pub fn parse_rate(s: &str) -> Option<TuningRate> {
    match s {
        "1hz" => Some(TuningRate::OneHz),
        "10hz" => Some(TuningRate::TenHz),
        _ => None,
    }
}

pub fn mode_name(mode: ControlMode) -> &'static str {
    match mode {
        ControlMode::Feedback => "feedback",
        ControlMode::FullVelocity => "full_velocity",
    }
}

pub fn parse_mode(s: &str) -> Option<ControlMode> {
    match s {
        "feedback" => Some(ControlMode::Feedback),
        "full_velocity" => Some(ControlMode::FullVelocity),
        _ => None,
    }
}

fn first_action(actor: &DenseNet<f32>, state: &[f32]) -> Vec<f64> {
    actor.forward(state, 1).expect("policy input matches actor").into_iter().map(f64::from).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TunerPolicy {
    pub actor: DenseNet<f32>,
    pub vae: Vae<f32>,
    pub rate: TuningRate,
    pub phase_seq: u32,
}

impl TunerPolicy {
    pub fn state(&self, session: &NavSession) -> Result<TunerState, HarnessError> {
        Ok(build_tuner_state(&session.scan(), session.robot(), session.goal(), Some(&self.vae))?)
    }

    pub fn act_on(&self, state: &[f32]) -> [f64; 4] {
        let a = first_action(&self.actor, state);
        [a[0], a[1], a[2], a[3]]
    }

    pub fn act(&self, session: &NavSession) -> Result<[f64; 4], HarnessError> {
        Ok(self.act_on(&self.state(session)?.to_vector()))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        if ck.require_meta("role")? != "tuner" {
            return Err(CheckpointError::Manifest("checkpoint is not a tuner".into()));
        }
        let vae = Vae::from_nets(ck.net("vae_encoder")?, ck.net("vae_decoder")?, ck.parse_meta("vae_beta")?)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let actor = ck.net("actor")?;
        if actor.input_dim() != vae.latent_dim() + 2 || actor.output_dim() != 4 {
            return Err(CheckpointError::Manifest("tuner actor does not match its vae".into()));
        }
        let rate = parse_rate(ck.require_meta("rate")?).ok_or_else(|| CheckpointError::Manifest("bad rate".into()))?;
        Ok(Self { actor, vae, rate, phase_seq: ck.parse_meta("phase_seq")? })
    }
}

/// Full agent checkpoint tagged as a tuner.
pub fn tuner_checkpoint(agent: &Td3Agent, vae: &Vae<f32>, rate: TuningRate, phase_seq: u32, partner: &str) -> Checkpoint {
    let mut ck = agent.to_checkpoint();
    ck.set_meta("role", "tuner");
    ck.set_meta("rate", rate_name(rate));
    ck.set_meta("phase_seq", phase_seq);
    ck.set_meta("partner", partner);
    ck.set_meta("vae_beta", vae.beta());
    ck.push_net("vae_encoder", &vae.encoder);
    ck.push_net("vae_decoder", &vae.decoder);
    ck
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerPolicy {
    pub actor: DenseNet<f32>,
    pub mode: ControlMode,
    pub phase_seq: u32,
}

impl ControllerPolicy {
    pub fn act(&self, state: &[f32]) -> [f64; 2] {
        let a = first_action(&self.actor, state);
        [a[0], a[1]]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        if ck.require_meta("role")? != "controller" {
            return Err(CheckpointError::Manifest("checkpoint is not a controller".into()));
        }
        let mode = parse_mode(ck.require_meta("mode")?).ok_or_else(|| CheckpointError::Manifest("bad mode".into()))?;
        let actor = ck.net("actor")?;
        if actor.output_dim() != 2 {
            return Err(CheckpointError::Manifest("controller actor must have 2 outputs".into()));
        }
        Ok(Self { actor, mode, phase_seq: ck.parse_meta("phase_seq")? })
    }
}

pub fn controller_checkpoint(agent: &Td3Agent, mode: ControlMode, phase_seq: u32, partner: &str) -> Checkpoint {
    let mut ck = agent.to_checkpoint();
    ck.set_meta("role", "controller");
    ck.set_meta("mode", mode_name(mode));
    ck.set_meta("phase_seq", phase_seq);
    ck.set_meta("partner", partner);
    ck
}

/// Resolves checkpoint ids: in-memory entries first, then files under `dir`
/// (or the id itself as a path when `dir` is unset).
#[derive(Clone, Debug, Default)]
pub struct CheckpointStore {
    pub dir: Option<PathBuf>,
    mem: HashMap<String, Checkpoint>,
}

impl CheckpointStore {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), mem: HashMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, ck: Checkpoint) {
        self.mem.insert(id.into(), ck);
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        match &self.dir {
            Some(d) => d.join(id),
            None => PathBuf::from(id),
        }
    }

    pub fn get(&self, id: &str) -> Result<Checkpoint, HarnessError> {
        if let Some(ck) = self.mem.get(id) {
            return Ok(ck.clone());
        }
        let path = self.path_of(id);
        if !path.exists() {
            return Err(HarnessError::MissingCheckpoint(path.display().to_string()));
        }
        Checkpoint::load(&path).map_err(|source| HarnessError::Checkpoint { id: path.display().to_string(), source })
    }

    pub fn tuner(&self, id: &str) -> Result<TunerPolicy, HarnessError> {
        let ck = self.get(id)?;
        TunerPolicy::from_checkpoint(&ck).map_err(|source| HarnessError::Checkpoint { id: id.to_string(), source })
    }

    pub fn controller(&self, id: &str) -> Result<ControllerPolicy, HarnessError> {
        let ck = self.get(id)?;
        ControllerPolicy::from_checkpoint(&ck).map_err(|source| HarnessError::Checkpoint { id: id.to_string(), source })
    }
}
