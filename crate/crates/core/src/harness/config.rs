//! Flat `key = value` configuration covering every tunable default.
//!
//! Lines starting with `#` are comments. Ranges are written `lo,hi`, layer
//! widths `256x256`, seed lists `0,1,2`. Unknown keys are errors.

use learnkit::VaeConfig;

use crate::error::HarnessError;
use crate::local_planner::PlannerParams;
use crate::sim::collision::Footprint;
use crate::sim::worldgen::WorldGenConfig;
use crate::tuner::TuningRate;
use crate::controller::ControlMode;

use super::eval::EpisodeConfig;
use super::policy::{mode_name, parse_mode, parse_rate, rate_name};
use super::train::{PhaseConfig, Schedule, Td3Settings};

/// Training-phase knobs that are not shared with evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseKnobs {
    pub seed: u64,
    pub budget_ticks: u64,
    pub snapshot_every: u64,
    pub td3: Td3Settings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    pub seed: u64,
    pub world: WorldGenConfig,
    pub train_worlds: usize,
    pub test_worlds: usize,
    pub eval_seeds: Vec<u64>,
    pub episode: EpisodeConfig,
    pub rate: TuningRate,
    pub mode: ControlMode,
    pub vae: VaeConfig,
    pub vae_steps: usize,
    pub vae_batch: usize,
    pub vae_scans: usize,
    pub tuner: PhaseKnobs,
    pub controller: PhaseKnobs,
    pub phases: usize,
}

/// First seed of the held-out worlds; training worlds use `0..train_worlds`.
pub const TEST_WORLD_SEED: u64 = 1_000_000;

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world: WorldGenConfig::default(),
            train_worlds: 300,
            test_worlds: 50,
            eval_seeds: vec![0, 1, 2],
            episode: EpisodeConfig::default(),
            rate: TuningRate::OneHz,
            mode: ControlMode::Feedback,
            vae: VaeConfig::default(),
            vae_steps: 5000,
            vae_batch: 64,
            vae_scans: 50_000,
            tuner: PhaseKnobs { seed: 1, budget_ticks: 200_000, snapshot_every: 50, td3: Td3Settings::tuner_default() },
            controller: PhaseKnobs { seed: 2, budget_ticks: 50_000, snapshot_every: 50, td3: Td3Settings::controller_default() },
            phases: 3,
        }
    }
}

fn bad(key: &str, value: &str) -> HarnessError {
    HarnessError::Config(format!("bad value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| bad(key, v))
}

fn range(key: &str, v: &str) -> Result<(f64, f64), HarnessError> {
    let (a, b) = v.split_once(',').ok_or_else(|| bad(key, v))?;
    let r = (num(key, a.trim())?, num(key, b.trim())?);
    if r.0 > r.1 {
        return Err(bad(key, v));
    }
    Ok(r)
}

fn list<T: std::str::FromStr>(key: &str, v: &str, sep: char) -> Result<Vec<T>, HarnessError> {
    v.split(sep).map(|x| num(key, x.trim())).collect()
}

fn fmt_range(r: (f64, f64)) -> String {
    format!("{},{}", r.0, r.1)
}

fn fmt_list<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn set_td3(t: &mut PhaseKnobs, key: &str, field: &str, v: &str) -> Result<(), HarnessError> {
    let d = &mut t.td3;
    match field {
        "seed" => t.seed = num(key, v)?,
        "budget_ticks" => t.budget_ticks = num(key, v)?,
        "snapshot_every" => t.snapshot_every = num(key, v)?,
        "hidden" => d.hidden = list(key, v, 'x')?,
        "gamma" => d.gamma = num(key, v)?,
        "tau" => d.tau = num(key, v)?,
        "policy_delay" => d.policy_delay = num(key, v)?,
        "target_noise_std" => d.target_noise_std = num(key, v)?,
        "target_noise_clip" => d.target_noise_clip = num(key, v)?,
        "exploration_noise_std" => d.exploration_noise_std = num(key, v)?,
        "actor_lr" => d.actor_lr = num(key, v)?,
        "critic_lr" => d.critic_lr = num(key, v)?,
        "batch_size" => d.batch_size = num(key, v)?,
        "replay_capacity" => d.replay_capacity = num(key, v)?,
        "warmup_steps" => d.warmup_steps = num(key, v)?,
        "update_every" => d.update_every = num(key, v)?,
        "updates_per_round" => d.updates_per_round = num(key, v)?,
        "actor_out_scale" => d.actor_out_scale = num(key, v)?,
        _ => return Err(HarnessError::Config(format!("unknown key {key}"))),
    }
    Ok(())
}

fn td3_lines(prefix: &str, t: &PhaseKnobs) -> Vec<(String, String)> {
    let d = &t.td3;
    [
        ("seed", t.seed.to_string()),
        ("budget_ticks", t.budget_ticks.to_string()),
        ("snapshot_every", t.snapshot_every.to_string()),
        ("hidden", fmt_list(&d.hidden, "x")),
        ("gamma", d.gamma.to_string()),
        ("tau", d.tau.to_string()),
        ("policy_delay", d.policy_delay.to_string()),
        ("target_noise_std", d.target_noise_std.to_string()),
        ("target_noise_clip", d.target_noise_clip.to_string()),
        ("exploration_noise_std", d.exploration_noise_std.to_string()),
        ("actor_lr", d.actor_lr.to_string()),
        ("critic_lr", d.critic_lr.to_string()),
        ("batch_size", d.batch_size.to_string()),
        ("replay_capacity", d.replay_capacity.to_string()),
        ("warmup_steps", d.warmup_steps.to_string()),
        ("update_every", d.update_every.to_string()),
        ("updates_per_round", d.updates_per_round.to_string()),
        ("actor_out_scale", d.actor_out_scale.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (format!("{prefix}.{k}"), v))
    .collect()
}

impl HarnessConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        let e = &mut self.episode;
        let s = &mut e.session;
        match key {
            "seed" => self.seed = num(key, v)?,
            "world.width" => self.world.width = num(key, v)?,
            "world.height" => self.world.height = num(key, v)?,
            "world.resolution" => self.world.resolution = num(key, v)?,
            "world.fill_density" => self.world.fill_density = num(key, v)?,
            "world.smoothing_iterations" => self.world.smoothing_iterations = num(key, v)?,
            "world.clear_radius" => self.world.clear_radius = num(key, v)?,
            "world.max_attempts" => self.world.max_attempts = num(key, v)?,
            "world.train_count" => self.train_worlds = num(key, v)?,
            "world.test_count" => self.test_worlds = num(key, v)?,
            "eval.seeds" => self.eval_seeds = list(key, v, ',')?,
            "session.goal_tolerance" => s.goal_tolerance = num(key, v)?,
            "session.timeout" => s.timeout = num(key, v)?,
            "session.rate" => self.rate = parse_rate(v).ok_or_else(|| bad(key, v))?,
            "robot.footprint_radius" => {
                let r: f64 = num(key, v)?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(bad(key, v));
                }
                s.planner.footprint = Footprint::new(r);
                s.controller.footprint = Footprint::new(r);
            }
            "planner.n_knots" => s.planner.n_knots = num(key, v)?,
            "planner.horizon" => s.planner.horizon = num(key, v)?,
            "planner.iterations" => s.planner.iterations = num(key, v)?,
            "planner.margin" => s.planner.margin = num(key, v)?,
            "planner.min_dt" => s.planner.min_dt = num(key, v)?,
            "planner.weight_time" => s.planner.weights.time = num(key, v)?,
            "planner.weight_path" => s.planner.weights.path = num(key, v)?,
            "planner.weight_velocity" => s.planner.weights.velocity = num(key, v)?,
            "default.max_vel_x" => e.default_params.max_vel_x = num(key, v)?,
            "default.max_vel_theta" => e.default_params.max_vel_theta = num(key, v)?,
            "default.weight_obstacle" => e.default_params.weight_obstacle = num(key, v)?,
            "default.inflation_radius" => e.default_params.inflation_radius = num(key, v)?,
            "bounds.max_vel_x" => s.bounds.max_vel_x = range(key, v)?,
            "bounds.max_vel_theta" => s.bounds.max_vel_theta = range(key, v)?,
            "bounds.weight_obstacle" => s.bounds.weight_obstacle = range(key, v)?,
            "bounds.inflation_radius" => s.bounds.inflation_radius = range(key, v)?,
            "sensor.fov_deg" => s.sensor.fov = num::<f64>(key, v)?.to_radians(),
            "sensor.n_beams" => s.sensor.n_beams = num(key, v)?,
            "sensor.max_range" => s.sensor.max_range = num(key, v)?,
            "controller.mode" => self.mode = parse_mode(v).ok_or_else(|| bad(key, v))?,
            "controller.dv_max" => s.controller.dv_max = num(key, v)?,
            "controller.domega_max" => s.controller.domega_max = num(key, v)?,
            "controller.scan_downsample" => s.controller.scan_downsample = num(key, v)?,
            "controller.w2" => s.controller.reward.w2 = num(key, v)?,
            "controller.w2_theta" => s.controller.reward.w2_theta = num(key, v)?,
            "controller.r_collision_prime" => s.controller.reward.r_collision_prime = num(key, v)?,
            "reward.w1" => s.reward.w1 = num(key, v)?,
            "reward.r_arrival" => s.reward.r_arrival = num(key, v)?,
            "reward.r_collision" => s.reward.r_collision = num(key, v)?,
            "reward.step_penalty" => s.reward.step_penalty = num(key, v)?,
            "disturbance.gain_v" => e.disturbance.gain_v = range(key, v)?,
            "disturbance.gain_omega" => e.disturbance.gain_omega = range(key, v)?,
            "disturbance.bias_v" => e.disturbance.bias_v = range(key, v)?,
            "disturbance.bias_omega" => e.disturbance.bias_omega = range(key, v)?,
            "disturbance.latency_ticks" => e.disturbance.latency_ticks = num(key, v)?,
            "vae.latent_dim" => self.vae.latent_dim = num(key, v)?,
            "vae.hidden" => self.vae.hidden = list(key, v, 'x')?,
            "vae.beta" => self.vae.beta = num(key, v)?,
            "vae.lr" => self.vae.lr = num(key, v)?,
            "vae.steps" => self.vae_steps = num(key, v)?,
            "vae.batch" => self.vae_batch = num(key, v)?,
            "vae.scans" => self.vae_scans = num(key, v)?,
            "schedule.phases" => {
                self.phases = num(key, v)?;
                if !(1..=3).contains(&self.phases) {
                    return Err(bad(key, v));
                }
            }
            _ => {
                if let Some(f) = key.strip_prefix("tuner.") {
                    return set_td3(&mut self.tuner, key, f, v);
                }
                if let Some(f) = key.strip_prefix("ctrl.") {
                    return set_td3(&mut self.controller, key, f, v);
                }
                return Err(HarnessError::Config(format!("unknown key {key}")));
            }
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| HarnessError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), HarnessError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| HarnessError::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key with its current value, in a form [`HarnessConfig::from_text`] reads back.
    pub fn to_text(&self) -> String {
        let e = &self.episode;
        let s = &e.session;
        let d = &e.disturbance;
        let mut kv: Vec<(String, String)> = [
            ("seed", self.seed.to_string()),
            ("world.width", self.world.width.to_string()),
            ("world.height", self.world.height.to_string()),
            ("world.resolution", self.world.resolution.to_string()),
            ("world.fill_density", self.world.fill_density.to_string()),
            ("world.smoothing_iterations", self.world.smoothing_iterations.to_string()),
            ("world.clear_radius", self.world.clear_radius.to_string()),
            ("world.max_attempts", self.world.max_attempts.to_string()),
            ("world.train_count", self.train_worlds.to_string()),
            ("world.test_count", self.test_worlds.to_string()),
            ("eval.seeds", fmt_list(&self.eval_seeds, ",")),
            ("session.goal_tolerance", s.goal_tolerance.to_string()),
            ("session.timeout", s.timeout.to_string()),
            ("session.rate", rate_name(self.rate).to_string()),
            ("robot.footprint_radius", s.planner.footprint.radius.to_string()),
            ("planner.n_knots", s.planner.n_knots.to_string()),
            ("planner.horizon", s.planner.horizon.to_string()),
            ("planner.iterations", s.planner.iterations.to_string()),
            ("planner.margin", s.planner.margin.to_string()),
            ("planner.min_dt", s.planner.min_dt.to_string()),
            ("planner.weight_time", s.planner.weights.time.to_string()),
            ("planner.weight_path", s.planner.weights.path.to_string()),
            ("planner.weight_velocity", s.planner.weights.velocity.to_string()),
            ("default.max_vel_x", e.default_params.max_vel_x.to_string()),
            ("default.max_vel_theta", e.default_params.max_vel_theta.to_string()),
            ("default.weight_obstacle", e.default_params.weight_obstacle.to_string()),
            ("default.inflation_radius", e.default_params.inflation_radius.to_string()),
            ("bounds.max_vel_x", fmt_range(s.bounds.max_vel_x)),
            ("bounds.max_vel_theta", fmt_range(s.bounds.max_vel_theta)),
            ("bounds.weight_obstacle", fmt_range(s.bounds.weight_obstacle)),
            ("bounds.inflation_radius", fmt_range(s.bounds.inflation_radius)),
            ("sensor.fov_deg", s.sensor.fov.to_degrees().to_string()),
            ("sensor.n_beams", s.sensor.n_beams.to_string()),
            ("sensor.max_range", s.sensor.max_range.to_string()),
            ("controller.mode", mode_name(self.mode).to_string()),
            ("controller.dv_max", s.controller.dv_max.to_string()),
            ("controller.domega_max", s.controller.domega_max.to_string()),
            ("controller.scan_downsample", s.controller.scan_downsample.to_string()),
            ("controller.w2", s.controller.reward.w2.to_string()),
            ("controller.w2_theta", s.controller.reward.w2_theta.to_string()),
            ("controller.r_collision_prime", s.controller.reward.r_collision_prime.to_string()),
            ("reward.w1", s.reward.w1.to_string()),
            ("reward.r_arrival", s.reward.r_arrival.to_string()),
            ("reward.r_collision", s.reward.r_collision.to_string()),
            ("reward.step_penalty", s.reward.step_penalty.to_string()),
            ("disturbance.gain_v", fmt_range(d.gain_v)),
            ("disturbance.gain_omega", fmt_range(d.gain_omega)),
            ("disturbance.bias_v", fmt_range(d.bias_v)),
            ("disturbance.bias_omega", fmt_range(d.bias_omega)),
            ("disturbance.latency_ticks", d.latency_ticks.to_string()),
            ("vae.latent_dim", self.vae.latent_dim.to_string()),
            ("vae.hidden", fmt_list(&self.vae.hidden, "x")),
            ("vae.beta", self.vae.beta.to_string()),
            ("vae.lr", self.vae.lr.to_string()),
            ("vae.steps", self.vae_steps.to_string()),
            ("vae.batch", self.vae_batch.to_string()),
            ("vae.scans", self.vae_scans.to_string()),
            ("schedule.phases", self.phases.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        kv.extend(td3_lines("tuner", &self.tuner));
        kv.extend(td3_lines("ctrl", &self.controller));
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn tuner_phase(&self) -> PhaseConfig {
        self.phase(&self.tuner)
    }

    pub fn controller_phase(&self) -> PhaseConfig {
        self.phase(&self.controller)
    }

    fn phase(&self, k: &PhaseKnobs) -> PhaseConfig {
        PhaseConfig {
            seed: self.seed.wrapping_mul(1_000_003).wrapping_add(k.seed),
            budget_ticks: k.budget_ticks,
            td3: k.td3.clone(),
            episode: self.episode,
            snapshot_every: k.snapshot_every,
            stop_after_episodes: None,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            tuner: self.tuner_phase(),
            controller: self.controller_phase(),
            rate: self.rate,
            mode: self.mode,
            phases: self.phases,
        }
    }

    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig { input_dim: self.episode.session.sensor.n_beams, ..self.vae.clone() }
    }

    pub fn default_params(&self) -> PlannerParams {
        self.episode.default_params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = HarnessConfig::default();
        c.apply_overrides(&["tuner.hidden=64x32", "disturbance.bias_v=-0.1,0.1", "session.rate=10hz", "eval.seeds=4,5"]).unwrap();
        assert_eq!(HarnessConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(c.tuner.td3.hidden, vec![64, 32]);
        assert_eq!(c.rate, TuningRate::TenHz);
    }

    #[test]
    fn errors_name_the_problem() {
        let mut c = HarnessConfig::default();
        assert!(c.set("no.such_key", "1").unwrap_err().to_string().contains("unknown key"));
        assert!(c.set("reward.w1", "abc").is_err());
        assert!(c.set("disturbance.gain_v", "1.2,0.8").is_err());
        let e = HarnessConfig::from_text("seed = 1\nbroken line\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
    }
}
