use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controller::{domain_disturbance, ControlStep, DisturbanceConfig, FeedbackPolicy};
use crate::error::{HarnessError, TunerError};
use crate::local_planner::PlannerParams;
use crate::sim::dynamics::V_HARD_MAX;
use crate::sim::grid::World;
use crate::tuner::{params_to_action, tuner_reward, NavSession, NavStatus, ParamTraceRow, SessionConfig, TuningRate};

use super::policy::{CheckpointStore, ControllerPolicy, TunerPolicy};

pub const METRICS_HEADER: &str = "world,variant,seed,success,collision,completion_time,tracking_error,barn_score";

/// Ladder rung or custom combination of checkpoint ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariantSpec {
    pub label: String,
    pub tuner: Option<String>,
    /// `None` is the plain feedforward controller.
    pub controller: Option<String>,
}

impl VariantSpec {
    pub fn teb_fc() -> Self {
        Self { label: "TEB+FC".into(), tuner: None, controller: None }
    }

    pub fn pt_fc(tuner: &str) -> Self {
        Self { label: "PT+FC".into(), tuner: Some(tuner.into()), controller: None }
    }

    pub fn pt_rc(tuner: &str, controller: &str) -> Self {
        Self { label: "PT+RC".into(), tuner: Some(tuner.into()), controller: Some(controller.into()) }
    }

    pub fn two_pt_rc(tuner: &str, controller: &str) -> Self {
        Self { label: "2PT+RC".into(), tuner: Some(tuner.into()), controller: Some(controller.into()) }
    }

    /// `label:tuner:controller` with `-` for none, e.g. `PT+RC:pt1.ckpt:rc1.ckpt`.
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [label, t, c] = parts[..] else {
            return Err(HarnessError::Variant(format!("expected label:tuner:controller, got {s:?}")));
        };
        let opt = |x: &str| (x != "-" && !x.is_empty()).then(|| x.to_string());
        let v = Self { label: label.to_string(), tuner: opt(t), controller: opt(c) };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let (pt, rc) = match self.label.as_str() {
            "TEB+FC" => (false, false),
            "PT+FC" => (true, false),
            "PT+RC" | "2PT+RC" => (true, true),
            _ => return Ok(()),
        };
        if pt != self.tuner.is_some() {
            return Err(HarnessError::Variant(format!("{} {} a tuner checkpoint", self.label, if pt { "needs" } else { "takes no" })));
        }
        if rc != self.controller.is_some() {
            return Err(HarnessError::Variant(format!(
                "{} {} a controller checkpoint",
                self.label,
                if rc { "needs" } else { "takes no" }
            )));
        }
        Ok(())
    }
}

/// A variant with its policies loaded.
#[derive(Clone, Debug)]
pub struct LoadedVariant {
    pub label: String,
    pub tuner: Option<TunerPolicy>,
    pub controller: Option<ControllerPolicy>,
}

impl LoadedVariant {
    pub fn feedforward(label: &str, tuner: Option<TunerPolicy>) -> Self {
        Self { label: label.into(), tuner, controller: None }
    }
}

/// Loads both checkpoints and checks that a `2PT+RC` tuner was trained after
/// its controller.
pub fn load_variant(spec: &VariantSpec, store: &CheckpointStore) -> Result<LoadedVariant, HarnessError> {
    spec.validate()?;
    let tuner = spec.tuner.as_deref().map(|id| store.tuner(id)).transpose()?;
    let controller = spec.controller.as_deref().map(|id| store.controller(id)).transpose()?;
    if spec.label == "2PT+RC" {
        let (t, c) = (tuner.as_ref().unwrap(), controller.as_ref().unwrap());
        if t.phase_seq <= c.phase_seq {
            return Err(HarnessError::Variant(format!(
                "2PT+RC tuner (phase {}) must come after its controller (phase {})",
                t.phase_seq, c.phase_seq
            )));
        }
    }
    Ok(LoadedVariant { label: spec.label.clone(), tuner, controller })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeConfig {
    pub session: SessionConfig,
    pub disturbance: DisturbanceConfig,
    /// Parameters used when the variant has no tuner.
    pub default_params: PlannerParams,
    pub record_trace: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            disturbance: DisturbanceConfig::default(),
            default_params: PlannerParams::default(),
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<ControlStep>,
    pub params: Vec<ParamTraceRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub world: String,
    pub variant: String,
    pub seed: u64,
    pub success: bool,
    pub collision: bool,
    pub completion_time: Option<f64>,
    pub mean_tracking_error: f64,
    pub barn_score: f64,
    pub path_length: f64,
    /// Tuning return scored on a one-second clock whatever the tuner rate.
    pub episode_return: f64,
    pub sim_time: f64,
    pub plans: u64,
    pub control_steps: u64,
    pub tuner_steps: u64,
    pub trace: Option<EpisodeTrace>,
}

/// Success-gated optimal time over actual time, with the actual time clamped
/// to `[2 OT, 8 OT]`; at most 0.5.
pub fn barn_score(success: bool, actual_time: f64, optimal_time: f64) -> f64 {
    if !success {
        return 0.0;
    }
    optimal_time / actual_time.clamp(2.0 * optimal_time, 8.0 * optimal_time)
}

pub fn optimal_time(path_length: f64) -> f64 {
    path_length / V_HARD_MAX
}

/// Disturbance stream for one (world, seed) pair, independent of the variant.
pub fn episode_rng(world: &str, seed: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in world.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Runs the full hierarchy until goal, collision or timeout.
pub fn run_episode(
    world: &World,
    world_id: &str,
    variant: &LoadedVariant,
    seed: u64,
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, HarnessError> {
    let mut rng = episode_rng(world_id, seed);
    let actuator = domain_disturbance(&cfg.disturbance, &mut rng);
    let mut scfg = cfg.session;
    scfg.rate = variant.tuner.as_ref().map_or(TuningRate::OneHz, |t| t.rate);
    if let Some(c) = &variant.controller {
        scfg.controller.mode = c.mode;
    }
    let mut session = match NavSession::new(world, scfg, actuator) {
        Ok(s) => s,
        Err(TunerError::Plan(source)) => return Err(HarnessError::Unsolvable { world: world_id.into(), source }),
        Err(e) => return Err(e.into()),
    };
    session.record_trace = cfg.record_trace;
    let fixed = params_to_action(&cfg.default_params, &scfg.bounds);
    let mut ctrl = variant.controller.as_ref().map(|c| move |s: &[f32]| c.act(s));
    let mut d_mark = session.remaining();
    let mut episode_return = 0.0;
    while session.status() == NavStatus::Running {
        let action = match &variant.tuner {
            Some(t) => t.act(&session)?,
            None => fixed,
        };
        let policy = ctrl.as_mut().map(|f| f as &mut dyn FeedbackPolicy);
        session.tuner_step(&action, policy, |_| {})?;
        let boundary = session.control_steps() % 50 == 0;
        if boundary || session.status() != NavStatus::Running {
            let reached = session.status() == NavStatus::Reached;
            let collided = session.status() == NavStatus::Collided;
            episode_return += tuner_reward(d_mark, session.remaining(), reached, collided, &scfg.reward);
            d_mark = session.remaining();
        }
    }
    let success = session.status() == NavStatus::Reached;
    let completion_time = success.then(|| session.time());
    let errs = session.tracking_errors();
    let path_length = session.path().length();
    Ok(EpisodeResult {
        world: world_id.into(),
        variant: variant.label.clone(),
        seed,
        success,
        collision: session.status() == NavStatus::Collided,
        completion_time,
        mean_tracking_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
        barn_score: barn_score(success, session.time(), optimal_time(path_length)),
        path_length,
        episode_return,
        sim_time: session.time(),
        plans: session.plans(),
        control_steps: session.control_steps(),
        tuner_steps: session.tuner_steps(),
        trace: cfg.record_trace.then(|| EpisodeTrace { steps: session.trace().to_vec(), params: session.param_trace().to_vec() }),
    })
}

/// One (world, variant, seed) row; setup errors are kept, not raised.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub world: String,
    pub variant: String,
    pub seed: u64,
    pub result: Result<EpisodeResult, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub variant: String,
    /// `(world, seed, score)` per finished episode.
    pub barn_scores: Vec<(String, u64, f64)>,
    pub mean_barn_score: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub mean_completion_time: Option<f64>,
    pub mean_tracking_error: f64,
    pub episodes: usize,
    pub errors: usize,
}

/// Metrics of one row as read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub world: String,
    pub variant: String,
    pub seed: u64,
    pub success: bool,
    pub collision: bool,
    pub completion_time: Option<f64>,
    pub tracking_error: Option<f64>,
    pub barn_score: Option<f64>,
}

impl MetricRow {
    fn from_eval(r: &EvalRow) -> Self {
        let (ok, res) = match &r.result {
            Ok(e) => (true, Some(e)),
            Err(_) => (false, None),
        };
        Self {
            world: r.world.clone(),
            variant: r.variant.clone(),
            seed: r.seed,
            success: ok && res.unwrap().success,
            collision: ok && res.unwrap().collision,
            completion_time: res.and_then(|e| e.completion_time),
            tracking_error: res.map(|e| e.mean_tracking_error),
            barn_score: res.map(|e| e.barn_score),
        }
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Per-variant aggregates in order of first appearance. Rows without metrics
/// (setup errors) count in `errors` only.
pub fn summarize(rows: &[MetricRow]) -> Vec<ScoreReport> {
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant) {
            order.push(r.variant.clone());
        }
    }
    order
        .into_iter()
        .map(|v| {
            let all: Vec<&MetricRow> = rows.iter().filter(|r| r.variant == v).collect();
            let done: Vec<&MetricRow> = all.iter().copied().filter(|r| r.barn_score.is_some()).collect();
            let n = done.len().max(1) as f64;
            ScoreReport {
                barn_scores: done.iter().map(|r| (r.world.clone(), r.seed, r.barn_score.unwrap())).collect(),
                mean_barn_score: mean(done.iter().map(|r| r.barn_score.unwrap())).unwrap_or(0.0),
                success_rate: done.iter().filter(|r| r.success).count() as f64 / n,
                collision_rate: done.iter().filter(|r| r.collision).count() as f64 / n,
                mean_completion_time: mean(done.iter().filter_map(|r| r.completion_time)),
                mean_tracking_error: mean(done.iter().filter_map(|r| r.tracking_error)).unwrap_or(0.0),
                episodes: done.len(),
                errors: all.len() - done.len(),
                variant: v,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<ScoreReport>,
}

impl EvalReport {
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.rows.iter().map(MetricRow::from_eval).collect()
    }

    pub fn summary(&self, label: &str) -> Option<&ScoreReport> {
        self.summaries.iter().find(|s| s.variant == label)
    }
}

/// Every (world, variant, seed) episode, run in parallel, rows in input order.
pub fn evaluate(worlds: &[(String, World)], variants: &[LoadedVariant], seeds: &[u64], cfg: &EpisodeConfig) -> EvalReport {
    let mut jobs = Vec::new();
    for (wi, _) in worlds.iter().enumerate() {
        for (vi, _) in variants.iter().enumerate() {
            for &s in seeds {
                jobs.push((wi, vi, s));
            }
        }
    }
    let rows: Vec<EvalRow> = jobs
        .par_iter()
        .map(|&(wi, vi, seed)| {
            let (id, world) = &worlds[wi];
            let v = &variants[vi];
            EvalRow {
                world: id.clone(),
                variant: v.label.clone(),
                seed,
                result: run_episode(world, id, v, seed, cfg).map_err(|e| e.to_string()),
            }
        })
        .collect();
    let summaries = summarize(&rows.iter().map(MetricRow::from_eval).collect::<Vec<_>>());
    EvalReport { rows, summaries }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(rows: &[MetricRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.world,
            r.variant,
            r.seed,
            r.success,
            r.collision,
            opt(r.completion_time),
            opt(r.tracking_error),
            opt(r.barn_score)
        )?;
    }
    Ok(())
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>, HarnessError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(METRICS_HEADER) {
        return Err(HarnessError::Format(format!("metrics csv must start with {METRICS_HEADER:?}")));
    }
    let bad = |n: usize, what: &str| HarnessError::Format(format!("metrics line {}: bad {what}", n + 2));
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(bad(n, "field count"));
        }
        let num = |s: &str, what: &str| -> Result<Option<f64>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(n, what))
            }
        };
        rows.push(MetricRow {
            world: f[0].to_string(),
            variant: f[1].to_string(),
            seed: f[2].parse().map_err(|_| bad(n, "seed"))?,
            success: f[3].parse().map_err(|_| bad(n, "success"))?,
            collision: f[4].parse().map_err(|_| bad(n, "collision"))?,
            completion_time: num(f[5], "completion_time")?,
            tracking_error: num(f[6], "tracking_error")?,
            barn_score: num(f[7], "barn_score")?,
        });
    }
    Ok(rows)
}

/// Fixed-width comparison table of the summaries.
pub fn comparison_table(summaries: &[ScoreReport]) -> String {
    let mut s = format!(
        "{:<10} {:>8} {:>9} {:>9} {:>10} {:>10} {:>6}\n",
        "variant", "success", "collision", "time_s", "track_m", "barn", "n"
    );
    for r in summaries {
        s.push_str(&format!(
            "{:<10} {:>7.1}% {:>8.1}% {:>9} {:>10.4} {:>10.4} {:>6}\n",
            r.variant,
            100.0 * r.success_rate,
            100.0 * r.collision_rate,
            r.mean_completion_time.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()),
            r.mean_tracking_error,
            r.mean_barn_score,
            r.episodes
        ));
    }
    s
}
