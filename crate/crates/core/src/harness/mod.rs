//! Orchestration: variants, episodes and scoring, training schedules,
//! configuration files and plots.

pub mod config;
mod eval;
mod policy;
pub mod svg;
mod train;

pub use eval::{
    barn_score, comparison_table, episode_rng, evaluate, load_variant, optimal_time, parse_metrics_csv, run_episode, summarize,
    write_metrics_csv, EpisodeConfig, EpisodeResult, EpisodeTrace, EvalReport, EvalRow, LoadedVariant, MetricRow, ScoreReport,
    VariantSpec, METRICS_HEADER,
};
pub use policy::{
    controller_checkpoint, mode_name, parse_mode, parse_rate, rate_name, tuner_checkpoint, CheckpointStore, ControllerPolicy,
    TunerPolicy,
};
pub use train::{
    alternating_train, collect_scans, controller_state_dim, pretrain_vae, train_controller, train_tuner, write_curve_csv,
    AlternatingOutcome, CurveRow, PhaseConfig, Schedule, Start, Td3Settings, TrainOutcome, TrainState, PHASE_NAMES,
};
