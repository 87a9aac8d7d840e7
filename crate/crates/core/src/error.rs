use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("pose ({}, {}) lies inside an occupied cell", .0.x, .0.y)]
    PoseInObstacle(Point2),
    #[error("pose ({}, {}) lies outside the grid", .0.x, .0.y)]
    PoseOutOfBounds(Point2),
    #[error("world generation failed after {attempts} attempts (density too high for a connected world)")]
    Generation { attempts: usize },
    #[error("world file line {line}: {msg}")]
    WorldFormat { line: usize, msg: String },
    #[error("invalid sensor config: {0}")]
    Sensor(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("start cell is blocked")]
    StartBlocked,
    #[error("goal cell is blocked")]
    GoalBlocked,
    #[error("no path from start to goal")]
    NoPath,
}

#[derive(Debug, Error)]
pub enum BandError {
    #[error("band needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("non-finite band cost at iteration {iteration}: {detail}")]
    NonFiniteCost { iteration: usize, detail: String },
}

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("tuner state needs a trained vae checkpoint but none is loaded")]
    MissingVae,
    #[error("scan has {got} beams, vae expects {expected}")]
    ScanSize { expected: usize, got: usize },
    #[error(transparent)]
    Learn(#[from] learnkit::LearnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Band(#[from] BandError),
    #[error("global plan failed: {0}")]
    Plan(#[from] PlanError),
    #[error("session already finished")]
    Finished,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(String),
    #[error("checkpoint {id}: {source}")]
    Checkpoint { id: String, source: learnkit::CheckpointError },
    #[error("invalid variant: {0}")]
    Variant(String),
    #[error("world {world} has no solution: {source}")]
    Unsolvable { world: String, source: PlanError },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Tuner(#[from] TunerError),
    #[error(transparent)]
    Learn(#[from] learnkit::LearnError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.as_ref().display().to_string(), source }
    }
}
