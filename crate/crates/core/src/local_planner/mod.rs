//! Timed elastic band planner: knots with time intervals, optimized for
//! travel time, clearance, velocity limits and adherence to the global path.

mod band;
mod trajectory;

pub use band::{
    optimize_band, plan_local, plan_local_from, seed_band, seed_band_from, BandCost, BandGradient, BandObjective, BandWeights,
    OptimizeReport, PlannerConfig,
};
pub use trajectory::{feedforward_velocity, segment_velocity, write_trajectory_csv, TimedTrajectory};

/// The four tunable planner knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerParams {
    pub max_vel_x: f64,
    pub max_vel_theta: f64,
    pub weight_obstacle: f64,
    pub inflation_radius: f64,
}

/// Inclusive `(low, high)` range of each planner parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBounds {
    pub max_vel_x: (f64, f64),
    pub max_vel_theta: (f64, f64),
    pub weight_obstacle: (f64, f64),
    pub inflation_radius: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            max_vel_x: (0.2, 2.0),
            max_vel_theta: (0.3, 3.14),
            weight_obstacle: (10.0, 100.0),
            inflation_radius: (0.05, 0.5),
        }
    }
}

impl ParamBounds {
    pub fn as_array(&self) -> [(f64, f64); 4] {
        [self.max_vel_x, self.max_vel_theta, self.weight_obstacle, self.inflation_radius]
    }

    pub fn from_array(b: [(f64, f64); 4]) -> Self {
        Self { max_vel_x: b[0], max_vel_theta: b[1], weight_obstacle: b[2], inflation_radius: b[3] }
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|&(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi)
    }
}

impl PlannerParams {
    /// Clamps every field into the default bounds.
    pub fn new(max_vel_x: f64, max_vel_theta: f64, weight_obstacle: f64, inflation_radius: f64) -> Self {
        Self::clamped([max_vel_x, max_vel_theta, weight_obstacle, inflation_radius], &ParamBounds::default())
    }

    pub fn clamped(v: [f64; 4], bounds: &ParamBounds) -> Self {
        let b = bounds.as_array();
        let c = |k: usize| v[k].clamp(b[k].0, b[k].1);
        Self { max_vel_x: c(0), max_vel_theta: c(1), weight_obstacle: c(2), inflation_radius: c(3) }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.max_vel_x, self.max_vel_theta, self.weight_obstacle, self.inflation_radius]
    }

    pub const NAMES: [&'static str; 4] = ["max_vel_x", "max_vel_theta", "weight_obstacle", "inflation_radius"];
}

impl Default for PlannerParams {
    /// Stock planner settings used when nothing tunes them.
    fn default() -> Self {
        Self { max_vel_x: 0.4, max_vel_theta: 0.3, weight_obstacle: 50.0, inflation_radius: 0.5 }
    }
}
