//! Parameter-tuning MDP: state from the scan embedding, action as planner
//! parameters, progress reward, and the navigation session it steps.

mod session;

use std::io::{self, Write};

use learnkit::Vae;

pub use session::{NavSession, NavStatus, ParamTraceRow, ProgressTracker, SessionConfig, TunerStepOutcome, TuningRate};

use crate::error::TunerError;
use crate::geometry::{wrap_angle, Point2};
use crate::local_planner::{ParamBounds, PlannerParams};
use crate::sim::dynamics::RobotState;
use crate::sim::lidar::LaserScan;

/// Distance that maps to 1.0 in the goal hint.
pub const GOAL_DISTANCE_SCALE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunerRewardConfig {
    /// Reward per meter of progress.
    pub w1: f64,
    pub r_arrival: f64,
    pub r_collision: f64,
    pub step_penalty: f64,
}

impl Default for TunerRewardConfig {
    fn default() -> Self {
        Self { w1: 1.0, r_arrival: 20.0, r_collision: -20.0, step_penalty: -1.0 }
    }
}

/// Arrival or progress, plus collision penalty, plus step penalty when the
/// goal was not reached.
pub fn tuner_reward(d_prev: f64, d_now: f64, reached: bool, collided: bool, cfg: &TunerRewardConfig) -> f64 {
    let goal = if reached { cfg.r_arrival } else { cfg.w1 * (d_prev - d_now) };
    let collision = if collided { cfg.r_collision } else { 0.0 };
    let step = if reached { 0.0 } else { cfg.step_penalty };
    goal + collision + step
}

/// Affine map from `[-1, 1]^4` onto the bounds box; inputs are clipped.
pub fn action_to_params(a: &[f64; 4], bounds: &ParamBounds) -> PlannerParams {
    let b = bounds.as_array();
    let v: [f64; 4] = std::array::from_fn(|i| {
        let (lo, hi) = b[i];
        lo + (a[i].clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo)
    });
    PlannerParams::clamped(v, bounds)
}

/// Inverse of [`action_to_params`] for parameters inside the bounds.
pub fn params_to_action(p: &PlannerParams, bounds: &ParamBounds) -> [f64; 4] {
    let b = bounds.as_array();
    let v = p.as_array();
    std::array::from_fn(|i| {
        let (lo, hi) = b[i];
        2.0 * (v[i] - lo) / (hi - lo) - 1.0
    })
}

/// Scene embedding plus the goal in the robot frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TunerState {
    pub scene_latent: Vec<f32>,
    /// Distance (m) and bearing (rad) to the goal.
    pub goal_hint: (f64, f64),
}

impl TunerState {
    pub fn len(&self) -> usize {
        self.scene_latent.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Latent followed by distance / 5 m and bearing / pi.
    pub fn to_vector(&self) -> Vec<f32> {
        let mut v = self.scene_latent.clone();
        v.push((self.goal_hint.0 / GOAL_DISTANCE_SCALE) as f32);
        v.push((self.goal_hint.1 / std::f64::consts::PI) as f32);
        v
    }
}

pub fn goal_hint(robot: &RobotState, goal: Point2) -> (f64, f64) {
    let d = goal.sub(robot.position());
    let dist = d.norm();
    let bearing = if dist > 0.0 { wrap_angle(d.y.atan2(d.x) - robot.theta) } else { 0.0 };
    (dist, bearing)
}

pub fn build_tuner_state(scan: &LaserScan, robot: &RobotState, goal: Point2, vae: Option<&Vae>) -> Result<TunerState, TunerError> {
    let vae = vae.ok_or(TunerError::MissingVae)?;
    if scan.len() != vae.input_dim() {
        return Err(TunerError::ScanSize { expected: vae.input_dim(), got: scan.len() });
    }
    let scene_latent = vae.encode(&scan.normalized(), 1)?;
    Ok(TunerState { scene_latent, goal_hint: goal_hint(robot, goal) })
}

/// CSV rows `t,max_vel_x,max_vel_theta,weight_obstacle,inflation_radius,reward`.
pub fn write_param_trace_csv<'a>(rows: impl IntoIterator<Item = &'a ParamTraceRow>, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "t,max_vel_x,max_vel_theta,weight_obstacle,inflation_radius,reward")?;
    for r in rows {
        let p = &r.params;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, p.max_vel_x, p.max_vel_theta, p.weight_obstacle, p.inflation_radius, r.reward
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use learnkit::VaeConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_examples() {
        let c = TunerRewardConfig::default();
        assert_eq!(tuner_reward(3.0, 2.0, true, false, &c), 20.0);
        assert_eq!(tuner_reward(1.5, 1.5, false, false, &c), -1.0);
        assert!((tuner_reward(2.0, 1.7, false, true, &c) + 20.7).abs() < 1e-12);
    }

    #[test]
    fn action_map_corners_and_center() {
        let b = ParamBounds::default();
        assert_eq!(action_to_params(&[-1.0; 4], &b).as_array(), [0.2, 0.3, 10.0, 0.05]);
        assert_eq!(action_to_params(&[1.0; 4], &b).as_array(), [2.0, 3.14, 100.0, 0.5]);
        assert_eq!(action_to_params(&[5.0, -7.0, 1.0, 1.0], &b).as_array(), [2.0, 0.3, 100.0, 0.5]);
    }

    #[test]
    fn state_needs_vae_and_has_latent_plus_two() {
        let robot = RobotState::at_rest(Pose2::new(1.0, 1.0, 0.0));
        let scan = LaserScan { ranges: vec![1.0; 720], angle_min: 0.0, angle_increment: 0.01, max_range: 5.0 };
        assert!(matches!(build_tuner_state(&scan, &robot, Point2::new(2.0, 1.0), None), Err(TunerError::MissingVae)));
        let cfg = VaeConfig { hidden: vec![16], ..Default::default() };
        let vae = Vae::new(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = build_tuner_state(&scan, &robot, Point2::new(1.0, 1.0), Some(&vae)).unwrap();
        assert_eq!(s.to_vector().len(), 34);
        assert_eq!(s.goal_hint.0, 0.0);
        assert_eq!(s, build_tuner_state(&scan, &robot, Point2::new(1.0, 1.0), Some(&vae)).unwrap());
    }

    #[test]
    fn goal_hint_bearing_is_robot_relative() {
        let robot = RobotState::at_rest(Pose2::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let (d, b) = goal_hint(&robot, Point2::new(2.0, 0.0));
        assert_eq!(d, 2.0);
        assert!((b + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
