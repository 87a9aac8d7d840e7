//! 50 Hz tracking layer: waypoint interpolation, feedforward plus bounded
//! feedback, the five-step control episode and its reward.

mod disturbance;

use std::io::{self, Write};

use learnkit::Transition;

pub use disturbance::{domain_disturbance, Actuator, DisturbanceConfig};

use crate::error::SimError;
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::local_planner::{feedforward_velocity, TimedTrajectory};
use crate::sim::collision::{check_collision, Footprint};
use crate::sim::dynamics::{step_dynamics, Limits, RobotState, VelocityCommand, OMEGA_HARD_MAX, V_HARD_MAX};
use crate::sim::grid::OccupancyGrid;
use crate::sim::lidar::{raycast_scan, SensorConfig, MIN_RANGE};

pub const CONTROL_DT: f64 = 0.02;
pub const EPISODE_STEPS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeedbackAction {
    pub dv: f64,
    pub domega: f64,
}

impl FeedbackAction {
    pub const ZERO: FeedbackAction = FeedbackAction { dv: 0.0, domega: 0.0 };

    /// Scales a policy output in `[-1, 1]^2` to the feedback bounds.
    pub fn from_normalized(a: [f64; 2], cfg: &ControllerConfig) -> Self {
        Self { dv: a[0].clamp(-1.0, 1.0) * cfg.dv_max, domega: a[1].clamp(-1.0, 1.0) * cfg.domega_max }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerRewardConfig {
    pub w2: f64,
    pub w2_theta: f64,
    pub r_collision_prime: f64,
}

impl Default for ControllerRewardConfig {
    fn default() -> Self {
        Self { w2: -10.0, w2_theta: -1.0, r_collision_prime: -20.0 }
    }
}

/// What the learned policy's output means.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlMode {
    /// Bounded correction added to the feedforward velocity.
    Feedback,
    /// The policy emits the whole command, scaled to the platform limits.
    FullVelocity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerConfig {
    pub dv_max: f64,
    pub domega_max: f64,
    /// Consecutive beams merged (nearest return) for the policy input.
    pub scan_downsample: usize,
    pub position_scale: f64,
    /// Scale of the predicted tracking offset feature.
    pub offset_scale: f64,
    pub mode: ControlMode,
    pub reward: ControllerRewardConfig,
    pub limits: Limits,
    pub footprint: Footprint,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            dv_max: 0.5,
            domega_max: 1.0,
            scan_downsample: 4,
            position_scale: 1.0 / 0.2,
            offset_scale: 50.0,
            mode: ControlMode::Feedback,
            reward: ControllerRewardConfig::default(),
            limits: Limits::default(),
            footprint: Footprint::default(),
        }
    }
}

/// Expected poses at `t0 + {0.02, ..., 0.10}` seconds after the stamp.
pub fn interpolate_waypoints(traj: &TimedTrajectory, t0: f64) -> [Pose2; EPISODE_STEPS] {
    std::array::from_fn(|k| traj.pose_at(t0 + (k + 1) as f64 * CONTROL_DT))
}

/// Feedforward plus feedback, clamped to the platform limits.
pub fn compose_command(ff: (f64, f64), fb: FeedbackAction, limits: &Limits) -> VelocityCommand {
    VelocityCommand::new(ff.0 + fb.dv, ff.1 + fb.domega).clamped(limits)
}

/// Position distance between two poses in the same frame.
pub fn tracking_error(actual: &Pose2, expected: &Pose2) -> f64 {
    actual.position().distance(expected.position())
}

/// Weighted position and heading error plus the collision penalty.
pub fn controller_reward(p_t: &Pose2, p_star: &Pose2, collided: bool, cfg: &ControllerRewardConfig) -> f64 {
    let r_t = cfg.w2 * tracking_error(p_t, p_star) + cfg.w2_theta * wrap_angle(p_t.theta - p_star.theta).abs();
    if collided {
        r_t + cfg.r_collision_prime
    } else {
        r_t
    }
}

/// Controller observation. Poses are in the frame of the robot at episode start.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    /// Downsampled ranges divided by the sensor range.
    pub scan: Vec<f64>,
    pub rel_waypoints: [Pose2; EPISODE_STEPS],
    pub time_step: usize,
    pub rel_pose: Pose2,
    pub body_velocity: (f64, f64),
    pub feedforward: (f64, f64),
    pub last_command: (f64, f64),
}

impl ControllerState {
    pub fn vector_len(n_scan: usize) -> usize {
        n_scan + 3 * EPISODE_STEPS + EPISODE_STEPS + 3 + 2 + 2 + 2 + 3
    }

    /// Flat network input. The trailing three values are the offset of the
    /// current waypoint from where pure feedforward would put the robot, in
    /// the robot frame.
    pub fn to_vector(&self, cfg: &ControllerConfig) -> Vec<f32> {
        let s = cfg.position_scale;
        let mut v = Vec::with_capacity(Self::vector_len(self.scan.len()));
        v.extend(self.scan.iter().map(|&r| r as f32));
        for w in &self.rel_waypoints {
            v.extend([(w.x * s) as f32, (w.y * s) as f32, w.theta as f32]);
        }
        v.extend((0..EPISODE_STEPS).map(|k| if k == self.time_step { 1.0f32 } else { 0.0 }));
        let p = self.rel_pose;
        v.extend([(p.x * s) as f32, (p.y * s) as f32, p.theta as f32]);
        for (a, b) in [self.body_velocity, self.feedforward, self.last_command] {
            v.extend([(a / V_HARD_MAX) as f32, (b / OMEGA_HARD_MAX) as f32]);
        }
        let target = self.rel_waypoints[self.time_step].relative_to(&p);
        let (vf, wf) = self.feedforward;
        let o = cfg.offset_scale;
        v.extend([
            ((target.x - vf * CONTROL_DT) * o) as f32,
            (target.y * o) as f32,
            (wrap_angle(target.theta - wf * CONTROL_DT) * o * 0.1) as f32,
        ]);
        v
    }
}

/// Maps a controller observation to a normalized action in `[-1, 1]^2`.
pub trait FeedbackPolicy {
    fn act(&mut self, state: &[f32]) -> [f64; 2];
}

impl<F: FnMut(&[f32]) -> [f64; 2]> FeedbackPolicy for F {
    fn act(&mut self, state: &[f32]) -> [f64; 2] {
        self(state)
    }
}

/// Per-step record, world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlStep {
    pub t: f64,
    pub pose: Pose2,
    pub target: Pose2,
    pub command: VelocityCommand,
    pub feedback: FeedbackAction,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlEpisode {
    pub transitions: Vec<Transition>,
    pub steps: Vec<ControlStep>,
    pub final_state: RobotState,
    pub collided: bool,
    pub reached_goal: bool,
    /// Position error at the last executed step.
    pub tracking_error: f64,
    /// Last command sent to the actuator.
    pub last_command: VelocityCommand,
}

/// Everything a control episode reads besides the trajectory.
#[derive(Clone, Copy, Debug)]
pub struct ControlContext<'a> {
    pub grid: &'a OccupancyGrid,
    pub sensor: &'a SensorConfig,
    pub cfg: &'a ControllerConfig,
    /// Goal point and tolerance; reaching it ends the episode.
    pub goal: Option<(Point2, f64)>,
    /// Build transitions for replay (requires a scan every step).
    pub record: bool,
}

fn policy_scan(ctx: &ControlContext, pose: &Pose2) -> Vec<f64> {
    let n = ctx.sensor.n_beams.div_ceil(ctx.cfg.scan_downsample);
    match raycast_scan(ctx.grid, pose, ctx.sensor) {
        Ok(s) => s.downsample_min(ctx.cfg.scan_downsample).into_iter().map(|r| r / ctx.sensor.max_range).collect(),
        Err(_) => vec![MIN_RANGE / ctx.sensor.max_range; n],
    }
}

/// Tracks `traj` for five 0.02 s steps from `state`, starting `t_rel` seconds
/// after the trajectory stamp. Without a policy the command is the plain
/// feedforward. Stops early on collision or on reaching the goal.
pub fn run_control_episode(
    ctx: &ControlContext,
    traj: &TimedTrajectory,
    t_rel: f64,
    state: RobotState,
    actuator: &mut Actuator,
    last_command: VelocityCommand,
    mut policy: Option<&mut dyn FeedbackPolicy>,
) -> Result<ControlEpisode, SimError> {
    let cfg = ctx.cfg;
    let frame = state.pose();
    let rel_waypoints = interpolate_waypoints(traj, t_rel).map(|w| w.relative_to(&frame));
    let need_scan = policy.is_some() || ctx.record;
    let mut robot = state;
    let mut last = last_command;
    let mut scan = if need_scan { policy_scan(ctx, &frame) } else { Vec::new() };
    let mut out = ControlEpisode {
        transitions: Vec::new(),
        steps: Vec::with_capacity(EPISODE_STEPS),
        final_state: state,
        collided: false,
        reached_goal: false,
        tracking_error: 0.0,
        last_command,
    };
    let make_state = |k: usize, robot: &RobotState, scan: Vec<f64>, last: VelocityCommand| ControllerState {
        scan,
        rel_waypoints,
        time_step: k.min(EPISODE_STEPS - 1),
        rel_pose: robot.pose().relative_to(&frame),
        body_velocity: (robot.v, robot.omega),
        feedforward: feedforward_velocity(traj, t_rel + k.min(EPISODE_STEPS - 1) as f64 * CONTROL_DT),
        last_command: (last.v, last.omega),
    };
    for k in 0..EPISODE_STEPS {
        let ff = feedforward_velocity(traj, t_rel + k as f64 * CONTROL_DT);
        let obs = need_scan.then(|| make_state(k, &robot, std::mem::take(&mut scan), last).to_vector(cfg));
        let raw = match (policy.as_mut(), &obs) {
            (Some(p), Some(o)) => {
                let a = p.act(o);
                [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)]
            }
            _ => [0.0, 0.0],
        };
        let (cmd, fb) = match cfg.mode {
            ControlMode::Feedback => {
                let fb = FeedbackAction::from_normalized(raw, cfg);
                (compose_command(ff, fb, &cfg.limits), fb)
            }
            ControlMode::FullVelocity => {
                let cmd = VelocityCommand::new(raw[0] * V_HARD_MAX, raw[1] * OMEGA_HARD_MAX).clamped(&cfg.limits);
                (cmd, FeedbackAction { dv: cmd.v - ff.0, domega: cmd.omega - ff.1 })
            }
        };
        let effective = actuator.apply(cmd);
        let next = step_dynamics(robot, effective, CONTROL_DT, &cfg.limits)?;
        last = cmd;
        let collided = check_collision(ctx.grid, next.x, next.y, &cfg.footprint);
        let p_t = next.pose().relative_to(&frame);
        let p_star = rel_waypoints[k];
        let reward = controller_reward(&p_t, &p_star, collided, &cfg.reward);
        let reached = ctx.goal.is_some_and(|(g, tol)| next.position().distance(g) <= tol);
        let done = collided || reached || k + 1 == EPISODE_STEPS;
        if need_scan && !(done && !ctx.record) {
            scan = policy_scan(ctx, &next.pose());
        }
        if ctx.record {
            let next_obs = make_state(k + 1, &next, scan.clone(), last).to_vector(cfg);
            out.transitions.push(Transition {
                state: obs.unwrap(),
                action: vec![raw[0] as f32, raw[1] as f32],
                reward: reward as f32,
                next_state: next_obs,
                done,
            });
        }
        out.steps.push(ControlStep {
            t: traj.stamp + t_rel + (k + 1) as f64 * CONTROL_DT,
            pose: next.pose(),
            target: p_star.from_frame(&frame),
            command: cmd,
            feedback: fb,
            reward,
        });
        out.tracking_error = tracking_error(&p_t, &p_star);
        robot = next;
        if collided || reached {
            out.collided = collided;
            out.reached_goal = reached && !collided;
            break;
        }
    }
    out.final_state = robot;
    out.last_command = last;
    Ok(out)
}

/// CSV rows `t,x,y,theta,x*,y*,theta*,v_cmd,omega_cmd,dv,domega,reward`.
pub fn write_control_trace_csv<'a>(steps: impl IntoIterator<Item = &'a ControlStep>, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "t,x,y,theta,x*,y*,theta*,v_cmd,omega_cmd,dv,domega,reward")?;
    for s in steps {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.pose.x,
            s.pose.y,
            s.pose.theta,
            s.target.x,
            s.target.y,
            s.target.theta,
            s.command.v,
            s.command.omega,
            s.feedback.dv,
            s.feedback.domega,
            s.reward
        )?;
    }
    Ok(())
}
