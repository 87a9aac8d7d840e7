use crate::controller::{run_control_episode, Actuator, ControlContext, ControlEpisode, ControlStep, ControllerConfig, FeedbackPolicy, CONTROL_DT};
use crate::error::TunerError;
use crate::geometry::{Point2, Pose2};
use crate::global_planner::{inflate, plan_global, GlobalPath, GLOBAL_INFLATION};
use crate::local_planner::{plan_local_from, ParamBounds, PlannerConfig, PlannerParams, TimedTrajectory};
use crate::sim::collision::DistanceField;
use crate::sim::dynamics::{RobotState, VelocityCommand};
use crate::sim::grid::World;
use crate::sim::lidar::{raycast_scan, LaserScan, SensorConfig, MIN_RANGE};

use super::{action_to_params, tuner_reward, TunerRewardConfig};

/// How many planning ticks one tuner action covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TuningRate {
    OneHz,
    TenHz,
}

impl TuningRate {
    pub fn plans_per_step(self) -> usize {
        match self {
            TuningRate::OneHz => 10,
            TuningRate::TenHz => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionConfig {
    pub planner: PlannerConfig,
    pub controller: ControllerConfig,
    pub sensor: SensorConfig,
    pub reward: TunerRewardConfig,
    pub bounds: ParamBounds,
    pub goal_tolerance: f64,
    pub timeout: f64,
    pub rate: TuningRate,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            controller: ControllerConfig::default(),
            sensor: SensorConfig::default(),
            reward: TunerRewardConfig::default(),
            bounds: ParamBounds::default(),
            goal_tolerance: 0.3,
            timeout: 50.0,
            rate: TuningRate::OneHz,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NavStatus {
    Running,
    Reached,
    Collided,
    TimedOut,
}

/// Arc length of the robot along the global path. Each update only searches
/// a few segments around the previous one, so progress cannot jump through
/// walls to a parallel stretch of the path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgressTracker {
    pub s: f64,
    segment: usize,
}

impl ProgressTracker {
    const BACK: usize = 3;
    const AHEAD: usize = 6;

    pub fn new(path: &GlobalPath, p: Point2) -> Self {
        let pr = path.project_range(p, 0, 1);
        Self { s: pr.s, segment: pr.segment }
    }

    pub fn update(&mut self, path: &GlobalPath, p: Point2) {
        let pr = path.project_range(p, self.segment.saturating_sub(Self::BACK), self.segment + Self::AHEAD);
        self.s = pr.s;
        self.segment = pr.segment;
    }

    pub fn remaining(&self, path: &GlobalPath) -> f64 {
        path.remaining(self.s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamTraceRow {
    pub t: f64,
    pub params: PlannerParams,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunerStepOutcome {
    pub reward: f64,
    pub status: NavStatus,
    pub d_prev: f64,
    pub d_now: f64,
    pub plans: usize,
    pub control_steps: usize,
}

impl TunerStepOutcome {
    pub fn done(&self) -> bool {
        self.status != NavStatus::Running
    }
}

/// One navigation episode in one world: global path, robot, actuator and the
/// counters of every layer.
#[derive(Clone, Debug)]
pub struct NavSession {
    pub cfg: SessionConfig,
    field: DistanceField,
    path: GlobalPath,
    goal: Point2,
    robot: RobotState,
    actuator: Actuator,
    last_command: VelocityCommand,
    params: PlannerParams,
    tracker: ProgressTracker,
    status: NavStatus,
    control_steps: u64,
    plans: u64,
    tuner_steps: u64,
    /// Build controller transitions in every control episode.
    pub record_transitions: bool,
    /// Keep per-step control records.
    pub record_trace: bool,
    tracking_errors: Vec<f64>,
    trace: Vec<ControlStep>,
    param_trace: Vec<ParamTraceRow>,
    last_plan: Option<TimedTrajectory>,
}

impl NavSession {
    /// Plans the global path on the inflated costmap and places the robot at
    /// rest at the start, facing along the path.
    pub fn new(world: &World, cfg: SessionConfig, actuator: Actuator) -> Result<Self, TunerError> {
        let costmap = inflate(&world.grid, GLOBAL_INFLATION);
        let path = plan_global(&costmap, world.start, world.goal)?;
        let ahead = path.point_at(0.3).sub(world.start);
        let theta = if ahead.norm() > 0.0 { ahead.y.atan2(ahead.x) } else { 0.0 };
        let robot = RobotState::at_rest(Pose2::new(world.start.x, world.start.y, theta));
        let reach = cfg.bounds.inflation_radius.1 + cfg.planner.margin;
        Ok(Self {
            field: DistanceField::new(&world.grid, reach),
            tracker: ProgressTracker::new(&path, world.start),
            path,
            goal: world.goal,
            robot,
            actuator,
            last_command: VelocityCommand::ZERO,
            params: PlannerParams::default(),
            status: NavStatus::Running,
            control_steps: 0,
            plans: 0,
            tuner_steps: 0,
            record_transitions: false,
            record_trace: false,
            tracking_errors: Vec::new(),
            trace: Vec::new(),
            param_trace: Vec::new(),
            last_plan: None,
            cfg,
        })
    }

    pub fn path(&self) -> &GlobalPath {
        &self.path
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn goal(&self) -> Point2 {
        self.goal
    }

    pub fn status(&self) -> NavStatus {
        self.status
    }

    pub fn params(&self) -> PlannerParams {
        self.params
    }

    pub fn set_params(&mut self, params: PlannerParams) {
        self.params = params;
    }

    /// Simulated time, an exact multiple of the control period.
    pub fn time(&self) -> f64 {
        self.control_steps as f64 * CONTROL_DT
    }

    pub fn control_steps(&self) -> u64 {
        self.control_steps
    }

    pub fn plans(&self) -> u64 {
        self.plans
    }

    pub fn tuner_steps(&self) -> u64 {
        self.tuner_steps
    }

    pub fn remaining(&self) -> f64 {
        self.tracker.remaining(&self.path)
    }

    /// End-of-episode tracking error of every control episode so far.
    pub fn tracking_errors(&self) -> &[f64] {
        &self.tracking_errors
    }

    pub fn trace(&self) -> &[ControlStep] {
        &self.trace
    }

    pub fn param_trace(&self) -> &[ParamTraceRow] {
        &self.param_trace
    }

    pub fn last_plan(&self) -> Option<&TimedTrajectory> {
        self.last_plan.as_ref()
    }

    pub fn grid(&self) -> &crate::sim::grid::OccupancyGrid {
        self.field.grid()
    }

    /// Scan at the current pose; a pose inside an obstacle reads minimum range.
    pub fn scan(&self) -> LaserScan {
        let sensor = &self.cfg.sensor;
        raycast_scan(self.field.grid(), &self.robot.pose(), sensor).unwrap_or_else(|_| LaserScan {
            ranges: vec![MIN_RANGE; sensor.n_beams],
            angle_min: -0.5 * sensor.fov,
            angle_increment: sensor.angle_increment(),
            max_range: sensor.max_range,
        })
    }

    /// One 10 Hz tick: a local plan, then one five-step control episode.
    pub fn tick(&mut self, policy: Option<&mut dyn FeedbackPolicy>) -> Result<ControlEpisode, TunerError> {
        if self.status != NavStatus::Running {
            return Err(TunerError::Finished);
        }
        let traj = plan_local_from(&self.params, &self.field, &self.path, self.tracker.s, &self.robot, self.time(), &self.cfg.planner)?;
        self.plans += 1;
        let ctx = ControlContext {
            grid: self.field.grid(),
            sensor: &self.cfg.sensor,
            cfg: &self.cfg.controller,
            goal: Some((self.goal, self.cfg.goal_tolerance)),
            record: self.record_transitions,
        };
        let ep = run_control_episode(&ctx, &traj, 0.0, self.robot, &mut self.actuator, self.last_command, policy)?;
        for s in &ep.steps {
            self.tracker.update(&self.path, s.pose.position());
        }
        if self.record_trace {
            self.trace.extend_from_slice(&ep.steps);
        }
        self.control_steps += ep.steps.len() as u64;
        self.tracking_errors.push(ep.tracking_error);
        self.robot = ep.final_state;
        self.last_command = ep.last_command;
        self.last_plan = Some(traj);
        let timeout_steps = (self.cfg.timeout / CONTROL_DT).round() as u64;
        self.status = if ep.collided {
            NavStatus::Collided
        } else if ep.reached_goal {
            NavStatus::Reached
        } else if self.control_steps >= timeout_steps {
            NavStatus::TimedOut
        } else {
            NavStatus::Running
        };
        Ok(ep)
    }

    /// Applies the tuner action, advances one tuner period (or until the
    /// episode ends) and scores the progress made.
    pub fn tuner_step(
        &mut self,
        action: &[f64; 4],
        mut policy: Option<&mut dyn FeedbackPolicy>,
        mut on_episode: impl FnMut(&ControlEpisode),
    ) -> Result<TunerStepOutcome, TunerError> {
        if self.status != NavStatus::Running {
            return Err(TunerError::Finished);
        }
        self.params = action_to_params(action, &self.cfg.bounds);
        let d_prev = self.remaining();
        let (p0, c0) = (self.plans, self.control_steps);
        for _ in 0..self.cfg.rate.plans_per_step() {
            let ep = self.tick(match policy {
                Some(ref mut p) => Some(&mut **p),
                None => None,
            })?;
            on_episode(&ep);
            if self.status != NavStatus::Running {
                break;
            }
        }
        let d_now = self.remaining();
        let reached = self.status == NavStatus::Reached;
        let collided = self.status == NavStatus::Collided;
        let reward = tuner_reward(d_prev, d_now, reached, collided, &self.cfg.reward);
        self.tuner_steps += 1;
        self.param_trace.push(ParamTraceRow { t: self.time(), params: self.params, reward });
        Ok(TunerStepOutcome {
            reward,
            status: self.status,
            d_prev,
            d_now,
            plans: (self.plans - p0) as usize,
            control_steps: (self.control_steps - c0) as usize,
        })
    }
}
