//! Unicycle kinematics with exact arc integration.

use crate::error::SimError;
use crate::geometry::{wrap_angle, Pose2};

pub const V_HARD_MAX: f64 = 2.0;
pub const OMEGA_HARD_MAX: f64 = 3.14;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl RobotState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self { x: pose.x, y: pose.y, theta: wrap_angle(pose.theta), v: 0.0, omega: 0.0 }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.theta)
    }

    pub fn position(&self) -> crate::geometry::Point2 {
        crate::geometry::Point2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clamped(self, limits: &Limits) -> Self {
        Self {
            v: self.v.clamp(-limits.v_max, limits.v_max),
            omega: self.omega.clamp(-limits.omega_max, limits.omega_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { v_max: V_HARD_MAX, omega_max: OMEGA_HARD_MAX }
    }
}

/// Integrates a constant (clamped) command for `dt` seconds along the exact
/// unicycle arc. The resulting body velocities equal the clamped command.
pub fn step_dynamics(state: RobotState, cmd: VelocityCommand, dt: f64, limits: &Limits) -> Result<RobotState, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::NonFinite("time step (must be positive and finite)"));
    }
    if !(cmd.v.is_finite() && cmd.omega.is_finite()) {
        return Err(SimError::NonFinite("velocity command"));
    }
    if !state.pose().is_finite() {
        return Err(SimError::NonFinite("robot state"));
    }
    let c = cmd.clamped(limits);
    let th0 = state.theta;
    let dth = c.omega * dt;
    let (x, y) = if c.omega.abs() < 1e-9 {
        (state.x + c.v * dt * th0.cos(), state.y + c.v * dt * th0.sin())
    } else {
        let r = c.v / c.omega;
        let th1 = th0 + dth;
        (state.x + r * (th1.sin() - th0.sin()), state.y - r * (th1.cos() - th0.cos()))
    };
    Ok(RobotState { x, y, theta: wrap_angle(th0 + dth), v: c.v, omega: c.omega })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const LIM: Limits = Limits { v_max: V_HARD_MAX, omega_max: OMEGA_HARD_MAX };

    #[test]
    fn zero_command_keeps_pose() {
        let s = RobotState { x: 1.0, y: 2.0, theta: 0.3, v: 1.0, omega: 0.5 };
        let n = step_dynamics(s, VelocityCommand::ZERO, 0.7, &LIM).unwrap();
        assert_eq!((n.x, n.y, n.theta), (1.0, 2.0, 0.3));
        assert_eq!((n.v, n.omega), (0.0, 0.0));
    }

    #[test]
    fn straight_line_advance() {
        let n = step_dynamics(RobotState::default(), VelocityCommand::new(1.0, 0.0), 0.02, &LIM).unwrap();
        assert_eq!(n.x, 0.02);
        assert_eq!(n.y, 0.0);
    }

    #[test]
    fn rotation_in_place() {
        let n = step_dynamics(RobotState::default(), VelocityCommand::new(0.0, PI), 0.5, &Limits { omega_max: PI, ..LIM })
            .unwrap();
        assert!((n.theta - PI / 2.0).abs() < 1e-15);
        assert_eq!((n.x, n.y), (0.0, 0.0));
    }

    #[test]
    fn commands_are_clamped() {
        let n = step_dynamics(RobotState::default(), VelocityCommand::new(5.0, -9.0), 0.1, &LIM).unwrap();
        assert_eq!(n.v, 2.0);
        assert_eq!(n.omega, -3.14);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(step_dynamics(RobotState::default(), VelocityCommand::new(f64::NAN, 0.0), 0.1, &LIM).is_err());
        assert!(step_dynamics(RobotState::default(), VelocityCommand::new(1.0, 0.0), 0.0, &LIM).is_err());
        assert!(step_dynamics(RobotState::default(), VelocityCommand::new(1.0, 0.0), f64::INFINITY, &LIM).is_err());
    }

    #[test]
    fn heading_stays_normalized() {
        let mut s = RobotState { theta: 3.0, ..Default::default() };
        for _ in 0..100 {
            s = step_dynamics(s, VelocityCommand::new(0.5, 3.0), 0.05, &LIM).unwrap();
            assert!(s.theta > -PI && s.theta <= PI);
        }
    }
}
