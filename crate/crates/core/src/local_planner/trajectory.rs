use std::io::{self, Write};

use crate::geometry::{wrap_angle, Pose2};

/// Poses with the time to the next knot, stamped at planning time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedTrajectory {
    pub knots: Vec<Pose2>,
    /// `dts[i]` is the time from knot `i` to knot `i + 1`.
    pub dts: Vec<f64>,
    pub stamp: f64,
    /// False when the optimized band still intersects an obstacle.
    pub feasible: bool,
}

impl TimedTrajectory {
    pub fn new(knots: Vec<Pose2>, dts: Vec<f64>, stamp: f64) -> Self {
        assert!(!knots.is_empty(), "trajectory needs a knot");
        assert_eq!(dts.len() + 1, knots.len(), "one dt per segment");
        Self { knots, dts, stamp, feasible: true }
    }

    pub fn single(pose: Pose2, stamp: f64) -> Self {
        Self::new(vec![pose], Vec::new(), stamp)
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dts.iter().sum()
    }

    /// Knot times relative to the stamp.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.knots.len());
        let mut acc = 0.0;
        t.push(0.0);
        for &d in &self.dts {
            acc += d;
            t.push(acc);
        }
        t
    }

    pub fn last(&self) -> Pose2 {
        *self.knots.last().unwrap()
    }

    /// Segment index containing relative time `t`, or `None` past the end.
    pub fn segment_at(&self, t: f64) -> Option<(usize, f64)> {
        if !(t >= 0.0) {
            return if self.dts.is_empty() { None } else { Some((0, 0.0)) };
        }
        let mut acc = 0.0;
        for (i, &d) in self.dts.iter().enumerate() {
            if t < acc + d {
                return Some((i, t - acc));
            }
            acc += d;
        }
        None
    }

    /// Pose at relative time `t`: linear in position, shortest arc in heading,
    /// clamped to the final knot.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        match self.segment_at(t) {
            None => self.last(),
            Some((i, tau)) => {
                let a = self.knots[i];
                let b = self.knots[i + 1];
                let f = (tau / self.dts[i]).clamp(0.0, 1.0);
                Pose2::new(
                    a.x + f * (b.x - a.x),
                    a.y + f * (b.y - a.y),
                    wrap_angle(a.theta + f * wrap_angle(b.theta - a.theta)),
                )
            }
        }
    }

    /// Largest implied linear and angular speed over all segments.
    pub fn peak_velocities(&self) -> (f64, f64) {
        (0..self.dts.len()).fold((0.0f64, 0.0f64), |(pv, pw), i| {
            let a = self.knots[i];
            let b = self.knots[i + 1];
            let v = a.position().distance(b.position()) / self.dts[i];
            let w = wrap_angle(b.theta - a.theta).abs() / self.dts[i];
            (pv.max(v), pw.max(w))
        })
    }
}

/// Body-frame velocity that carries knot `i` to knot `i + 1`: the angular
/// rate is the heading change over `dt`; the linear speed follows the arc of
/// that turn whose chord is the displacement projected on the mid heading.
pub fn segment_velocity(traj: &TimedTrajectory, i: usize) -> (f64, f64) {
    let a = traj.knots[i];
    let b = traj.knots[i + 1];
    let dt = traj.dts[i];
    let dth = wrap_angle(b.theta - a.theta);
    let mid = a.theta + 0.5 * dth;
    let chord = (b.x - a.x) * mid.cos() + (b.y - a.y) * mid.sin();
    let half = 0.5 * dth;
    let arc = if half.abs() < 1e-9 { 1.0 } else { half / half.sin() };
    (chord * arc / dt, dth / dt)
}

/// Feedforward `(v, omega)` at `t` seconds after the stamp; zero past the end.
pub fn feedforward_velocity(traj: &TimedTrajectory, t: f64) -> (f64, f64) {
    match traj.segment_at(t) {
        Some((i, _)) => segment_velocity(traj, i),
        None => (0.0, 0.0),
    }
}

/// CSV rows `t,x,y,theta,v_ff,omega_ff`, one per knot, times absolute.
pub fn write_trajectory_csv(traj: &TimedTrajectory, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "t,x,y,theta,v_ff,omega_ff")?;
    let times = traj.knot_times();
    for (i, k) in traj.knots.iter().enumerate() {
        let (v, w) = if i < traj.dts.len() { segment_velocity(traj, i) } else { (0.0, 0.0) };
        writeln!(out, "{},{},{},{},{},{}", traj.stamp + times[i], k.x, k.y, k.theta, v, w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_knots_give_pure_translation() {
        let t = TimedTrajectory::new(vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(0.1, 0.0, 0.0)], vec![0.1], 0.0);
        let (v, w) = feedforward_velocity(&t, 0.0);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(w, 0.0);
        assert_eq!(feedforward_velocity(&t, 0.2), (0.0, 0.0));
    }

    #[test]
    fn rotation_in_place() {
        let t = TimedTrajectory::new(vec![Pose2::new(1.0, 1.0, 0.2), Pose2::new(1.0, 1.0, 0.3)], vec![0.1], 0.0);
        let (v, w) = feedforward_velocity(&t, 0.05);
        assert_eq!(v, 0.0);
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_interpolation_takes_the_short_arc() {
        let t = TimedTrajectory::new(vec![Pose2::new(0.0, 0.0, 3.0), Pose2::new(1.0, 0.0, -3.0)], vec![1.0], 0.0);
        let p = t.pose_at(0.5);
        assert_eq!(p.x, 0.5);
        assert!((p.theta.abs() - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(t.pose_at(0.0), t.knots[0]);
        assert_eq!(t.pose_at(5.0), t.knots[1]);
    }

    #[test]
    fn csv_has_a_row_per_knot() {
        let t = TimedTrajectory::new(vec![Pose2::default(), Pose2::new(0.1, 0.0, 0.0)], vec![0.1], 2.0);
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(2).unwrap().starts_with("2.1,"));
    }
}
