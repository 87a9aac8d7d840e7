use std::f64::consts::{PI, TAU};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn distance(self, other: Point2) -> f64 {
        self.sub(other).norm()
    }

    #[inline]
    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn lerp(self, o: Point2, s: f64) -> Point2 {
        Point2::new(self.x + (o.x - self.x) * s, self.y + (o.y - self.y) * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Expresses `self` in the frame whose origin is `frame`.
    pub fn relative_to(&self, frame: &Pose2) -> Pose2 {
        let (s, c) = frame.theta.sin_cos();
        let dx = self.x - frame.x;
        let dy = self.y - frame.y;
        Pose2::new(c * dx + s * dy, -s * dx + c * dy, wrap_angle(self.theta - frame.theta))
    }

    /// Inverse of [`Pose2::relative_to`].
    pub fn from_frame(&self, frame: &Pose2) -> Pose2 {
        let (s, c) = frame.theta.sin_cos();
        Pose2::new(frame.x + c * self.x - s * self.y, frame.y + s * self.x + c * self.y, wrap_angle(self.theta + frame.theta))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.77);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn relative_pose_round_trip() {
        let frame = Pose2::new(1.0, -2.0, 0.7);
        let p = Pose2::new(0.3, 0.4, -2.9);
        let back = p.relative_to(&frame).from_frame(&frame);
        assert!((back.x - p.x).abs() < 1e-12 && (back.y - p.y).abs() < 1e-12);
        assert!(wrap_angle(back.theta - p.theta).abs() < 1e-12);
        let id = frame.relative_to(&frame);
        assert_eq!((id.x, id.y, id.theta), (0.0, 0.0, 0.0));
    }
}
