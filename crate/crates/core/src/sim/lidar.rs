use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::SimError;
use crate::geometry::{Point2, Pose2};
use crate::sim::grid::OccupancyGrid;

/// Smallest range a beam may report.
pub const MIN_RANGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorConfig {
    pub fov: f64,
    pub n_beams: usize,
    pub max_range: f64,
    pub noise_std: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { fov: 270f64.to_radians(), n_beams: 720, max_range: 5.0, noise_std: 0.0 }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_beams == 0 {
            return Err(SimError::Sensor("n_beams must be at least 1".into()));
        }
        if !(self.fov > 0.0 && self.fov <= TAU) {
            return Err(SimError::Sensor(format!("fov {} outside (0, 2pi]", self.fov)));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(SimError::Sensor(format!("max_range {} must be positive", self.max_range)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SimError::Sensor(format!("noise_std {} must be non-negative", self.noise_std)));
        }
        Ok(())
    }

    /// Beam spacing. A full circle avoids duplicating the first beam.
    pub fn angle_increment(&self) -> f64 {
        if self.n_beams == 1 {
            0.0
        } else if self.fov >= TAU {
            self.fov / self.n_beams as f64
        } else {
            self.fov / (self.n_beams - 1) as f64
        }
    }

    /// Beam angle relative to the robot heading.
    pub fn beam_angle(&self, k: usize) -> f64 {
        -self.fov / 2.0 + k as f64 * self.angle_increment()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaserScan {
    pub ranges: Vec<f64>,
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
}

impl LaserScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Ranges divided by `max_range`, in `(0, 1]`.
    pub fn normalized(&self) -> Vec<f32> {
        self.ranges.iter().map(|&r| (r / self.max_range) as f32).collect()
    }

    /// Min-pools consecutive groups of `factor` beams, keeping the nearest return.
    pub fn downsample_min(&self, factor: usize) -> Vec<f64> {
        assert!(factor > 0);
        self.ranges.chunks(factor).map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect()
    }

    pub fn min_range(&self) -> f64 {
        self.ranges.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Distance along a unit direction to the first occupied cell boundary,
/// using an exact grid traversal. Capped at `max_range`.
pub fn raycast(grid: &OccupancyGrid, from: Point2, angle: f64, max_range: f64) -> f64 {
    let res = grid.resolution();
    let (gx, gy) = grid.to_grid(from);
    let (dy, dx) = angle.sin_cos();
    let mut i = gx.floor() as isize;
    let mut j = gy.floor() as isize;
    if grid.occupied(i, j) {
        return 0.0;
    }
    let step_i: isize = if dx > 0.0 { 1 } else { -1 };
    let step_j: isize = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        ((i + 1) as f64 - gx) / dx
    } else if dx < 0.0 {
        (gx - i as f64) / -dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        ((j + 1) as f64 - gy) / dy
    } else if dy < 0.0 {
        (gy - j as f64) / -dy
    } else {
        f64::INFINITY
    };
    let limit = max_range / res;
    loop {
        let t = if t_max_x < t_max_y {
            i += step_i;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            j += step_j;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t >= limit {
            return max_range;
        }
        if grid.occupied(i, j) {
            return t * res;
        }
    }
}

fn check_pose(grid: &OccupancyGrid, pose: &Pose2) -> Result<(), SimError> {
    if !pose.is_finite() {
        return Err(SimError::NonFinite("sensor pose"));
    }
    let p = pose.position();
    if !grid.contains(p) {
        return Err(SimError::PoseOutOfBounds(p));
    }
    if grid.occupied_at(p) {
        return Err(SimError::PoseInObstacle(p));
    }
    Ok(())
}

/// Noise-free scan. A pose inside an occupied cell is reported as an error
/// so the caller can treat it as a collision.
pub fn raycast_scan(grid: &OccupancyGrid, pose: &Pose2, cfg: &SensorConfig) -> Result<LaserScan, SimError> {
    cfg.validate()?;
    check_pose(grid, pose)?;
    let p = pose.position();
    let ranges = (0..cfg.n_beams)
        .map(|k| raycast(grid, p, pose.theta + cfg.beam_angle(k), cfg.max_range).clamp(MIN_RANGE, cfg.max_range))
        .collect();
    Ok(LaserScan { ranges, angle_min: -cfg.fov / 2.0, angle_increment: cfg.angle_increment(), max_range: cfg.max_range })
}

/// Scan with additive Gaussian range noise, clamped to `(0, max_range]`.
pub fn noisy_scan(
    grid: &OccupancyGrid,
    pose: &Pose2,
    cfg: &SensorConfig,
    rng: &mut impl Rng,
) -> Result<LaserScan, SimError> {
    let mut scan = raycast_scan(grid, pose, cfg)?;
    if cfg.noise_std > 0.0 {
        let n = Normal::new(0.0, cfg.noise_std).map_err(|e| SimError::Sensor(e.to_string()))?;
        for r in &mut scan.ranges {
            *r = (*r + n.sample(rng)).clamp(MIN_RANGE, cfg.max_range);
        }
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scan_shape() {
        let cfg = SensorConfig::default();
        assert_eq!(cfg.n_beams, 720);
        let span = cfg.beam_angle(cfg.n_beams - 1) - cfg.beam_angle(0);
        assert!((span - 270f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn open_interior_reports_max_range() {
        let g = OccupancyGrid::new(200, 200, 0.1, Point2::default()).unwrap();
        let cfg = SensorConfig { max_range: 5.0, ..Default::default() };
        let s = raycast_scan(&g, &Pose2::new(10.0, 10.0, 0.4), &cfg).unwrap();
        assert!(s.ranges.iter().all(|&r| r == 5.0));
    }

    #[test]
    fn wall_ahead() {
        let mut g = OccupancyGrid::new(40, 40, 0.1, Point2::default()).unwrap();
        for j in 0..40 {
            g.set(30, j, true);
        }
        let cfg = SensorConfig { n_beams: 721, ..Default::default() };
        let s = raycast_scan(&g, &Pose2::new(2.0, 2.0, 0.0), &cfg).unwrap();
        assert!((s.ranges[360] - 1.0).abs() <= 0.1);
    }

    #[test]
    fn inside_obstacle_is_an_error() {
        let g = OccupancyGrid::new(10, 10, 0.1, Point2::default()).unwrap();
        let r = raycast_scan(&g, &Pose2::new(0.05, 0.5, 0.0), &SensorConfig::default());
        assert!(matches!(r, Err(SimError::PoseInObstacle(_))));
    }

    #[test]
    fn noisy_ranges_stay_in_bounds() {
        use rand::SeedableRng;
        let g = OccupancyGrid::new(20, 20, 0.1, Point2::default()).unwrap();
        let cfg = SensorConfig { noise_std: 0.5, max_range: 1.0, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = noisy_scan(&g, &Pose2::new(1.0, 1.0, 0.0), &cfg, &mut rng).unwrap();
        assert!(s.ranges.iter().all(|&r| r > 0.0 && r <= 1.0));
    }

    #[test]
    fn downsample_keeps_nearest() {
        let s = LaserScan { ranges: vec![3.0, 1.0, 2.0, 5.0], angle_min: 0.0, angle_increment: 0.1, max_range: 5.0 };
        assert_eq!(s.downsample_min(2), vec![1.0, 2.0]);
    }
}
