use crate::error::BandError;
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::global_planner::GlobalPath;
use crate::local_planner::{PlannerParams, TimedTrajectory};
use crate::sim::collision::{check_collision, DistanceField, Footprint};
use crate::sim::dynamics::RobotState;
use crate::sim::grid::OccupancyGrid;

/// Fixed weights of the non-tunable cost terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandWeights {
    pub time: f64,
    pub path: f64,
    pub velocity: f64,
}

impl Default for BandWeights {
    fn default() -> Self {
        Self { time: 1.0, path: 5.0, velocity: 1000.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    pub n_knots: usize,
    pub horizon: f64,
    pub iterations: usize,
    /// Clearance added to `inflation_radius` in the obstacle term.
    pub margin: f64,
    pub min_dt: f64,
    pub weights: BandWeights,
    pub footprint: Footprint,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_knots: 20,
            horizon: 3.0,
            iterations: 40,
            margin: 0.05,
            min_dt: 0.01,
            weights: BandWeights::default(),
            footprint: Footprint::default(),
        }
    }
}

/// Unweighted cost terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BandCost {
    pub time_cost: f64,
    pub obstacle_cost: f64,
    pub velocity_violation_cost: f64,
    pub path_adherence_cost: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Cost evaluations spent in line searches.
    pub line_search_evaluations: usize,
    /// Total cost at the start and after every iteration.
    pub costs: Vec<f64>,
}

/// Gradient of the total cost with respect to every knot position and every
/// dt, plus a Gauss-Newton estimate of the position Hessian diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct BandGradient {
    pub positions: Vec<Point2>,
    pub dts: Vec<f64>,
    pub diagonal: Vec<Point2>,
}

/// Band cost over knot positions and dts. Knot headings are not free: the
/// first and last are pinned, interior ones point along the neighbors' chord.
#[derive(Clone, Copy, Debug)]
pub struct BandObjective<'a> {
    pub field: &'a DistanceField,
    pub path: &'a GlobalPath,
    pub params: PlannerParams,
    pub weights: BandWeights,
    pub margin: f64,
    pub first_heading: f64,
    pub last_heading: f64,
    windows: &'a [(usize, usize)],
}

impl<'a> BandObjective<'a> {
    /// Path segments each knot of `band` may project onto: a few either side
    /// of its initial projection. Fixing them keeps the cost a function of
    /// the knot positions alone.
    pub fn path_windows(path: &GlobalPath, band: &TimedTrajectory) -> Vec<(usize, usize)> {
        band.knots
            .iter()
            .map(|k| {
                let seg = path.project(k.position()).segment;
                (seg.saturating_sub(4), seg + 5)
            })
            .collect()
    }

    pub fn new(
        field: &'a DistanceField,
        path: &'a GlobalPath,
        params: PlannerParams,
        cfg: &PlannerConfig,
        band: &TimedTrajectory,
        windows: &'a [(usize, usize)],
    ) -> Self {
        assert_eq!(windows.len(), band.len());
        Self {
            field,
            path,
            params,
            weights: cfg.weights,
            margin: cfg.margin,
            first_heading: band.knots[0].theta,
            last_heading: band.last().theta,
            windows,
        }
    }

    pub fn headings(&self, pts: &[Point2]) -> Vec<f64> {
        let n = pts.len();
        let mut th = vec![0.0; n];
        th[0] = self.first_heading;
        th[n - 1] = self.last_heading;
        for k in 1..n.saturating_sub(1) {
            let q = pts[k + 1].sub(pts[k - 1]);
            th[k] = q.y.atan2(q.x);
        }
        th
    }

    fn clearance(&self) -> f64 {
        self.params.inflation_radius + self.margin
    }

    pub fn cost(&self, pts: &[Point2], dts: &[f64]) -> BandCost {
        self.evaluate(pts, dts, false).0
    }

    pub fn gradient(&self, pts: &[Point2], dts: &[f64]) -> (BandCost, BandGradient) {
        let (c, g) = self.evaluate(pts, dts, true);
        (c, g.unwrap())
    }

    fn evaluate(&self, pts: &[Point2], dts: &[f64], grad: bool) -> (BandCost, Option<BandGradient>) {
        let n = pts.len();
        let w = self.weights;
        let wo = self.params.weight_obstacle;
        let clear = self.clearance();
        let th = self.headings(pts);
        let mut g = grad.then(|| BandGradient {
            positions: vec![Point2::default(); n],
            dts: vec![w.time; n - 1],
            diagonal: vec![Point2::default(); n],
        });
        let mut g_th = vec![0.0; n];

        let time: f64 = dts.iter().sum();
        let mut obs = 0.0;
        let mut path = 0.0;
        for (k, &p) in pts.iter().enumerate() {
            let (d, gd) = self.field.distance(p, clear);
            let e = (clear - d).max(0.0);
            obs += e * e;
            let (lo, hi) = self.windows[k];
            let pr = self.path.project_range(p, lo, hi);
            path += pr.distance * pr.distance;
            if let Some(g) = g.as_mut() {
                let r = p.sub(pr.point);
                g.positions[k] = g.positions[k].add(gd.scale(-2.0 * wo * e)).add(r.scale(2.0 * w.path));
                let mut dg = Point2::new(2.0 * w.path, 2.0 * w.path);
                if e > 0.0 {
                    dg = dg.add(Point2::new(2.0 * wo * gd.x * gd.x, 2.0 * wo * gd.y * gd.y));
                }
                g.diagonal[k] = g.diagonal[k].add(dg);
            }
        }

        let (vmax, wmax) = (self.params.max_vel_x, self.params.max_vel_theta);
        let mut vel = 0.0;
        for i in 0..n - 1 {
            let dt = dts[i];
            let dp = pts[i + 1].sub(pts[i]);
            let s = dp.norm();
            let ev = (s / dt - vmax).max(0.0);
            let dth = wrap_angle(th[i + 1] - th[i]);
            let ew = (dth.abs() / dt - wmax).max(0.0);
            vel += ev * ev + ew * ew;
            let Some(g) = g.as_mut() else { continue };
            if ev > 0.0 {
                let j = dp.scale(1.0 / (s * dt));
                let c = 2.0 * w.velocity * ev;
                g.positions[i + 1] = g.positions[i + 1].add(j.scale(c));
                g.positions[i] = g.positions[i].sub(j.scale(c));
                g.dts[i] -= c * s / (dt * dt);
                let dj = Point2::new(2.0 * w.velocity * j.x * j.x, 2.0 * w.velocity * j.y * j.y);
                g.diagonal[i] = g.diagonal[i].add(dj);
                g.diagonal[i + 1] = g.diagonal[i + 1].add(dj);
            }
            if ew > 0.0 {
                let sg = dth.signum();
                let c = 2.0 * w.velocity * ew;
                g_th[i + 1] += c * sg / dt;
                g_th[i] -= c * sg / dt;
                g.dts[i] -= c * dth.abs() / (dt * dt);
                // theta_i moves with p_{i+1}, p_{i-1}; theta_{i+1} with p_{i+2}, p_i.
                for (k, coef) in [(i, -sg / dt), (i + 1, sg / dt)] {
                    if k == 0 || k == n - 1 {
                        continue;
                    }
                    let a = theta_jacobian(pts, k).scale(coef);
                    let d = Point2::new(2.0 * w.velocity * a.x * a.x, 2.0 * w.velocity * a.y * a.y);
                    g.diagonal[k + 1] = g.diagonal[k + 1].add(d);
                    g.diagonal[k - 1] = g.diagonal[k - 1].add(d);
                }
            }
        }
        if let Some(g) = g.as_mut() {
            for k in 1..n.saturating_sub(1) {
                if g_th[k] != 0.0 {
                    let a = theta_jacobian(pts, k).scale(g_th[k]);
                    g.positions[k + 1] = g.positions[k + 1].add(a);
                    g.positions[k - 1] = g.positions[k - 1].sub(a);
                }
            }
        }
        let total = w.time * time + wo * obs + w.velocity * vel + w.path * path;
        (
            BandCost {
                time_cost: time,
                obstacle_cost: obs,
                velocity_violation_cost: vel,
                path_adherence_cost: path,
                total,
            },
            g,
        )
    }

    /// Cost of one segment as a function of its dt alone.
    fn segment_time_cost(&self, s: f64, a: f64, dt: f64) -> f64 {
        let ev = (s / dt - self.params.max_vel_x).max(0.0);
        let ew = (a / dt - self.params.max_vel_theta).max(0.0);
        self.weights.time * dt + self.weights.velocity * (ev * ev + ew * ew)
    }

    /// Exact minimizer of [`Self::segment_time_cost`] over `dt >= min_dt`. The
    /// function is convex with its minimum at or below the dt that exactly
    /// meets both speed limits, so bisection on the derivative suffices.
    fn best_dt(&self, s: f64, a: f64, min_dt: f64) -> f64 {
        let (v, om) = (self.params.max_vel_x, self.params.max_vel_theta);
        let upper = (s / v).max(a / om).max(min_dt);
        let wv = self.weights.velocity;
        let deriv = |dt: f64| {
            let ev = (s / dt - v).max(0.0);
            let ew = (a / dt - om).max(0.0);
            self.weights.time - 2.0 * wv * (ev * s + ew * a) / (dt * dt)
        };
        if upper <= min_dt || deriv(min_dt) >= 0.0 {
            return min_dt;
        }
        let (mut lo, mut hi) = (min_dt, upper);
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// d(theta_k)/d(p_{k+1}); the derivative with respect to p_{k-1} is its negative.
fn theta_jacobian(pts: &[Point2], k: usize) -> Point2 {
    let q = pts[k + 1].sub(pts[k - 1]);
    let r2 = q.dot(q);
    if r2 == 0.0 {
        Point2::default()
    } else {
        Point2::new(-q.y / r2, q.x / r2)
    }
}

/// Band along the global path from the robot's nearest path point up to
/// `horizon` meters ahead. Knot 0 is the robot pose; spacing is uniform in arc
/// length of the seed polyline and each dt gives half of `max_vel_x`.
pub fn seed_band(path: &GlobalPath, state: &RobotState, params: &PlannerParams, cfg: &PlannerConfig) -> TimedTrajectory {
    seed_band_from(path, state, path.project(state.position()).s, params, cfg)
}

/// As [`seed_band`], with the path anchor `s0` supplied by the caller.
pub fn seed_band_from(
    path: &GlobalPath,
    state: &RobotState,
    s0: f64,
    params: &PlannerParams,
    cfg: &PlannerConfig,
) -> TimedTrajectory {
    let start = state.position();
    let s0 = s0.clamp(0.0, path.length());
    let s1 = (s0 + cfg.horizon).min(path.length());
    let mut poly = vec![start, path.point_at(s0)];
    for (k, &c) in path.cumulative().iter().enumerate() {
        if c > s0 && c < s1 {
            poly.push(path.points()[k]);
        }
    }
    poly.push(path.point_at(s1));
    poly.dedup_by(|a, b| a.distance(*b) < 1e-9);
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(w[1]));
    }
    let total = *cum.last().unwrap();
    if poly.len() < 2 || total < 1e-9 {
        return TimedTrajectory::single(state.pose(), 0.0);
    }
    let n = cfg.n_knots.max(2).min(((total / 0.02).ceil() as usize + 1).max(2));
    let sample = |s: f64| {
        let k = cum.partition_point(|&c| c <= s).saturating_sub(1).min(poly.len() - 2);
        let seg = cum[k + 1] - cum[k];
        let f = if seg > 0.0 { ((s - cum[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        poly[k].lerp(poly[k + 1], f)
    };
    let mut pts: Vec<Point2> = (0..n).map(|k| sample(total * k as f64 / (n - 1) as f64)).collect();
    pts[0] = start;
    pts[n - 1] = *poly.last().unwrap();
    let tail = poly[poly.len() - 1].sub(poly[poly.len() - 2]);
    let last_heading = tail.y.atan2(tail.x);
    let mut knots = Vec::with_capacity(n);
    knots.push(state.pose());
    for k in 1..n - 1 {
        let q = pts[k + 1].sub(pts[k - 1]);
        knots.push(Pose2::new(pts[k].x, pts[k].y, q.y.atan2(q.x)));
    }
    knots.push(Pose2::new(pts[n - 1].x, pts[n - 1].y, last_heading));
    let speed = 0.5 * params.max_vel_x;
    let dts = pts.windows(2).map(|w| (w[0].distance(w[1]) / speed).max(cfg.min_dt)).collect();
    TimedTrajectory::new(knots, dts, 0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion with a diagonal initial inverse Hessian.
fn lbfgs_direction(g: &[f64], h0: &[f64], memory: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; memory.len()];
    for (i, (s, y, rho)) in memory.iter().enumerate().rev() {
        alphas[i] = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(q, y)| *q -= alphas[i] * y);
    }
    let mut r: Vec<f64> = q.iter().zip(h0).map(|(q, h)| q * h).collect();
    for (i, (s, y, rho)) in memory.iter().enumerate() {
        let b = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(r, s)| *r += (alphas[i] - b) * s);
    }
    r.iter_mut().for_each(|r| *r = -*r);
    r
}

fn is_band_free(grid: &OccupancyGrid, knots: &[Pose2], fp: &Footprint) -> bool {
    let hit = |p: Point2| check_collision(grid, p.x, p.y, fp);
    if knots.iter().any(|k| hit(k.position())) {
        return false;
    }
    !knots.windows(2).any(|w| hit(w[0].position().lerp(w[1].position(), 0.5)))
}

/// Limited-memory quasi-Newton descent with backtracking on interior knot positions,
/// alternated with exact per-segment dt minimization. Endpoints never move and
/// the total cost never increases.
pub fn optimize_band(
    band: &TimedTrajectory,
    field: &DistanceField,
    path: &GlobalPath,
    params: &PlannerParams,
    cfg: &PlannerConfig,
    iters: usize,
) -> Result<(TimedTrajectory, BandCost, OptimizeReport), BandError> {
    let n = band.len();
    if n < 2 {
        return Err(BandError::TooFewKnots(n));
    }
    let windows = BandObjective::path_windows(path, band);
    let obj = BandObjective::new(field, path, *params, cfg, band, &windows);
    let mut pts: Vec<Point2> = band.knots.iter().map(|k| k.position()).collect();
    let mut dts = band.dts.clone();
    let non_finite = |iteration: usize, c: &BandCost| {
        (!c.total.is_finite()).then(|| BandError::NonFiniteCost { iteration, detail: format!("{c:?}") })
    };
    let mut cost = obj.cost(&pts, &dts);
    if let Some(e) = non_finite(0, &cost) {
        return Err(e);
    }
    let mut report = OptimizeReport { costs: vec![cost.total], ..Default::default() };
    const MAX_STEP: f64 = 0.05;

    let update_dts = |pts: &[Point2], dts: &mut [f64]| {
        let th = obj.headings(pts);
        for i in 0..dts.len() {
            let s = pts[i].distance(pts[i + 1]);
            let a = wrap_angle(th[i + 1] - th[i]).abs();
            let cand = obj.best_dt(s, a, cfg.min_dt);
            if obj.segment_time_cost(s, a, cand) <= obj.segment_time_cost(s, a, dts[i]) {
                dts[i] = cand;
            }
        }
    };

    const HISTORY: usize = 8;
    let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(HISTORY);
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    for it in 0..iters {
        report.iterations = it + 1;
        let before = cost.total;
        update_dts(&pts, &mut dts);
        let (c, g) = obj.gradient(&pts, &dts);
        if let Some(e) = non_finite(it + 1, &c) {
            return Err(e);
        }
        // Per-segment dt updates can only lower the cost, but the summed total
        // is recomputed; guard against last-bit rounding in the sum.
        cost = if c.total <= cost.total { c } else { cost };
        let flat: Vec<f64> = (1..n - 1).flat_map(|k| [g.positions[k].x, g.positions[k].y]).collect();
        let h0: Vec<f64> = (1..n - 1).flat_map(|k| [1.0 / (g.diagonal[k].x + 1e-6), 1.0 / (g.diagonal[k].y + 1e-6)]).collect();
        if let Some((x, gx)) = &last {
            let sv: Vec<f64> = (1..n - 1).flat_map(|k| [pts[k].x, pts[k].y]).zip(x).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = flat.iter().zip(gx).map(|(a, b)| a - b).collect();
            let sy = dot(&sv, &yv);
            if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&sv, &sv).sqrt() {
                if memory.len() == HISTORY {
                    memory.remove(0);
                }
                memory.push((sv, yv, 1.0 / sy));
            }
        }
        let mut dir = lbfgs_direction(&flat, &h0, &memory);
        if dot(&dir, &flat) >= 0.0 {
            memory.clear();
            dir = flat.iter().zip(&h0).map(|(g, h)| -g * h).collect();
        }
        let longest = dir.chunks(2).map(|d| d[0].abs().max(d[1].abs())).fold(0.0, f64::max);
        let shrink = if longest > MAX_STEP { MAX_STEP / longest } else { 1.0 };
        let mut delta = vec![Point2::default(); n];
        for k in 1..n - 1 {
            delta[k] = Point2::new(dir[2 * (k - 1)], dir[2 * (k - 1) + 1]).scale(shrink);
        }
        let slope = shrink * dot(&dir, &flat);
        last = Some(((1..n - 1).flat_map(|k| [pts[k].x, pts[k].y]).collect::<Vec<f64>>(), flat));
        let mut accepted = false;
        if slope < 0.0 {
            let mut alpha = 1.0;
            for _ in 0..30 {
                let trial: Vec<Point2> = pts.iter().zip(&delta).map(|(p, d)| p.add(d.scale(alpha))).collect();
                // Positions are scored with each dt re-solved for its segment.
                let mut trial_dts = dts.clone();
                update_dts(&trial, &mut trial_dts);
                let tc = obj.cost(&trial, &trial_dts);
                report.line_search_evaluations += 1;
                if tc.total.is_finite() && tc.total <= cost.total + 1e-4 * alpha * slope {
                    pts = trial;
                    dts = trial_dts;
                    cost = tc;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if accepted {
            report.accepted_steps += 1;
        }
        report.costs.push(cost.total);
        if !accepted || before - cost.total <= 1e-10 * (1.0 + before.abs()) {
            break;
        }
    }
    let mut final_dts = dts.clone();
    update_dts(&pts, &mut final_dts);
    let fc = obj.cost(&pts, &final_dts);
    if fc.total <= cost.total {
        dts = final_dts;
        cost = fc;
        *report.costs.last_mut().unwrap() = cost.total;
    }

    let th = obj.headings(&pts);
    let mut knots: Vec<Pose2> = pts.iter().zip(&th).map(|(p, &t)| Pose2::new(p.x, p.y, t)).collect();
    knots[0] = band.knots[0];
    knots[n - 1] = band.knots[n - 1];
    let mut out = TimedTrajectory::new(knots, dts, band.stamp);
    out.feasible = is_band_free(field.grid(), &out.knots, &cfg.footprint);
    Ok((out, cost, report))
}

/// Seeds a band from the robot state and optimizes it with the configured
/// budget. The result is stamped at `stamp`; a band that still collides is
/// returned with `feasible == false`.
pub fn plan_local(
    params: &PlannerParams,
    field: &DistanceField,
    path: &GlobalPath,
    state: &RobotState,
    stamp: f64,
    cfg: &PlannerConfig,
) -> Result<TimedTrajectory, BandError> {
    plan_local_from(params, field, path, path.project(state.position()).s, state, stamp, cfg)
}

/// As [`plan_local`], seeding from arc length `s0` on the path.
pub fn plan_local_from(
    params: &PlannerParams,
    field: &DistanceField,
    path: &GlobalPath,
    s0: f64,
    state: &RobotState,
    stamp: f64,
    cfg: &PlannerConfig,
) -> Result<TimedTrajectory, BandError> {
    let mut seed = seed_band_from(path, state, s0, params, cfg);
    seed.stamp = stamp;
    if seed.len() < 2 {
        return Ok(seed);
    }
    let (traj, _, _) = optimize_band(&seed, field, path, params, cfg, cfg.iterations)?;
    Ok(traj)
}
