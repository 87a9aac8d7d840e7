//! Inflated costmap and 8-connected Dijkstra search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::error::PlanError;
use crate::geometry::Point2;
use crate::sim::collision::DEFAULT_FOOTPRINT_RADIUS;
use crate::sim::grid::OccupancyGrid;

/// Inflation used for the global costmap: footprint radius plus a safety margin.
pub const GLOBAL_INFLATION: f64 = DEFAULT_FOOTPRINT_RADIUS + 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Costmap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Point2,
    radius: f64,
    blocked: Vec<bool>,
}

impl Costmap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn blocked_cells(&self) -> &[bool] {
        &self.blocked
    }

    pub fn is_blocked(&self, i: isize, j: isize) -> bool {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            return true;
        }
        self.blocked[j as usize * self.width + i as usize]
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let gx = (p.x - self.origin.x) / self.resolution;
        let gy = (p.y - self.origin.y) / self.resolution;
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (i, j) = (gx.floor() as usize, gy.floor() as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|&&b| b).count()
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[k]].is_infinite() {
            v[k] = q;
            continue;
        }
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance, in cells, from each cell center to the nearest occupied
/// cell center. Row-major like the grid; infinite when nothing is occupied.
pub fn squared_distance_transform(grid: &OccupancyGrid) -> Vec<f64> {
    let (w, h) = (grid.width(), grid.height());
    let mut d: Vec<f64> = grid.cells().iter().map(|&c| if c { 0.0 } else { f64::INFINITY }).collect();
    let mut col = vec![0.0; h];
    let mut out = vec![0.0; h.max(w)];
    for i in 0..w {
        for j in 0..h {
            col[j] = d[j * w + i];
        }
        edt_1d(&col, &mut out[..h]);
        for j in 0..h {
            d[j * w + i] = out[j];
        }
    }
    for j in 0..h {
        let row = d[j * w..(j + 1) * w].to_vec();
        edt_1d(&row, &mut out[..w]);
        d[j * w..(j + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

/// Blocks every cell whose center lies within `radius` of an occupied cell center.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> Costmap {
    assert!(radius >= 0.0, "inflation radius must be non-negative");
    let rc = radius / grid.resolution();
    let limit = rc * rc * (1.0 + 1e-12);
    let blocked = squared_distance_transform(grid).iter().map(|&d2| d2 <= limit).collect();
    Costmap {
        width: grid.width(),
        height: grid.height(),
        resolution: grid.resolution(),
        origin: grid.origin(),
        radius,
        blocked,
    }
}

/// Waypoint polyline with cumulative arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPath {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
    /// Search cost in meters (cell moves of 1 and sqrt 2, times resolution).
    pub cost: f64,
}

/// Nearest point on a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub point: Point2,
    pub distance: f64,
    pub segment: usize,
}

impl GlobalPath {
    pub fn from_points(points: Vec<Point2>, cost: f64) -> Self {
        assert!(!points.is_empty(), "path needs at least one point");
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            s += w[0].distance(w[1]);
            cumulative.push(s);
        }
        Self { points, cumulative, cost }
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Point2 {
        self.points[0]
    }

    pub fn goal(&self) -> Point2 {
        *self.points.last().unwrap()
    }

    /// Point at arc length `s`, clamped to the path.
    pub fn point_at(&self, s: f64) -> Point2 {
        if self.points.len() == 1 || s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return self.goal();
        }
        let k = self.cumulative.partition_point(|&c| c <= s).saturating_sub(1).min(self.points.len() - 2);
        let seg = self.cumulative[k + 1] - self.cumulative[k];
        let f = if seg > 0.0 { (s - self.cumulative[k]) / seg } else { 0.0 };
        self.points[k].lerp(self.points[k + 1], f)
    }

    /// Nearest point over segments `lo..hi` (clamped), first minimum wins.
    pub fn project_range(&self, p: Point2, lo: usize, hi: usize) -> Projection {
        if self.points.len() == 1 {
            return Projection { s: 0.0, point: self.points[0], distance: p.distance(self.points[0]), segment: 0 };
        }
        let nseg = self.points.len() - 1;
        let hi = hi.min(nseg);
        let lo = lo.min(hi.saturating_sub(1));
        let mut best = Projection { s: f64::NAN, point: p, distance: f64::INFINITY, segment: lo };
        for k in lo..hi {
            let a = self.points[k];
            let b = self.points[k + 1];
            let ab = b.sub(a);
            let l2 = ab.dot(ab);
            let f = if l2 > 0.0 { (p.sub(a).dot(ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
            let q = a.lerp(b, f);
            let d = p.distance(q);
            if d < best.distance {
                best = Projection { s: self.cumulative[k] + f * l2.sqrt(), point: q, distance: d, segment: k };
            }
        }
        best
    }

    pub fn project(&self, p: Point2) -> Projection {
        self.project_range(p, 0, usize::MAX)
    }

    pub fn remaining(&self, s: f64) -> f64 {
        (self.length() - s).max(0.0)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on (cost, index).
        o.cost.total_cmp(&self.cost).then_with(|| o.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Neighbor order: E, N, W, S, NE, NW, SW, SE.
const NEIGHBORS: [(isize, isize, f64); 8] = [
    (1, 0, 1.0),
    (0, 1, 1.0),
    (-1, 0, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT_2),
    (-1, 1, SQRT_2),
    (-1, -1, SQRT_2),
    (1, -1, SQRT_2),
];

/// Cheapest 8-connected cell path. Diagonal moves may not cut a blocked corner.
/// Returns the cell sequence and its cost in cell units.
pub fn dijkstra_cells(costmap: &Costmap, start: (usize, usize), goal: (usize, usize)) -> Option<(Vec<(usize, usize)>, f64)> {
    let w = costmap.width;
    let n = w * costmap.height;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let s = start.1 * w + start.0;
    let g = goal.1 * w + goal.0;
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { cost: 0.0, index: s });
    while let Some(Entry { cost, index }) = heap.pop() {
        if cost > dist[index] {
            continue;
        }
        if index == g {
            break;
        }
        let (i, j) = ((index % w) as isize, (index / w) as isize);
        for &(di, dj, c) in &NEIGHBORS {
            let (ni, nj) = (i + di, j + dj);
            if costmap.is_blocked(ni, nj) {
                continue;
            }
            if di != 0 && dj != 0 && (costmap.is_blocked(i + di, j) || costmap.is_blocked(i, j + dj)) {
                continue;
            }
            let k = nj as usize * w + ni as usize;
            let nc = cost + c;
            if nc < dist[k] {
                dist[k] = nc;
                parent[k] = index;
                heap.push(Entry { cost: nc, index: k });
            }
        }
    }
    if dist[g].is_infinite() {
        return None;
    }
    let mut cells = vec![(g % w, g / w)];
    let mut k = g;
    while k != s {
        k = parent[k];
        cells.push((k % w, k / w));
    }
    cells.reverse();
    Some((cells, dist[g]))
}

/// Shortest path from `start` to `goal` as start point, cell centers, goal point.
pub fn plan_global(costmap: &Costmap, start: Point2, goal: Point2) -> Result<GlobalPath, PlanError> {
    let sc = costmap.cell_of(start).filter(|&(i, j)| !costmap.is_blocked(i as isize, j as isize));
    let sc = sc.ok_or(PlanError::StartBlocked)?;
    let gc = costmap.cell_of(goal).filter(|&(i, j)| !costmap.is_blocked(i as isize, j as isize));
    let gc = gc.ok_or(PlanError::GoalBlocked)?;
    let (cells, cost) = dijkstra_cells(costmap, sc, gc).ok_or(PlanError::NoPath)?;
    let mut pts = Vec::with_capacity(cells.len() + 2);
    pts.push(start);
    for &(i, j) in &cells {
        pts.push(costmap.cell_center(i, j));
    }
    pts.push(goal);
    pts.dedup();
    Ok(GlobalPath::from_points(pts, cost * costmap.resolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(n: usize) -> OccupancyGrid {
        OccupancyGrid::new(n, n, 1.0, Point2::default()).unwrap()
    }

    #[test]
    fn zero_radius_blocks_exactly_the_occupied_set() {
        let mut g = open(10);
        g.set(4, 4, true);
        let c = inflate(&g, 0.0);
        assert_eq!(c.blocked_cells(), g.cells());
    }

    #[test]
    fn one_cell_radius_blocks_four_neighbors() {
        let mut g = open(10);
        g.set(4, 4, true);
        let c = inflate(&g, 1.0);
        for (i, j) in [(3, 4), (5, 4), (4, 3), (4, 5)] {
            assert!(c.is_blocked(i, j));
        }
        assert!(!c.is_blocked(5, 5));
    }

    #[test]
    fn huge_radius_blocks_everything() {
        let c = inflate(&open(10), 100.0);
        assert_eq!(c.blocked_count(), 100);
    }

    #[test]
    fn straight_path_on_one_row() {
        let c = inflate(&open(10), 0.0);
        let p = plan_global(&c, Point2::new(1.5, 4.5), Point2::new(8.5, 4.5)).unwrap();
        assert!((p.length() - 7.0).abs() < 1.0);
        assert_eq!(p.start(), Point2::new(1.5, 4.5));
        assert_eq!(p.goal(), Point2::new(8.5, 4.5));
    }

    #[test]
    fn walled_goal_has_no_path() {
        let mut g = open(10);
        for k in 5..9 {
            g.set(k, 5, true);
            g.set(5, k, true);
        }
        let c = inflate(&g, 0.0);
        assert_eq!(plan_global(&c, Point2::new(1.5, 1.5), Point2::new(7.5, 7.5)), Err(PlanError::NoPath));
        assert_eq!(plan_global(&c, Point2::new(0.5, 1.5), Point2::new(2.5, 2.5)), Err(PlanError::StartBlocked));
        assert_eq!(plan_global(&c, Point2::new(1.5, 1.5), Point2::new(5.5, 5.5)), Err(PlanError::GoalBlocked));
    }

    #[test]
    fn projection_and_arc_length() {
        let p = GlobalPath::from_points(vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 1.0)], 3.0);
        assert_eq!(p.length(), 3.0);
        assert_eq!(p.point_at(2.5), Point2::new(2.0, 0.5));
        let pr = p.project(Point2::new(1.0, 0.4));
        assert!((pr.s - 1.0).abs() < 1e-12 && (pr.distance - 0.4).abs() < 1e-12);
    }
}
