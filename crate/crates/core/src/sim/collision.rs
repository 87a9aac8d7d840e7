use crate::geometry::Point2;
use crate::sim::grid::OccupancyGrid;

pub const DEFAULT_FOOTPRINT_RADIUS: f64 = 0.21;

/// Circular robot approximation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub radius: f64,
}

impl Footprint {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite(), "footprint radius must be positive");
        Self { radius }
    }
}

impl Default for Footprint {
    fn default() -> Self {
        Self { radius: DEFAULT_FOOTPRINT_RADIUS }
    }
}

/// Closest point of the closed square cell `(i, j)` to `p`.
#[inline]
fn closest_in_cell(grid: &OccupancyGrid, i: isize, j: isize, p: Point2) -> Point2 {
    let r = grid.resolution();
    let o = grid.origin();
    let x0 = o.x + i as f64 * r;
    let y0 = o.y + j as f64 * r;
    Point2::new(p.x.clamp(x0, x0 + r), p.y.clamp(y0, y0 + r))
}

fn cell_window(grid: &OccupancyGrid, p: Point2, reach: f64) -> (isize, isize, isize, isize) {
    let (gx, gy) = grid.to_grid(p);
    let rc = reach / grid.resolution();
    let i0 = (gx - rc).floor() as isize;
    let i1 = (gx + rc).floor() as isize;
    let j0 = (gy - rc).floor() as isize;
    let j1 = (gy + rc).floor() as isize;
    // One ring of out-of-range cells is enough: they all read as occupied.
    let w = grid.width() as isize;
    let h = grid.height() as isize;
    (i0.max(-1), i1.min(w), j0.max(-1), j1.min(h))
}

/// True iff an occupied cell (or the outside of the raster) intersects the
/// open disc of `fp.radius` around `(x, y)`.
pub fn check_collision(grid: &OccupancyGrid, x: f64, y: f64, fp: &Footprint) -> bool {
    let p = Point2::new(x, y);
    if !p.is_finite() {
        return true;
    }
    let r2 = fp.radius * fp.radius;
    let (i0, i1, j0, j1) = cell_window(grid, p, fp.radius);
    for j in j0..=j1 {
        for i in i0..=i1 {
            if grid.occupied(i, j) {
                let q = closest_in_cell(grid, i, j, p);
                let d = p.sub(q);
                if d.dot(d) < r2 {
                    return true;
                }
            }
        }
    }
    false
}

/// Distance from `p` to the nearest occupied cell, searched within `cutoff`,
/// together with its gradient with respect to `p`. Points inside an occupied
/// cell report `(0, 0)`; nothing within `cutoff` reports `(cutoff, 0)`.
pub fn obstacle_distance(grid: &OccupancyGrid, p: Point2, cutoff: f64) -> (f64, Point2) {
    let (i0, i1, j0, j1) = cell_window(grid, p, cutoff);
    let mut best = cutoff * cutoff;
    let mut best_q = None;
    for j in j0..=j1 {
        for i in i0..=i1 {
            if grid.occupied(i, j) {
                let q = closest_in_cell(grid, i, j, p);
                let d = p.sub(q);
                let d2 = d.dot(d);
                if d2 < best {
                    best = d2;
                    best_q = Some(q);
                }
            }
        }
    }
    match best_q {
        None => (cutoff, Point2::default()),
        Some(_) if best == 0.0 => (0.0, Point2::default()),
        Some(q) => {
            let d = best.sqrt();
            (d, p.sub(q).scale(1.0 / d))
        }
    }
}

/// Precomputed nearest-obstacle lookup. For every cell it keeps the occupied
/// boundary cells that can be nearest to some point of that cell within
/// `reach`, so queries return exactly what [`obstacle_distance`] returns for
/// any cutoff up to `reach`.
#[derive(Clone, Debug)]
pub struct DistanceField {
    grid: OccupancyGrid,
    reach: f64,
    offsets: Vec<u32>,
    candidates: Vec<(i32, i32)>,
}

fn square_gap(a: (isize, isize), b: (isize, isize)) -> (f64, f64) {
    // Min and max distance, in cells, between points of two unit squares.
    let dx = (a.0 - b.0).abs() as f64;
    let dy = (a.1 - b.1).abs() as f64;
    let lo = ((dx - 1.0).max(0.0)).hypot((dy - 1.0).max(0.0));
    let hi = (dx + 1.0).hypot(dy + 1.0);
    (lo, hi)
}

impl DistanceField {
    pub fn new(grid: &OccupancyGrid, reach: f64) -> Self {
        let (w, h) = (grid.width() as isize, grid.height() as isize);
        let r = reach / grid.resolution();
        let rc = r.ceil() as isize + 1;
        // Only occupied cells with a free 4-neighbor can hold a nearest point.
        let is_edge = |i: isize, j: isize| {
            grid.occupied(i, j)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dj)| {
                    let (ni, nj) = (i + di, j + dj);
                    ni >= 0 && nj >= 0 && ni < w && nj < h && !grid.occupied(ni, nj)
                })
        };
        let mut offsets = Vec::with_capacity((w * h) as usize + 1);
        let mut candidates = Vec::new();
        let mut local = Vec::new();
        offsets.push(0);
        for j in 0..h {
            for i in 0..w {
                local.clear();
                let mut bound = f64::INFINITY;
                for cj in (j - rc).max(0)..=(j + rc).min(h - 1) {
                    for ci in (i - rc).max(0)..=(i + rc).min(w - 1) {
                        if is_edge(ci, cj) {
                            let (lo, hi) = square_gap((i, j), (ci, cj));
                            if lo <= r {
                                local.push(((ci, cj), lo));
                                bound = bound.min(hi);
                            }
                        }
                    }
                }
                candidates.extend(local.iter().filter(|c| c.1 <= bound).map(|c| (c.0 .0 as i32, c.0 .1 as i32)));
                offsets.push(candidates.len() as u32);
            }
        }
        Self { grid: grid.clone(), reach, offsets, candidates }
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    /// Same contract as [`obstacle_distance`]; falls back to it outside the
    /// raster or when `cutoff` exceeds `reach`.
    pub fn distance(&self, p: Point2, cutoff: f64) -> (f64, Point2) {
        let g = &self.grid;
        let cell = match g.cell_of(p) {
            Some(c) if cutoff <= self.reach => c,
            _ => return obstacle_distance(g, p, cutoff),
        };
        if g.occupied(cell.0 as isize, cell.1 as isize) {
            return (0.0, Point2::default());
        }
        let k = g.index(cell.0, cell.1);
        let mut best = cutoff * cutoff;
        let mut best_q = None;
        for &(ci, cj) in &self.candidates[self.offsets[k] as usize..self.offsets[k + 1] as usize] {
            let q = closest_in_cell(g, ci as isize, cj as isize, p);
            let d = p.sub(q);
            let d2 = d.dot(d);
            if d2 < best {
                best = d2;
                best_q = Some(q);
            }
        }
        match best_q {
            None => (cutoff, Point2::default()),
            Some(q) => {
                let d = best.sqrt();
                (d, p.sub(q).scale(1.0 / d))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(n: usize) -> OccupancyGrid {
        OccupancyGrid::new(n, n, 0.1, Point2::default()).unwrap()
    }

    #[test]
    fn free_center_does_not_collide() {
        let g = open(20);
        assert!(!check_collision(&g, 1.0, 1.0, &Footprint::default()));
    }

    #[test]
    fn occupied_cell_center_collides() {
        let mut g = open(20);
        g.set(10, 10, true);
        let c = g.cell_center(10, 10);
        assert!(check_collision(&g, c.x, c.y, &Footprint::new(0.01)));
    }

    #[test]
    fn corner_overlap_by_a_millimetre() {
        let mut g = open(20);
        g.set(10, 10, true);
        // Corner of cell (10, 10) sits at (1.0, 1.0).
        let r = 0.2;
        let off = (r - 0.001) / 2f64.sqrt();
        assert!(check_collision(&g, 1.0 - off, 1.0 - off, &Footprint::new(r)));
        let off = (r + 0.001) / 2f64.sqrt();
        assert!(!check_collision(&g, 1.0 - off, 1.0 - off, &Footprint::new(r)));
    }

    #[test]
    fn distance_and_gradient_to_a_wall() {
        let g = open(20);
        let (d, gr) = obstacle_distance(&g, Point2::new(0.35, 1.0), 1.0);
        assert!((d - 0.25).abs() < 1e-12);
        assert!((gr.x - 1.0).abs() < 1e-12 && gr.y.abs() < 1e-12);
        let (d, gr) = obstacle_distance(&g, Point2::new(0.05, 1.0), 1.0);
        assert_eq!((d, gr), (0.0, Point2::default()));
        let (d, _) = obstacle_distance(&g, Point2::new(1.0, 1.0), 0.3);
        assert_eq!(d, 0.3);
    }

    #[test]
    fn distance_field_matches_window_search() {
        use rand::{Rng, SeedableRng};
        let w = crate::sim::worldgen::generate_world(5, &Default::default()).unwrap();
        let f = DistanceField::new(&w.grid, 0.6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let p = Point2::new(rng.random_range(-0.2..4.7), rng.random_range(-0.2..4.7));
            let c = rng.random_range(0.05..0.6);
            assert_eq!(f.distance(p, c), obstacle_distance(&w.grid, p, c), "{p:?} {c}");
        }
    }
}
