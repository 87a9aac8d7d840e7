//! Cellular-automaton world generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::geometry::Point2;
use crate::global_planner::{inflate, plan_global, GLOBAL_INFLATION};
use crate::sim::grid::{OccupancyGrid, World};

#[derive(Clone, Debug, PartialEq)]
pub struct WorldGenConfig {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Probability that an interior cell starts occupied.
    pub fill_density: f64,
    pub smoothing_iterations: usize,
    /// Radius, in cells, kept free around the start and goal cells.
    pub clear_radius: usize,
    pub max_attempts: usize,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        Self {
            width: 30,
            height: 30,
            resolution: 0.15,
            fill_density: 0.3,
            smoothing_iterations: 4,
            clear_radius: 4,
            max_attempts: 200,
        }
    }
}

impl WorldGenConfig {
    pub fn start_cell(&self) -> (usize, usize) {
        (self.width / 2, 3.min(self.height - 2))
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        (self.width / 2, self.height.saturating_sub(4).max(1))
    }
}

/// Occupied interior neighbors; the fixed border does not seed growth.
fn wall_neighbors(g: &OccupancyGrid, i: usize, j: usize) -> usize {
    let mut n = 0;
    for dj in -1isize..=1 {
        for di in -1isize..=1 {
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if (di, dj) != (0, 0) && !g.is_border(ni as usize, nj as usize) && g.occupied(ni, nj) {
                n += 1;
            }
        }
    }
    n
}

/// One synchronous automaton step: wall with 5+ wall neighbors, free with 3 or fewer.
pub fn smooth(g: &OccupancyGrid) -> OccupancyGrid {
    let mut out = g.clone();
    for j in 1..g.height() - 1 {
        for i in 1..g.width() - 1 {
            let n = wall_neighbors(g, i, j);
            if n >= 5 {
                out.set(i, j, true);
            } else if n <= 3 {
                out.set(i, j, false);
            }
        }
    }
    out
}

fn clear_disc(g: &mut OccupancyGrid, (ci, cj): (usize, usize), r: usize) {
    let r2 = (r * r) as isize;
    for j in 0..g.height() {
        for i in 0..g.width() {
            let (di, dj) = (i as isize - ci as isize, j as isize - cj as isize);
            if di * di + dj * dj <= r2 {
                g.set(i, j, false);
            }
        }
    }
}

fn attempt(cfg: &WorldGenConfig, rng: &mut ChaCha8Rng) -> Result<World, SimError> {
    let mut g = OccupancyGrid::new(cfg.width, cfg.height, cfg.resolution, Point2::default())?;
    for j in 1..cfg.height - 1 {
        for i in 1..cfg.width - 1 {
            if rng.random::<f64>() < cfg.fill_density {
                g.set(i, j, true);
            }
        }
    }
    for _ in 0..cfg.smoothing_iterations {
        g = smooth(&g);
    }
    let (s, t) = (cfg.start_cell(), cfg.goal_cell());
    clear_disc(&mut g, s, cfg.clear_radius);
    clear_disc(&mut g, t, cfg.clear_radius);
    Ok(World { start: g.cell_center(s.0, s.1), goal: g.cell_center(t.0, t.1), grid: g })
}

/// Whether a footprint-inflated path joins start and goal.
pub fn is_connected(world: &World) -> bool {
    plan_global(&inflate(&world.grid, GLOBAL_INFLATION), world.start, world.goal).is_ok()
}

/// Deterministic world for `seed`; regenerates until start and goal connect.
pub fn generate_world(seed: u64, cfg: &WorldGenConfig) -> Result<World, SimError> {
    if !(0.0..=1.0).contains(&cfg.fill_density) {
        return Err(SimError::InvalidGrid(format!("fill density {} outside [0, 1]", cfg.fill_density)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.max_attempts {
        let w = attempt(cfg, &mut rng)?;
        if is_connected(&w) {
            return Ok(w);
        }
    }
    Err(SimError::Generation { attempts: cfg.max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let cfg = WorldGenConfig::default();
        assert_eq!(generate_world(7, &cfg).unwrap(), generate_world(7, &cfg).unwrap());
    }

    #[test]
    fn zero_density_leaves_only_the_border() {
        let cfg = WorldGenConfig { fill_density: 0.0, ..Default::default() };
        let w = generate_world(1, &cfg).unwrap();
        assert_eq!(w.grid.occupied_count(), 2 * 30 + 2 * 28);
    }

    #[test]
    fn full_density_fails_after_bounded_attempts() {
        let cfg = WorldGenConfig { fill_density: 1.0, clear_radius: 1, max_attempts: 3, ..Default::default() };
        assert!(matches!(generate_world(1, &cfg), Err(SimError::Generation { attempts: 3 })));
    }
}
