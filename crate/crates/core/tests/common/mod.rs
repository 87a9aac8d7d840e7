//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use learnkit::{Activation, DenseNet, Vae, VaeConfig};
use navlab::geometry::{Point2, Pose2};
use navlab::global_planner::{dijkstra_cells, inflate, plan_global, Costmap, GlobalPath, GLOBAL_INFLATION};
use navlab::local_planner::{optimize_band, seed_band, BandObjective, PlannerConfig, PlannerParams};
use navlab::sim::collision::DistanceField;
use navlab::sim::lidar::raycast;
use navlab::sim::{check_collision, generate_world, Footprint, OccupancyGrid, RobotState, World, WorldGenConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random grid with the given obstacle probability.
pub fn random_grid(rng: &mut impl Rng, w: usize, h: usize, res: f64, density: f64) -> OccupancyGrid {
    let cells = (0..w * h).map(|_| rng.random_bool(density)).collect();
    OccupancyGrid::from_cells(w, h, res, Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)), cells)
        .unwrap()
}

/// Uniform point in free space, away from the border.
pub fn random_free_point(rng: &mut impl Rng, g: &OccupancyGrid) -> Point2 {
    loop {
        let o = g.origin();
        let p = Point2::new(o.x + rng.random_range(0.0..g.world_width()), o.y + rng.random_range(0.0..g.world_height()));
        if !g.occupied_at(p) {
            return p;
        }
    }
}

/// Brute cell test by coordinates, independent of the grid's own lookup.
pub fn occupied_by_coords(g: &OccupancyGrid, p: Point2) -> bool {
    let o = g.origin();
    let i = ((p.x - o.x) / g.resolution()).floor();
    let j = ((p.y - o.y) / g.resolution()).floor();
    if i < 0.0 || j < 0.0 || i >= g.width() as f64 || j >= g.height() as f64 {
        return true;
    }
    g.cells()[j as usize * g.width() + i as usize]
}

/// Range by marching along the ray in steps of `res / 1000`.
pub fn marching_range(g: &OccupancyGrid, from: Point2, angle: f64, max_range: f64) -> f64 {
    let step = g.resolution() / 1000.0;
    let (s, c) = angle.sin_cos();
    let mut t = 0.0;
    while t < max_range {
        if occupied_by_coords(g, Point2::new(from.x + t * c, from.y + t * s)) {
            return t;
        }
        t += step;
    }
    max_range
}

/// Disc overlap by sampling 10,000 points: 2,000 on the perimeter (just
/// inside it) and 8,000 on a polar lattice filling the interior.
pub fn sampled_collision(g: &OccupancyGrid, c: Point2, r: f64) -> bool {
    let inside = r * (1.0 - 1e-9);
    for k in 0..2000 {
        let a = k as f64 / 2000.0 * std::f64::consts::TAU;
        if occupied_by_coords(g, Point2::new(c.x + inside * a.cos(), c.y + inside * a.sin())) {
            return true;
        }
    }
    for ri in 0..40 {
        let rr = inside * ri as f64 / 40.0;
        for ai in 0..200 {
            let a = ai as f64 / 200.0 * std::f64::consts::TAU;
            if occupied_by_coords(g, Point2::new(c.x + rr * a.cos(), c.y + rr * a.sin())) {
                return true;
            }
        }
    }
    false
}

/// Exact distance from `p` to the nearest occupied square, by brute force
/// over every cell.
pub fn brute_clearance(g: &OccupancyGrid, p: Point2) -> f64 {
    let o = g.origin();
    let res = g.resolution();
    let mut best = f64::INFINITY;
    for j in 0..g.height() {
        for i in 0..g.width() {
            if !g.cells()[j * g.width() + i] {
                continue;
            }
            let x0 = o.x + i as f64 * res;
            let y0 = o.y + j as f64 * res;
            let dx = (x0 - p.x).max(0.0).max(p.x - (x0 + res));
            let dy = (y0 - p.y).max(0.0).max(p.y - (y0 + res));
            best = best.min((dx * dx + dy * dy).sqrt());
        }
    }
    best
}

/// Shortest 8-connected path cost (cell units) by Bellman-Ford relaxation
/// to a fixed point. Diagonal moves need both side cells free.
pub fn bellman_ford_cost(cm: &Costmap, start: (usize, usize), goal: (usize, usize)) -> Option<f64> {
    let (w, h) = (cm.width(), cm.height());
    let free = |i: isize, j: isize| !cm.is_blocked(i, j);
    let mut d = vec![f64::INFINITY; w * h];
    d[start.1 * w + start.0] = 0.0;
    loop {
        let mut changed = false;
        for j in 0..h as isize {
            for i in 0..w as isize {
                if !free(i, j) {
                    continue;
                }
                let here = d[j as usize * w + i as usize];
                if !here.is_finite() {
                    continue;
                }
                for di in -1..=1isize {
                    for dj in -1..=1isize {
                        if (di, dj) == (0, 0) || !free(i + di, j + dj) {
                            continue;
                        }
                        if di != 0 && dj != 0 && !(free(i + di, j) && free(i, j + dj)) {
                            continue;
                        }
                        let step = if di != 0 && dj != 0 { 2f64.sqrt() } else { 1.0 };
                        let k = (j + dj) as usize * w + (i + di) as usize;
                        if here + step < d[k] - 1e-12 {
                            d[k] = here + step;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let c = d[goal.1 * w + goal.0];
    c.is_finite().then_some(c)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Vector-norm relative error of `a` against `b`.
pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-8)
}

/// Worst raycast error, in cells, against fine marching over `n` random rays.
pub fn raycast_worst_cells(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let res = rng.random_range(0.05..0.3);
        let (w, h) = (rng.random_range(5..25), rng.random_range(5..25));
        let g = random_grid(&mut rng, w, h, res, 0.2);
        let p = random_free_point(&mut rng, &g);
        let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        worst = worst.max((raycast(&g, p, a, 5.0) - marching_range(&g, p, a, 5.0)).abs() / res);
    }
    worst
}

/// For each disagreement with the sampling oracle, how far the true
/// clearance was from the radius.
pub fn collision_mismatch_margins(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..n {
        let g = random_grid(&mut rng, 12, 12, 0.15, 0.15);
        let p = random_free_point(&mut rng, &g);
        let r = rng.random_range(0.05..0.4);
        if check_collision(&g, p.x, p.y, &Footprint::new(r)) != sampled_collision(&g, p, r) {
            out.push((brute_clearance(&g, p) - r).abs());
        }
    }
    out
}

/// Dijkstra against Bellman-Ford on `n` random 15x15 grids: solved count
/// and every disagreement.
pub fn dijkstra_disagreements(n: usize, seed: u64) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut solved, mut bad) = (0, Vec::new());
    for trial in 0..n {
        let g = random_grid(&mut rng, 15, 15, 0.15, 0.25);
        let cm = inflate(&g, 0.0);
        let free: Vec<(usize, usize)> =
            (0..225).map(|k| (k % 15, k / 15)).filter(|&(i, j)| !cm.is_blocked(i as isize, j as isize)).collect();
        let s = free[rng.random_range(0..free.len())];
        let t = free[rng.random_range(0..free.len())];
        match (dijkstra_cells(&cm, s, t).map(|(_, c)| c), bellman_ford_cost(&cm, s, t)) {
            (Some(a), Some(b)) if (a - b).abs() < 1e-9 => solved += 1,
            (None, None) => {}
            other => bad.push(format!("grid {trial}: {other:?}")),
        }
    }
    (solved, bad)
}

pub struct Scene {
    pub world: World,
    pub path: GlobalPath,
    pub field: DistanceField,
}

pub fn scene(seed: u64) -> Scene {
    let world = generate_world(seed, &WorldGenConfig::default()).unwrap();
    let path = plan_global(&inflate(&world.grid, GLOBAL_INFLATION), world.start, world.goal).unwrap();
    let field = DistanceField::new(&world.grid, 0.6);
    Scene { world, path, field }
}

pub fn random_params(rng: &mut impl Rng) -> PlannerParams {
    PlannerParams::new(rng.random_range(0.2..2.0), rng.random_range(0.3..3.14), rng.random_range(10.0..100.0), rng.random_range(0.05..0.5))
}

/// A robot somewhere along the path, heading roughly along it.
pub fn robot_on_path(rng: &mut impl Rng, sc: &Scene) -> RobotState {
    let s = rng.random_range(0.0..sc.path.length() * 0.8);
    let p = sc.path.point_at(s);
    let q = sc.path.point_at(s + 0.2).sub(p);
    RobotState::at_rest(Pose2::new(p.x, p.y, q.y.atan2(q.x) + rng.random_range(-0.3..0.3)))
}

/// Relative error of the analytic band-cost gradient against central
/// differences (step 1e-6) on `count` perturbed seed bands.
pub fn band_gradient_errors(count: usize, seed: u64) -> Vec<f64> {
    let cfg = PlannerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut k = 0;
    while out.len() < count {
        let sc = scene(k % 10);
        k += 1;
        let params = random_params(&mut rng);
        let robot = robot_on_path(&mut rng, &sc);
        let band = seed_band(&sc.path, &robot, &params, &cfg);
        if band.len() < 4 {
            continue;
        }
        let windows = BandObjective::path_windows(&sc.path, &band);
        let obj = BandObjective::new(&sc.field, &sc.path, params, &cfg, &band, &windows);
        let mut pts: Vec<Point2> = band.knots.iter().map(|k| k.position()).collect();
        let n = pts.len();
        for p in pts.iter_mut().take(n - 1).skip(1) {
            *p = p.add(Point2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)));
        }
        if pts.iter().any(|p| sc.world.grid.occupied_at(*p)) {
            continue;
        }
        let dts: Vec<f64> = band.dts.iter().map(|d| d * rng.random_range(0.3..1.5)).collect();
        let (_, g) = obj.gradient(&pts, &dts);
        let h = 1e-6;
        let (mut an, mut nu) = (Vec::new(), Vec::new());
        for k in 1..n - 1 {
            for axis in 0..2 {
                let bump = |s: f64| {
                    let mut q = pts.clone();
                    if axis == 0 { q[k].x += s } else { q[k].y += s }
                    obj.cost(&q, &dts).total
                };
                nu.push((bump(h) - bump(-h)) / (2.0 * h));
                an.push(if axis == 0 { g.positions[k].x } else { g.positions[k].y });
            }
        }
        for i in 0..dts.len() {
            let bump = |s: f64| {
                let mut d = dts.clone();
                d[i] += s;
                obj.cost(&pts, &d).total
            };
            nu.push((bump(h) - bump(-h)) / (2.0 * h));
            an.push(g.dts[i]);
        }
        out.push(vec_rel_err(&an, &nu));
    }
    out
}

/// Runs `optimize_band` for 40 iterations on `count` random scenes and
/// reports every accepted step that raised the cost or moved an endpoint.
pub fn optimizer_violations(count: usize, seed: u64) -> Vec<String> {
    let cfg = PlannerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let same = |a: Pose2, b: Pose2| (a.x.to_bits(), a.y.to_bits(), a.theta.to_bits()) == (b.x.to_bits(), b.y.to_bits(), b.theta.to_bits());
    let mut bad = Vec::new();
    for k in 0..count as u64 {
        let sc = scene(k % 25);
        let params = random_params(&mut rng);
        let band = seed_band(&sc.path, &robot_on_path(&mut rng, &sc), &params, &cfg);
        if band.len() < 2 {
            continue;
        }
        let (out, cost, report) = optimize_band(&band, &sc.field, &sc.path, &params, &cfg, 40).unwrap();
        if !report.costs.windows(2).all(|w| w[1] <= w[0]) || *report.costs.last().unwrap() != cost.total {
            bad.push(format!("scene {k}: costs {:?}", report.costs));
        }
        if !same(band.knots[0], out.knots[0]) || !same(band.last(), out.last()) {
            bad.push(format!("scene {k}: endpoint moved"));
        }
    }
    bad
}

/// Worst relative error of dense-net parameter and input gradients against
/// central differences, in f64, over `trials` random nets.
pub fn dense_gradient_error(trials: usize, seed: u64) -> f64 {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [(&[usize], &[Activation]); 3] = [
        (&[4, 7, 3], &[Activation::Tanh, Activation::Linear]),
        (&[5, 6, 6, 2], &[Activation::Relu, Activation::Relu, Activation::Tanh]),
        (&[6, 8, 4, 1], &[Activation::Tanh, Activation::Relu, Activation::Linear]),
    ];
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let (sizes, acts) = shapes[trial % shapes.len()];
        let net = DenseNet::<f64>::new(sizes, acts, &mut rng).unwrap();
        let batch = 1 + trial % 3;
        let x: Vec<f64> = (0..batch * sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let w: Vec<f64> = (0..batch * sizes[sizes.len() - 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |n: &DenseNet<f64>, x: &[f64]| -> f64 { n.forward(x, batch).unwrap().iter().zip(&w).map(|(y, w)| y * w).sum() };
        let g = net.backward(&net.forward_cached(&x, batch).unwrap(), &w).unwrap();
        let num: Vec<f64> = (0..net.params().len())
            .map(|i| {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.params_mut()[i] += H;
                m.params_mut()[i] -= H;
                (f(&p, &x) - f(&m, &x)) / (2.0 * H)
            })
            .collect();
        let num_in: Vec<f64> = (0..x.len())
            .map(|i| {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += H;
                m[i] -= H;
                (f(&net, &p) - f(&net, &m)) / (2.0 * H)
            })
            .collect();
        worst = worst.max(vec_rel_err(&g.params, &num)).max(vec_rel_err(&g.input, &num_in));
    }
    worst
}

/// Worst relative error of the VAE loss gradient over both halves, for a
/// pure-reconstruction and a KL-heavy weighting.
pub fn vae_gradient_error(seed: u64) -> f64 {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for beta in [0.0, 50.0] {
        let cfg = VaeConfig { input_dim: 8, latent_dim: 3, hidden: vec![6], beta, lr: 1e-3 };
        let vae = Vae::<f64>::new(&cfg, &mut rng).unwrap();
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let eps: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let total = |v: &Vae<f64>| v.loss_and_grads(&x, 2, &eps).unwrap().0.total;
        let (_, g) = vae.loss_and_grads(&x, 2, &eps).unwrap();
        let mut enc = vec![0.0; vae.encoder.params().len()];
        for (i, e) in enc.iter_mut().enumerate() {
            let (mut p, mut m) = (vae.clone(), vae.clone());
            p.encoder.params_mut()[i] += H;
            m.encoder.params_mut()[i] -= H;
            *e = (total(&p) - total(&m)) / (2.0 * H);
        }
        let mut dec = vec![0.0; vae.decoder.params().len()];
        for (i, d) in dec.iter_mut().enumerate() {
            let (mut p, mut m) = (vae.clone(), vae.clone());
            p.decoder.params_mut()[i] += H;
            m.decoder.params_mut()[i] -= H;
            *d = (total(&p) - total(&m)) / (2.0 * H);
        }
        worst = worst.max(vec_rel_err(&g.encoder, &enc)).max(vec_rel_err(&g.decoder, &dec));
    }
    worst
}
