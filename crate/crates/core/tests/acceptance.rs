//! End-to-end acceptance checks, one test per criterion. Each prints a
//! `criterion N: PASS|FAIL` line (written past the test harness capture) and
//! then asserts. Criteria 5 to 9 share one trained pipeline.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use learnkit::{Adam, AdamConfig, Checkpoint, Vae, VaeConfig};
use navlab::controller::{
    controller_reward, domain_disturbance, run_control_episode, Actuator, ControlContext, ControlMode, ControllerConfig,
    ControllerRewardConfig, DisturbanceConfig, EPISODE_STEPS,
};
use navlab::geometry::Pose2;
use navlab::harness::config::TEST_WORLD_SEED;
use navlab::harness::*;
use navlab::sim::{generate_world, RobotState, SensorConfig, VelocityCommand, World, WorldGenConfig};
use navlab::tuner::{tuner_reward, NavSession, NavStatus, SessionConfig, TunerRewardConfig, TuningRate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRAIN_WORLDS: u64 = 100;
const LADDER_WORLDS: u64 = 50;
const CONTROL_WORLDS: u64 = 20;
const SEEDS: [u64; 3] = [0, 1, 2];

const TUNER_TICKS: u64 = 20_000;
const CONTROLLER_TICKS: u64 = 30_000;

const TRACKING_REDUCTION: f64 = 0.20;
const LADDER_GAIN: f64 = 0.10;

fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n}: {detail}");
}

fn train_worlds() -> Vec<World> {
    (0..TRAIN_WORLDS).map(|s| generate_world(s, &WorldGenConfig::default()).unwrap()).collect()
}

fn held_out(n: u64) -> Vec<(String, World)> {
    (0..n)
        .map(|i| {
            let s = TEST_WORLD_SEED + i;
            (format!("world_{s}"), generate_world(s, &WorldGenConfig::default()).unwrap())
        })
        .collect()
}

fn tuner_td3() -> Td3Settings {
    let mut t = Td3Settings::tuner_default();
    t.hidden = vec![64, 64];
    t.batch_size = 64;
    t.warmup_steps = 300;
    t
}

fn controller_td3() -> Td3Settings {
    let mut t = Td3Settings::controller_default();
    t.hidden = vec![64, 64];
    t.batch_size = 64;
    t
}

struct Pipeline {
    pt1: Checkpoint,
    rc1: Checkpoint,
    pt2: Checkpoint,
    full: Checkpoint,
    pt10: Checkpoint,
    ladder: EvalReport,
    control: EvalReport,
    rates: EvalReport,
}

fn tuner(ck: &Checkpoint) -> TunerPolicy {
    TunerPolicy::from_checkpoint(ck).unwrap()
}

fn controller(ck: &Checkpoint) -> ControllerPolicy {
    ControllerPolicy::from_checkpoint(ck).unwrap()
}

fn ladder_variants(pt1: &Checkpoint, rc1: &Checkpoint, pt2: &Checkpoint) -> Vec<LoadedVariant> {
    vec![
        LoadedVariant::feedforward("TEB+FC", None),
        LoadedVariant::feedforward("PT+FC", Some(tuner(pt1))),
        LoadedVariant { label: "PT+RC".into(), tuner: Some(tuner(pt1)), controller: Some(controller(rc1)) },
        LoadedVariant { label: "2PT+RC".into(), tuner: Some(tuner(pt2)), controller: Some(controller(rc1)) },
    ]
}

fn log(msg: &str) {
    let _ = std::io::stdout().lock().write_all(format!("  [pipeline] {msg}\n").as_bytes());
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let ws = train_worlds();
        let t = Instant::now();
        let sensor = SensorConfig::default();
        let scans = collect_scans(&ws, 3000, &sensor, 1).unwrap();
        let vcfg = VaeConfig { hidden: vec![128, 64], ..VaeConfig::default() };
        let (vae, _) = pretrain_vae(&scans, &vcfg, 1500, 64, 2).unwrap();
        log(&format!("vae {:.0}s", t.elapsed().as_secs_f64()));

        let t = Instant::now();
        let schedule = Schedule {
            tuner: PhaseConfig::new(7, TUNER_TICKS, tuner_td3()),
            controller: PhaseConfig::new(9, CONTROLLER_TICKS, controller_td3()),
            rate: TuningRate::OneHz,
            mode: ControlMode::Feedback,
            phases: 3,
        };
        let out = alternating_train(&schedule, &ws, &vae, None).unwrap();
        for l in &out.log {
            log(l);
        }
        log(&format!("alternating schedule {:.0}s", t.elapsed().as_secs_f64()));
        let (pt1, rc1, pt2) = (out.pt1.unwrap(), out.rc1.unwrap(), out.pt2.unwrap());

        let t = Instant::now();
        let full_run =
            train_controller(&schedule.controller, &ws, &tuner(&pt1), ControlMode::FullVelocity, Start::Fresh, |_| Ok(())).unwrap();
        let full = controller_checkpoint(full_run.agent(), ControlMode::FullVelocity, 2, "pt1");
        log(&format!("full-velocity ablation {:.0}s", t.elapsed().as_secs_f64()));

        let t = Instant::now();
        let ten = train_tuner(&schedule.tuner, &ws, &vae, TuningRate::TenHz, None, Start::Fresh, |_| Ok(())).unwrap();
        let pt10 = tuner_checkpoint(ten.agent(), &vae, TuningRate::TenHz, 1, "FC");
        log(&format!("10 Hz tuner {:.0}s ({} ticks)", t.elapsed().as_secs_f64(), ten.state.ticks));

        let cfg = EpisodeConfig::default();
        let t = Instant::now();
        let ladder = evaluate(&held_out(LADDER_WORLDS), &ladder_variants(&pt1, &rc1, &pt2), &SEEDS, &cfg);
        log(&format!("ladder eval {:.0}s\n{}", t.elapsed().as_secs_f64(), comparison_table(&ladder.summaries)));

        let t = Instant::now();
        let variants = [
            LoadedVariant::feedforward("PT+FC", Some(tuner(&pt1))),
            LoadedVariant { label: "PT+RC".into(), tuner: Some(tuner(&pt1)), controller: Some(controller(&rc1)) },
            LoadedVariant { label: "PT+RC-full".into(), tuner: Some(tuner(&pt1)), controller: Some(controller(&full)) },
        ];
        let control = evaluate(&held_out(CONTROL_WORLDS), &variants, &SEEDS, &cfg);
        log(&format!("controller eval {:.0}s\n{}", t.elapsed().as_secs_f64(), comparison_table(&control.summaries)));

        let t = Instant::now();
        let variants = [LoadedVariant::feedforward("PT-1Hz", Some(tuner(&pt1))), LoadedVariant::feedforward("PT-10Hz", Some(tuner(&pt10)))];
        let rates = evaluate(&held_out(LADDER_WORLDS), &variants, &SEEDS, &cfg);
        log(&format!("rate eval {:.0}s\n{}", t.elapsed().as_secs_f64(), comparison_table(&rates.summaries)));
        Pipeline { pt1, rc1, pt2, full, pt10, ladder, control, rates }
    })
}

fn summary<'a>(r: &'a EvalReport, label: &str) -> &'a ScoreReport {
    r.summaries.iter().find(|s| s.variant == label).unwrap()
}

fn mean_return(r: &EvalReport, label: &str) -> f64 {
    let v: Vec<f64> = r.rows.iter().filter(|x| x.variant == label).filter_map(|x| x.result.as_ref().ok()).map(|e| e.episode_return).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_1_oracle_equivalence() {
    let t = Instant::now();
    let ray = raycast_worst_cells(1000, 101);
    let (solved, bad) = dijkstra_disagreements(50, 102);
    let coll = collision_mismatch_margins(1000, 103);
    let secs = t.elapsed().as_secs_f64();
    let ok = ray <= std::f64::consts::SQRT_2 / 2.0 && bad.is_empty() && solved > 10 && coll.iter().all(|&m| m < 1e-4) && secs < 60.0;
    verdict(
        1,
        ok,
        &format!("raycast worst {ray:.3} cells; dijkstra {solved} solved, {} disagree; collision {} near-boundary misses; {secs:.1}s", bad.len(), coll.len()),
    );
}

#[test]
fn criterion_2_numerical_correctness() {
    let t = Instant::now();
    let net = dense_gradient_error(20, 201);
    let vae = vae_gradient_error(202);
    let band = band_gradient_errors(100, 203).into_iter().fold(0.0, f64::max);
    let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
    let adam_err = [0.5, -2.0, 1e-2]
        .iter()
        .map(|&g: &f64| {
            let mut a = Adam::<f64>::new(cfg, 1);
            let mut p = [1.0];
            a.step(&mut p, &[g]).unwrap();
            ((1.0 - p[0]) - cfg.lr * g / (g.abs() + cfg.eps)).abs()
        })
        .fold(0.0, f64::max);
    let opt = optimizer_violations(100, 204);
    let secs = t.elapsed().as_secs_f64();
    let ok = net <= 1e-4 && vae <= 1e-4 && band <= 1e-5 && adam_err <= 1e-15 && opt.is_empty() && secs < 300.0;
    verdict(
        2,
        ok,
        &format!("net {net:.1e}, vae {vae:.1e}, band {band:.1e} rel err; adam step err {adam_err:.1e}; {} cost increases; {secs:.1}s", opt.len()),
    );
}

#[test]
fn criterion_3_reward_fidelity() {
    let tc = TunerRewardConfig::default();
    let rc = ControllerRewardConfig::default();
    let p = Pose2::new(1.0, -0.5, 0.3);
    let off = Pose2::new(1.03, -0.54, 0.3);
    let checks = [
        ("arrival", tuner_reward(3.0, 2.0, true, false, &tc), 20.0),
        ("step penalty", tuner_reward(1.5, 1.5, false, false, &tc), -1.0),
        ("progress and collision", tuner_reward(2.0, 1.7, false, true, &tc), 0.3 - 20.0 - 1.0),
        ("zero pose error", controller_reward(&p, &p, false, &rc), 0.0),
        ("0.05 m error", controller_reward(&off, &p, false, &rc), -0.5),
        ("collision at zero error", controller_reward(&p, &p, true, &rc), -20.0),
    ];
    let bad: Vec<String> = checks.iter().filter(|c| (c.1 - c.2).abs() > 1e-12).map(|c| format!("{} gave {} not {}", c.0, c.1, c.2)).collect();
    verdict(3, bad.is_empty(), &format!("{} reward cases; {bad:?}", checks.len()));
}

#[test]
fn criterion_4_frequency_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut bad = Vec::new();
    let mut full_steps = 0;
    for w in 0..6u64 {
        let world = generate_world(w, &WorldGenConfig::default()).unwrap();
        let act = domain_disturbance(&DisturbanceConfig::default(), &mut rng);
        let mut s = NavSession::new(&world, SessionConfig { timeout: 10.0, ..SessionConfig::default() }, act).unwrap();
        while s.status() == NavStatus::Running {
            let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (t0, p0, c0) = (s.time(), s.plans(), s.control_steps());
            let o = s.tuner_step(&a, None, |_| {}).unwrap();
            let (dp, dc) = (s.plans() - p0, s.control_steps() - c0);
            if s.status() == NavStatus::Running {
                full_steps += 1;
                if (o.plans, dp, dc) != (10, 10, 50) || (s.time() - t0 - 1.0).abs() > 1e-9 {
                    bad.push(format!("world {w}: {dp} plans, {dc} control steps in {:.3}s", s.time() - t0));
                }
            }
        }
        let (t, p, c) = (s.tuner_steps(), s.plans(), s.control_steps());
        if p > 10 * t || c > 50 * t || c > 5 * p {
            bad.push(format!("world {w}: totals {t}:{p}:{c}"));
        }
    }
    let open = navlab::sim::OccupancyGrid::new(80, 80, 0.1, Default::default()).unwrap();
    let sensor = SensorConfig::default();
    let cfg = ControllerConfig::default();
    let knots = (0..6).map(|k| Pose2::new(2.0 + 0.08 * k as f64, 4.0, 0.0)).collect();
    let traj = navlab::local_planner::TimedTrajectory::new(knots, vec![0.1; 5], 0.0);
    let ctx = ControlContext { grid: &open, sensor: &sensor, cfg: &cfg, goal: None, record: true };
    let ep = run_control_episode(&ctx, &traj, 0.0, RobotState::at_rest(traj.knots[0]), &mut Actuator::ideal(), VelocityCommand::ZERO, None)
        .unwrap();
    let times: Vec<f64> = ep.steps.iter().map(|s| s.t).collect();
    let spaced = times.iter().enumerate().all(|(k, t)| (t - 0.02 * (k + 1) as f64).abs() < 1e-12);
    let done: Vec<bool> = ep.transitions.iter().map(|t| t.done).collect();
    let episode_ok = ep.steps.len() == EPISODE_STEPS && spaced && done == [false, false, false, false, true];
    verdict(
        4,
        bad.is_empty() && full_steps > 20 && episode_ok,
        &format!("{full_steps} full tuner steps at 1:10:50, {} violations; control episode {} steps over {:.2}s", bad.len(), ep.steps.len(), times.last().unwrap()),
    );
}

#[test]
fn criterion_5_controller_efficacy() {
    let p = pipeline();
    let (fc, rc, full) = (summary(&p.control, "PT+FC"), summary(&p.control, "PT+RC"), summary(&p.control, "PT+RC-full"));
    let reduction = 1.0 - rc.mean_tracking_error / fc.mean_tracking_error;
    let ok = reduction >= TRACKING_REDUCTION && rc.success_rate > full.success_rate;
    verdict(
        5,
        ok,
        &format!(
            "tracking FC {:.4} m, RC {:.4} m (-{:.1}%, need {:.0}%); success RC {:.1}% vs full-velocity {:.1}%",
            fc.mean_tracking_error,
            rc.mean_tracking_error,
            100.0 * reduction,
            100.0 * TRACKING_REDUCTION,
            100.0 * rc.success_rate,
            100.0 * full.success_rate
        ),
    );
}

#[test]
fn criterion_6_ladder_ordering() {
    let p = pipeline();
    let rungs: Vec<&ScoreReport> = ["TEB+FC", "PT+FC", "PT+RC", "2PT+RC"].iter().map(|l| summary(&p.ladder, l)).collect();
    let s: Vec<f64> = rungs.iter().map(|r| r.success_rate).collect();
    let t: Vec<f64> = rungs.iter().map(|r| r.mean_completion_time.unwrap_or(f64::INFINITY)).collect();
    let order = s[0] < s[1] && s[1] <= s[2] && s[2] <= s[3];
    let gain = s[3] - s[0] >= LADDER_GAIN;
    let faster = t.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64], k: f64| v.iter().map(|x| format!("{:.1}", x * k)).collect::<Vec<_>>().join(" / ");
    verdict(
        6,
        order && gain && faster,
        &format!("success {} %; time {} s; order {order}, +10 points {gain}, time decreasing {faster}", fmt(&s, 100.0), fmt(&t, 1.0)),
    );
}

#[test]
fn criterion_7_one_hz_beats_ten_hz() {
    let p = pipeline();
    let (one, ten) = (mean_return(&p.rates, "PT-1Hz"), mean_return(&p.rates, "PT-10Hz"));
    verdict(7, one > ten, &format!("mean evaluated return 1 Hz {one:.2} vs 10 Hz {ten:.2} after {TUNER_TICKS} planning ticks each"));
}

#[test]
fn criterion_8_barn_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(801);
    let mut bad = 0;
    for _ in 0..100_000 {
        let ot = rng.random_range(0.01..50.0);
        let at = if rng.random_bool(0.2) { rng.random_range(0.0..=2.0) * ot } else { rng.random_range(0.0..500.0) };
        let success = rng.random_bool(0.7);
        let b = barn_score(success, at, ot);
        let max = success && at <= 2.0 * ot;
        if !(0.0..=0.5).contains(&b) || (b == 0.5) != max {
            bad += 1;
        }
    }
    let p = pipeline();
    let m: Vec<f64> = ["TEB+FC", "PT+FC", "PT+RC", "2PT+RC"].iter().map(|l| summary(&p.ladder, l).mean_barn_score).collect();
    let rising = m.windows(2).all(|w| w[1] > w[0]);
    let shown = m.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" / ");
    verdict(8, bad == 0 && rising, &format!("{bad} fuzz violations in 100000; ladder mean score {shown}"));
}

fn tiny_schedule(stop: Option<u64>) -> Schedule {
    let mut td3 = Td3Settings::tuner_default();
    td3.hidden = vec![16, 16];
    td3.batch_size = 16;
    td3.warmup_steps = 20;
    td3.replay_capacity = 5000;
    let mut tuner = PhaseConfig::new(3, 60, td3.clone());
    tuner.snapshot_every = 1;
    let mut controller = PhaseConfig::new(4, 400, td3);
    controller.snapshot_every = 1;
    controller.stop_after_episodes = stop;
    Schedule { tuner, controller, rate: TuningRate::OneHz, mode: ControlMode::Feedback, phases: 3 }
}

#[test]
fn criterion_9_determinism_and_persistence() {
    let p = pipeline();
    let subset = held_out(5);
    let csv = |r: &EvalReport| {
        let mut buf = Vec::new();
        write_metrics_csv(&r.metric_rows(), &mut buf).unwrap();
        buf
    };
    let cfg = EpisodeConfig::default();
    let a = csv(&evaluate(&subset, &ladder_variants(&p.pt1, &p.rc1, &p.pt2), &SEEDS, &cfg));
    let b = csv(&evaluate(&subset, &ladder_variants(&p.pt1, &p.rc1, &p.pt2), &SEEDS, &cfg));
    let full = String::from_utf8(csv(&p.ladder)).unwrap();
    let ids: Vec<&str> = subset.iter().map(|(id, _)| id.as_str()).collect();
    let from_ladder: Vec<&str> =
        full.lines().enumerate().filter(|(i, l)| *i == 0 || ids.contains(&l.split(',').next().unwrap())).map(|(_, l)| l).collect();
    let csv_ok = a == b && String::from_utf8(a.clone()).unwrap().lines().collect::<Vec<_>>() == from_ladder;

    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let mut round_ok = true;
    for ck in [&p.pt1, &p.rc1, &p.pt2, &p.full, &p.pt10] {
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        round_ok &= back.to_bytes() == ck.to_bytes();
        if ck.meta("role") == Some("controller") {
            let (x, y) = (controller(ck), controller(&back));
            let s: Vec<f32> = (0..x.actor.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            round_ok &= x.act(&s).map(f64::to_bits) == y.act(&s).map(f64::to_bits);
        } else {
            let (x, y) = (tuner(ck), tuner(&back));
            let scan: Vec<f32> = (0..x.vae.input_dim()).map(|_| rng.random_range(0.0..1.0)).collect();
            let (zx, zy) = (x.vae.encode(&scan, 1).unwrap(), y.vae.encode(&scan, 1).unwrap());
            round_ok &= zx.iter().map(|v| v.to_bits()).eq(zy.iter().map(|v| v.to_bits()));
            let s: Vec<f32> = (0..x.actor.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            round_ok &= x.act_on(&s).map(f64::to_bits) == y.act_on(&s).map(f64::to_bits);
        }
    }

    let ws: Vec<World> = (0..4).map(|s| generate_world(s, &WorldGenConfig::default()).unwrap()).collect();
    let vae = Vae::new(&VaeConfig { hidden: vec![32], latent_dim: 8, ..VaeConfig::default() }, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let (d0, d1) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let straight = alternating_train(&tiny_schedule(None), &ws, &vae, Some(d0.path())).unwrap();
    let part = alternating_train(&tiny_schedule(Some(1)), &ws, &vae, Some(d1.path())).unwrap();
    let resumed = alternating_train(&tiny_schedule(None), &ws, &vae, Some(d1.path())).unwrap();
    let interrupted = part.rc1.is_none() && resumed.log.iter().any(|l| l.contains("resumed"));
    let same = [(&straight.pt1, &resumed.pt1), (&straight.rc1, &resumed.rc1), (&straight.pt2, &resumed.pt2)]
        .iter()
        .all(|(x, y)| x.as_ref().unwrap().to_bytes() == y.as_ref().unwrap().to_bytes());
    verdict(
        9,
        csv_ok && round_ok && interrupted && same,
        &format!("metrics CSV repeat {csv_ok}; checkpoint round trips bit-exact {round_ok}; interrupted run resumed {interrupted} and matched {same}"),
    );
}
