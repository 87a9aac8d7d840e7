//! The `navlab` command line. [`run`] returns the process exit code; every
//! failure also prints one line of the form
//! `navlab-error code=<n> kind=<kind> msg=<text>` on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use learnkit::{Checkpoint, Vae};

use crate::error::{HarnessError, SimError};
use crate::global_planner::{inflate, plan_global, GLOBAL_INFLATION};
use crate::harness::config::{HarnessConfig, TEST_WORLD_SEED};
use crate::harness::svg::{ladder_svg, parse_trace_points, trajectory_svg};
use crate::harness::{
    alternating_train, collect_scans, comparison_table, evaluate, load_variant, parse_metrics_csv, pretrain_vae, summarize,
    write_metrics_csv, CheckpointStore, VariantSpec, PHASE_NAMES,
};
use crate::controller::write_control_trace_csv;
use crate::sim::worldfile::{parse_world, write_world};
use crate::sim::{generate_world, World};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;
pub const EXIT_CHECKPOINT: i32 = 6;
pub const EXIT_RUNTIME: i32 = 7;
pub const EXIT_IO: i32 = 8;

#[derive(Parser, Debug)]
#[command(name = "navlab", about = "Generated-world navigation with learned parameter tuning and feedback control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override applied after the file, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Phase {
    Tuner1,
    Controller,
    Tuner2,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write generated worlds as `world_<seed>.txt`.
    GenWorlds {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fit the scan VAE on a scan file or on freshly collected scans.
    PretrainVae {
        /// CSV with one normalized scan per line.
        #[arg(long, conflicts_with = "collect", required_unless_present = "collect")]
        scans: Option<PathBuf>,
        /// Collect scans by random walks in the training worlds.
        #[arg(long)]
        collect: bool,
        #[arg(long)]
        worlds: Option<PathBuf>,
        #[arg(long, default_value = "vae.ckpt")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the alternating schedule up to and including one phase.
    Train {
        #[arg(long, value_enum)]
        phase: Phase,
        /// Directory holding checkpoints, snapshots and curves.
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
        #[arg(long)]
        worlds: Option<PathBuf>,
        /// VAE checkpoint; defaults to `<out-dir>/vae.ckpt`.
        #[arg(long)]
        vae: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate variants `label:tuner:controller` (`-` for none), comma separated.
    Eval {
        #[arg(long)]
        worlds: Option<PathBuf>,
        #[arg(long)]
        variants: String,
        /// Directory the checkpoint names resolve against.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Write one control trace CSV per episode here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Draw a control trace over its world.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        svg: PathBuf,
    },
    /// Summarize a metrics CSV.
    Score {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct CliError {
    code: i32,
    kind: &'static str,
    msg: String,
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let (code, kind) = match &e {
            HarnessError::MissingCheckpoint(_) => (EXIT_MISSING, "missing_file"),
            HarnessError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => (EXIT_MISSING, "missing_file"),
            HarnessError::Io { .. } => (EXIT_IO, "io"),
            HarnessError::Config(_) | HarnessError::Variant(_) => (EXIT_CONFIG, "config"),
            HarnessError::Format(_) | HarnessError::Sim(SimError::WorldFormat { .. }) => (EXIT_FORMAT, "format"),
            HarnessError::Checkpoint { .. } => (EXIT_CHECKPOINT, "checkpoint"),
            _ => (EXIT_RUNTIME, "runtime"),
        };
        CliError { code, kind, msg: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e).into())
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, data).map_err(|e| HarnessError::io(path, e).into())
}

fn load_config(args: &ConfigArgs) -> CliResult<HarnessConfig> {
    let mut cfg = HarnessConfig::default();
    if let Some(p) = &args.config {
        cfg.apply_text(&read(p)?)?;
    }
    cfg.apply_overrides(&args.set)?;
    Ok(cfg)
}

fn load_ckpt(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint(path.display().to_string()).into());
    }
    Checkpoint::load(path).map_err(|source| HarnessError::Checkpoint { id: path.display().to_string(), source }.into())
}

/// Every `*.txt` world in `dir`, sorted by file name, keyed by file stem.
fn load_world_dir(dir: &Path) -> CliResult<Vec<(String, World)>> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let w = parse_world(&read(&p)?).map_err(|e| CliError::from(HarnessError::Format(format!("{}: {e}", p.display()))))?;
        out.push((p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), w));
    }
    if out.is_empty() {
        return Err(HarnessError::Config(format!("no world files in {}", dir.display())).into());
    }
    Ok(out)
}

fn generated(cfg: &HarnessConfig, first_seed: u64, count: usize) -> CliResult<Vec<(String, World)>> {
    (0..count as u64)
        .map(|i| {
            let s = first_seed + i;
            Ok((format!("world_{s}"), generate_world(s, &cfg.world).map_err(HarnessError::from)?))
        })
        .collect()
}

fn worlds_or_generated(dir: &Option<PathBuf>, cfg: &HarnessConfig, first_seed: u64, count: usize) -> CliResult<Vec<(String, World)>> {
    match dir {
        Some(d) => load_world_dir(d),
        None => generated(cfg, first_seed, count),
    }
}

fn parse_scans(text: &str, beams: usize) -> CliResult<Vec<Vec<f32>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Result<Vec<f32>, _> = line.split(',').map(|x| x.trim().parse::<f32>()).collect();
        match row {
            Ok(r) if r.len() == beams => out.push(r),
            _ => return Err(HarnessError::Format(format!("scan line {}: expected {beams} numbers", n + 1)).into()),
        }
    }
    Ok(out)
}

fn cmd_gen_worlds(count: usize, seed: u64, out_dir: &Path, cfg: &ConfigArgs) -> CliResult<()> {
    let cfg = load_config(cfg)?;
    for (id, w) in generated(&cfg, seed, count)? {
        write(&out_dir.join(format!("{id}.txt")), write_world(&w))?;
    }
    println!("wrote {count} worlds to {}", out_dir.display());
    Ok(())
}

fn cmd_pretrain_vae(scans: &Option<PathBuf>, worlds: &Option<PathBuf>, out: &Path, cfg: &ConfigArgs) -> CliResult<()> {
    let cfg = load_config(cfg)?;
    let vcfg = cfg.vae_config();
    let corpus = match scans {
        Some(p) => parse_scans(&read(p)?, vcfg.input_dim)?,
        None => {
            let ws: Vec<World> = worlds_or_generated(worlds, &cfg, 0, cfg.train_worlds)?.into_iter().map(|(_, w)| w).collect();
            collect_scans(&ws, cfg.vae_scans, &cfg.episode.session.sensor, cfg.seed)?
        }
    };
    let (vae, losses) = pretrain_vae(&corpus, &vcfg, cfg.vae_steps, cfg.vae_batch, cfg.seed)?;
    vae.to_checkpoint().save(out).map_err(|source| HarnessError::Checkpoint { id: out.display().to_string(), source })?;
    if let Some(l) = losses.last() {
        println!("vae: {} scans, {} steps, reconstruction {:.5}, kl {:.5}", corpus.len(), losses.len(), l.reconstruction, l.kl);
    }
    Ok(())
}

fn cmd_train(phase: Phase, out_dir: &Path, worlds: &Option<PathBuf>, vae: &Option<PathBuf>, cfg: &ConfigArgs) -> CliResult<()> {
    let cfg = load_config(cfg)?;
    let idx = match phase {
        Phase::Tuner1 => 0,
        Phase::Controller => 1,
        Phase::Tuner2 => 2,
    };
    // Earlier phases must already be finished; this command never retrains them.
    for name in &PHASE_NAMES[..idx] {
        let p = out_dir.join(format!("{name}.ckpt"));
        if !p.exists() {
            return Err(HarnessError::MissingCheckpoint(p.display().to_string()).into());
        }
    }
    let vae_path = vae.clone().unwrap_or_else(|| out_dir.join("vae.ckpt"));
    let vae = Vae::from_checkpoint(&load_ckpt(&vae_path)?)
        .map_err(|source| HarnessError::Checkpoint { id: vae_path.display().to_string(), source })?;
    let ws: Vec<World> = worlds_or_generated(worlds, &cfg, 0, cfg.train_worlds)?.into_iter().map(|(_, w)| w).collect();
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut schedule = cfg.schedule();
    schedule.phases = idx + 1;
    let out = alternating_train(&schedule, &ws, &vae, Some(out_dir))?;
    for line in &out.log {
        println!("{line}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    worlds: &Option<PathBuf>,
    variants: &str,
    checkpoints: &Option<PathBuf>,
    out: &Path,
    svg: &Option<PathBuf>,
    trace_dir: &Option<PathBuf>,
    cfg: &ConfigArgs,
) -> CliResult<()> {
    let cfg = load_config(cfg)?;
    let mut store = CheckpointStore::default();
    store.dir = checkpoints.clone();
    let mut loaded = Vec::new();
    for s in variants.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        loaded.push(load_variant(&VariantSpec::parse(s)?, &store)?);
    }
    let ws = worlds_or_generated(worlds, &cfg, TEST_WORLD_SEED, cfg.test_worlds)?;
    let mut ecfg = cfg.episode;
    ecfg.record_trace = trace_dir.is_some();
    let report = evaluate(&ws, &loaded, &cfg.eval_seeds, &ecfg);
    let mut csv = Vec::new();
    write_metrics_csv(&report.metric_rows(), &mut csv).map_err(|e| HarnessError::io(out, e))?;
    write(out, csv)?;
    if let Some(p) = svg {
        write(p, ladder_svg(&report.summaries))?;
    }
    if let Some(dir) = trace_dir {
        for r in report.rows.iter() {
            if let Ok(Some(t)) = r.result.as_ref().map(|e| e.trace.as_ref()) {
                let mut buf = Vec::new();
                let p = dir.join(format!("{}_{}_{}.csv", r.world, r.variant, r.seed));
                write_control_trace_csv(&t.steps, &mut buf).map_err(|e| HarnessError::io(&p, e))?;
                write(&p, buf)?;
            }
        }
    }
    for r in report.rows.iter() {
        if let Err(e) = &r.result {
            eprintln!("episode {} {} {}: {e}", r.world, r.variant, r.seed);
        }
    }
    print!("{}", comparison_table(&report.summaries));
    Ok(())
}

fn cmd_replay(trace: &Path, world: &Path, svg: &Path) -> CliResult<()> {
    let w = parse_world(&read(world)?).map_err(|e| CliError::from(HarnessError::Format(format!("{}: {e}", world.display()))))?;
    let pts = parse_trace_points(&read(trace)?)?;
    let path = plan_global(&inflate(&w.grid, GLOBAL_INFLATION), w.start, w.goal)
        .map(|p| p.points().to_vec())
        .unwrap_or_default();
    write(svg, trajectory_svg(&w.grid, &path, &pts, w.start, w.goal))
}

fn cmd_score(results: &Path, svg: &Option<PathBuf>) -> CliResult<()> {
    let summaries = summarize(&parse_metrics_csv(&read(results)?)?);
    if let Some(p) = svg {
        write(p, ladder_svg(&summaries))?;
    }
    print!("{}", comparison_table(&summaries));
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match &cli.cmd {
        Cmd::GenWorlds { count, seed, out_dir, cfg } => cmd_gen_worlds(*count, *seed, out_dir, cfg),
        Cmd::PretrainVae { scans, worlds, out, cfg, .. } => cmd_pretrain_vae(scans, worlds, out, cfg),
        Cmd::Train { phase, out_dir, worlds, vae, cfg } => cmd_train(*phase, out_dir, worlds, vae, cfg),
        Cmd::Eval { worlds, variants, checkpoints, out, svg, trace_dir, cfg } => {
            cmd_eval(worlds, variants, checkpoints, out, svg, trace_dir, cfg)
        }
        Cmd::Replay { trace, world, svg } => cmd_replay(trace, world, svg),
        Cmd::Score { results, svg } => cmd_score(results, svg),
    }
}

fn report(e: &CliError) {
    eprintln!("navlab-error code={} kind={} msg={}", e.code, e.kind, e.msg.replace('\n', " "));
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            let kind = match e.kind() {
                ErrorKind::UnknownArgument => "unknown_flag",
                _ => "usage",
            };
            let first = e.to_string().lines().next().unwrap_or("").to_string();
            report(&CliError { code: EXIT_USAGE, kind, msg: first });
            return EXIT_USAGE;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            e.code
        }
    }
}
