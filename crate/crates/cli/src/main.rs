//! `conav`: run single trials, batches, the live server, and reports.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use conav::config::RunConfig;
use conav::metrics::{summarize, TrialMetrics, TrialRecord};
use conav::modes::NavMode;
use conav::sim::{run_batch, run_trial, BatchSpec};
use conav::user::UserProfile;
use conav::world::{Scenario, ScenarioSpec, ZigzagLayout};
use conav_server::{ServerConfig, DEFAULT_SCENARIO};

#[derive(Parser)]
#[command(name = "conav", version, about = "Shared-control wheelchair navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scripted trial and write its record.
    Trial {
        /// Scenario document path, or a name looked up in --scenarios.
        #[arg(long, default_value = DEFAULT_SCENARIO)]
        scenario: String,
        #[arg(long, default_value = "scenarios")]
        scenarios: PathBuf,
        #[arg(long)]
        mode: NavMode,
        #[arg(long)]
        user: UserProfile,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        rep: u32,
        /// Run configuration supplying vehicle, MPC and user parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every (mode, seed, repetition) of a run configuration.
    Batch {
        /// Run configuration; the built-in three-mode experiment when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Serve live sessions over a websocket.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = "scenarios")]
        scenarios: PathBuf,
        /// Browser bundle to serve at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Where finished live trials are written.
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Playback speed relative to real time.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Summarize the records in a directory again.
    Report {
        /// A batch output directory or a directory of records.
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the summary CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trial {
            scenario,
            scenarios,
            mode,
            user,
            seed,
            rep,
            config,
            out,
        } => trial(&scenario, &scenarios, mode, user, seed, rep, config.as_deref(), &out),
        Command::Batch { config, out, jobs } => batch(config.as_deref(), &out, jobs),
        Command::Serve {
            addr,
            scenarios,
            ui,
            trials,
            config,
            speed,
        } => serve(addr, scenarios, ui, trials, config.as_deref(), speed),
        Command::Report { input, csv } => report(&input, csv.as_deref()),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// A path to a scenario document, a name in the scenario directory, or the
/// built-in course.
fn resolve_scenario(arg: &str, dir: &Path, cfg: &RunConfig) -> Result<Scenario> {
    let as_path = Path::new(arg);
    let candidates = [as_path.to_path_buf(), dir.join(format!("{arg}.json"))];
    let spec = match candidates.iter().find(|p| p.is_file()) {
        Some(p) => ScenarioSpec::load(p).with_context(|| format!("loading {}", p.display()))?,
        None if arg == DEFAULT_SCENARIO => ZigzagLayout::default().to_spec(2.0 * cfg.sim.inflation_radius())?,
        None => bail!("unknown scenario '{arg}' (no file {} or {})", candidates[0].display(), candidates[1].display()),
    };
    Ok(cfg.sim.build_scenario(&spec)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn record_stem(rec: &TrialRecord) -> String {
    format!("{}-{}-s{}-r{}", rec.mode, rec.profile, rec.seed, rec.repetition)
}

/// Pose and command per tick, for external plotting.
fn trajectory_csv(rec: &TrialRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "y", "theta", "v", "omega", "user_v", "user_omega", "theta_blend", "in_collision"])?;
    for s in &rec.samples {
        w.serialize((
            s.t,
            s.pose.x,
            s.pose.y,
            s.pose.theta,
            s.cmd.v,
            s.cmd.omega,
            s.user.v_norm,
            s.user.omega_norm,
            s.theta,
            s.in_collision,
        ))?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

#[allow(clippy::too_many_arguments)]
fn trial(
    scenario: &str,
    dir: &Path,
    mode: NavMode,
    user: UserProfile,
    seed: u64,
    rep: u32,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let sc = Arc::new(resolve_scenario(scenario, dir, &cfg)?);
    let rec = run_trial(sc, mode, user, seed, rep, &cfg.sim)?;
    let stem = record_stem(&rec);
    write_atomic(&out.join(format!("{stem}.json")), rec.to_json()?.as_bytes())?;
    write_atomic(&out.join(format!("{stem}.trajectory.csv")), &trajectory_csv(&rec)?)?;
    let m = TrialMetrics::of(&rec);
    println!(
        "{stem}: {:?} after {:.1} s, length {:.2} m, {} collision(s)",
        rec.end_reason,
        rec.samples.last().map_or(0.0, |s| s.t),
        m.trajectory_length.value().unwrap_or(0.0),
        m.collisions
    );
    Ok(())
}

fn batch(config: Option<&Path>, out: &Path, jobs: usize) -> Result<()> {
    let cfg = load_config(config)?;
    cfg.validate()?;
    let sc = Arc::new(cfg.build_scenario()?);
    let spec = BatchSpec {
        runs: &cfg.runs,
        seeds: &cfg.seeds,
        repetitions: cfg.repetitions,
        jobs,
    };
    let (records, summary) = run_batch(sc, &spec, &cfg.sim)?;
    let rec_dir = out.join("records");
    for rec in &records {
        write_atomic(&rec_dir.join(format!("{}.json", record_stem(rec))), rec.to_json()?.as_bytes())?;
    }
    write_atomic(&out.join("summary.csv"), summary.to_csv()?.as_bytes())?;
    let table = summary.to_table();
    write_atomic(&out.join("table.txt"), table.as_bytes())?;
    print!("{table}");
    println!("{} trials -> {}", records.len(), out.display());
    Ok(())
}

fn report(input: &Path, csv_out: Option<&Path>) -> Result<()> {
    let nested = input.join("records");
    let dir = if nested.is_dir() { nested } else { input.to_path_buf() };
    let mut records = Vec::new();
    for entry in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|x| x == "json") {
            records.push(TrialRecord::load(&path).with_context(|| format!("loading {}", path.display()))?);
        }
    }
    if records.is_empty() {
        bail!("no trial records in {}", dir.display());
    }
    let summary = summarize(&records);
    if let Some(p) = csv_out {
        write_atomic(p, summary.to_csv()?.as_bytes())?;
    }
    print!("{}", summary.to_table());
    Ok(())
}

fn serve(
    addr: SocketAddr,
    scenarios: PathBuf,
    ui: Option<PathBuf>,
    trials: Option<PathBuf>,
    config: Option<&Path>,
    speed: f64,
) -> Result<()> {
    if speed.is_nan() || speed <= 0.0 {
        bail!("--speed must be positive");
    }
    std::fs::read_dir(&scenarios).with_context(|| format!("scenario directory {}", scenarios.display()))?;
    let cfg = load_config(config)?;
    let mut server = ServerConfig::new(scenarios);
    server.tick_period = Duration::from_secs_f64(cfg.sim.params.dt / speed);
    server.sim = cfg.sim;
    server.ui_dir = ui;
    server.trials_dir = trials;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(conav_server::serve(addr, server))?;
    Ok(())
}
