use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use iscsc_core::error::{HarnessError, PlanError};
use iscsc_core::harness::experiment::summarize_records;
use iscsc_core::harness::{emit_report, read_csv, Method, ResultRow, ScenarioConfig, Simulation, Sweep};

#[derive(Parser)]
#[command(name = "iscsc", version, about = "Near-field ISAC, semantic communication and DT planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario configuration (TOML); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of timeslots; overrides the configuration.
    #[arg(long)]
    slots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write every slot record.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "hh", value_parser = parse_method)]
        method: Method,
    },
    /// Run figure-style sweeps over several seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Methods compared in the vehicle sweep; all when omitted.
        #[arg(long, value_parser = parse_method)]
        method: Vec<Method>,
        #[arg(long, value_enum, default_value = "all")]
        sweep: SweepKind,
        /// Number of consecutive seeds starting at the base seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Vehicle counts for the vehicle and tracking sweeps.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 6, 8])]
        vehicles: Vec<usize>,
    },
    /// Compare PF, EKF and UKF on shared measurements.
    TrackBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 6, 8])]
        vehicles: Vec<usize>,
    },
    /// Re-aggregate a saved results.csv into summary.json.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    All,
    Vehicles,
    Latency,
    CpuPower,
    Tracking,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(slots) = common.slots {
        cfg.slots = slots;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_config(cfg: &ScenarioConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    Ok(())
}

fn simulate(common: &Common, method: Method) -> Result<()> {
    let cfg = load_config(common)?;
    save_config(&cfg, &common.out)?;
    let records = Simulation::run(&cfg, method, cfg.seed)?;
    let mut f = fs::File::create(common.out.join("records.jsonl"))?;
    for r in &records {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    let mut row = ResultRow::new("simulate", method.name(), "vehicles", cfg.vehicles as f64, cfg.seed);
    summarize_records(&mut row, &records);
    emit_report(&[row], &cfg, &common.out)?;
    let degraded = records.iter().filter(|r| r.degraded).count();
    log::info!("{} slots, {degraded} degraded, written to {}", records.len(), common.out.display());
    Ok(())
}

fn sweep(common: &Common, methods: &[Method], kind: SweepKind, n_seeds: u64, vehicles: &[usize]) -> Result<()> {
    let cfg = load_config(common)?;
    save_config(&cfg, &common.out)?;
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + n_seeds).collect();
    let methods = if methods.is_empty() { Method::ALL.to_vec() } else { methods.to_vec() };
    let mut sweeps = Vec::new();
    for s in Sweep::defaults() {
        let s = match s {
            Sweep::Vehicles { .. } => Sweep::Vehicles { counts: vehicles.to_vec(), methods: methods.clone() },
            Sweep::Tracking { .. } => Sweep::Tracking { counts: vehicles.to_vec() },
            other => other,
        };
        let wanted = match kind {
            SweepKind::All => true,
            SweepKind::Vehicles => s.name() == "vehicles",
            SweepKind::Latency => s.name() == "latency",
            SweepKind::CpuPower => s.name() == "cpu-power",
            SweepKind::Tracking => s.name() == "tracking",
        };
        if wanted {
            sweeps.push(s);
        }
    }
    let mut rows = Vec::new();
    for s in &sweeps {
        log::info!("running {} sweep over {} seeds", s.name(), seeds.len());
        rows.extend(s.run(&cfg, &seeds)?);
    }
    let summary = emit_report(&rows, &cfg, &common.out)?;
    let failed: usize = summary.cells.iter().map(|c| c.failed).sum();
    log::info!("{} rows, {failed} failed runs, written to {}", rows.len(), common.out.display());
    Ok(())
}

fn report(common: &Common) -> Result<()> {
    let saved = common.out.join("config.toml");
    let cfg = match (&common.config, saved.exists()) {
        (Some(_), _) => load_config(common)?,
        (None, true) => ScenarioConfig::load(&saved)?,
        (None, false) => ScenarioConfig::default(),
    };
    let path = common.out.join("results.csv");
    let rows = read_csv(fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
    emit_report(&rows, &cfg, &common.out)?;
    log::info!("summarized {} rows", rows.len());
    Ok(())
}

/// 2 for configurations that cannot be simulated, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HarnessError>() {
        Some(HarnessError::Config(_) | HarnessError::PlacementExhausted { .. }) => 2,
        Some(HarnessError::Plan(p)) if p.is_infeasibility() || matches!(p, PlanError::Exhausted { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, method } => simulate(common, *method),
        Command::Sweep { common, method, sweep: kind, seeds, vehicles } => sweep(common, method, *kind, *seeds, vehicles),
        Command::TrackBench { common, seeds, vehicles } => sweep_tracking(common, *seeds, vehicles),
        Command::Report { common } => report(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn sweep_tracking(common: &Common, n_seeds: u64, vehicles: &[usize]) -> Result<()> {
    sweep(common, &[], SweepKind::Tracking, n_seeds, vehicles)
}
