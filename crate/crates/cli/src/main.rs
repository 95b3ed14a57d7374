//! `liusim`: command-line driver for the ultrasound/tumor simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use liusim_core::io::write_wave_diagnostics;
use liusim_core::simulation::{SweepOutcome, SECONDS_PER_DAY};
use liusim_core::validation::run_oracle_suite;
use liusim_core::{
    load_config_file, proliferation_decrease, read_sweep_grid, run_simulation, run_sweep, write_sweep,
    write_timeseries, Error, ExperimentPreset, SimulationConfig, SimulationResult,
};

const EXIT_PARTIAL: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_CONFIG: u8 = 65;
const EXIT_SOLVER: u8 = 70;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "LIUSIM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "liusim_out";

#[derive(Debug, Parser)]
#[command(name = "liusim", version, about = "Low-intensity ultrasound on a poroelastic tumor spheroid")]
struct Cli {
    /// Output directory (default: $LIUSIM_OUT_DIR, then the config's [output] dir, then ./liusim_out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Write a VTK snapshot every N slow steps.
    #[arg(long, global = true, value_name = "N")]
    snapshots: Option<usize>,

    /// Worker threads for sweep rows.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Run everything twice and fail unless the results are identical.
    #[arg(long, global = true)]
    seedless: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single simulation.
    Run { config: PathBuf },
    /// Run control and sonicated simulations and print the proliferation decrease.
    Compare { config: PathBuf },
    /// Run one control plus one sonicated simulation per grid row.
    Sweep { config: PathBuf, grid: PathBuf },
    /// Run the verification oracles.
    Validate,
}

/// A failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn solver(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SOLVER,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_SOLVER };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("liusim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure {
                code: EXIT_USAGE,
                message: "--threads must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::solver(e.to_string()))?;
    }
    match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Compare { config } => cmd_compare(&cli, config),
        Command::Sweep { config, grid } => cmd_sweep(&cli, config, grid),
        Command::Validate => cmd_validate(),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<(SimulationConfig, PathBuf), Failure> {
    let mut config = load_config_file(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })?;
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| (!config.output.dir.is_empty()).then(|| PathBuf::from(&config.output.dir)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    if let Some(n) = cli.snapshots {
        config.output.snapshot_every = n;
    }
    config.output.dir = out.to_string_lossy().into_owned();
    config.validate()?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::solver(format!("{}: {e}", out.display())))?;
    Ok((config, out))
}

/// Runs `config`, twice under `--seedless`, and checks that both runs agree.
fn simulate(cli: &Cli, config: &SimulationConfig) -> Result<SimulationResult, Failure> {
    let result = run_simulation(config)?;
    if cli.seedless {
        let mut again = config.clone();
        again.output.snapshot_every = 0;
        let second = run_simulation(&again)?;
        if second.records != result.records {
            return Err(Failure::solver("determinism check failed: repeated runs differ"));
        }
        log::info!("determinism check passed");
    }
    Ok(result)
}

fn with_preset(config: &SimulationConfig, preset: ExperimentPreset, out: &Path, name: &str) -> SimulationConfig {
    let mut c = config.clone();
    c.experiment.preset = preset;
    c.output.dir = out.join(name).to_string_lossy().into_owned();
    c
}

fn write_outputs(result: &SimulationResult, config: &SimulationConfig, out: &Path, prefix: &str) -> Result<(), Failure> {
    write_timeseries(result, out.join(format!("{prefix}timeseries.csv")))?;
    if config.output.wave_diagnostics && !result.fast_solves.is_empty() {
        write_wave_diagnostics(result, out.join(format!("{prefix}wave_diagnostics.csv")))?;
    }
    Ok(())
}

fn final_day(result: &SimulationResult) -> f64 {
    result.records.last().map_or(0.0, |r| r.time / SECONDS_PER_DAY)
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<u8, Failure> {
    let (config, out) = load(cli, path)?;
    if config.experiment.preset == ExperimentPreset::Sweep {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "experiment.preset = \"sweep\" needs a grid; use `liusim sweep`".into(),
        });
    }
    let result = simulate(cli, &config)?;
    write_outputs(&result, &config, &out, "")?;
    let growth = result.normalized_tumor().last().map_or(1.0, |r| r.1);
    println!(
        "day {:.2}: tumor integral {:.6e} m² ({:.4}× initial); {} fast solves; {:.1} s",
        final_day(&result),
        result.records.last().map_or(0.0, |r| r.tumor_integral),
        growth,
        result.fast_solves.len(),
        result.wall_seconds
    );
    println!("wrote {}", out.display());
    Ok(0)
}

fn cmd_compare(cli: &Cli, path: &Path) -> Result<u8, Failure> {
    let (config, out) = load(cli, path)?;
    let control_cfg = with_preset(&config, ExperimentPreset::Control, &out, "control");
    let sonicated_cfg = with_preset(&config, ExperimentPreset::Sonicated, &out, "sonicated");
    let control = simulate(cli, &control_cfg)?;
    write_outputs(&control, &control_cfg, &out, "control_")?;
    let sonicated = simulate(cli, &sonicated_cfg)?;
    write_outputs(&sonicated, &sonicated_cfg, &out, "sonicated_")?;
    let day = config.numerics.total_time / SECONDS_PER_DAY;
    let decrease = proliferation_decrease(&sonicated, &control, day)?;
    println!(
        "f = {} MHz, A = {} kPa, eta_c = {} Pa·s, eta_T = {} Pa·s",
        config.wave.frequency / 1e6,
        config.wave.pressure / 1e3,
        config.wave.eta_culture,
        config.wave.eta_tumor
    );
    println!("proliferation decrease at day {day:.2}: {decrease:.2}%");
    Ok(0)
}

fn cmd_sweep(cli: &Cli, path: &Path, grid_path: &Path) -> Result<u8, Failure> {
    let (config, out) = load(cli, path)?;
    let grid = read_sweep_grid(grid_path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })?;
    let outcome = run_sweep(&config, &grid)?;
    if cli.seedless {
        let again = run_sweep(&config, &grid)?;
        if !same_sweep(&outcome, &again) {
            return Err(Failure::solver("determinism check failed: repeated sweeps differ"));
        }
    }
    let csv = out.join("sweep.csv");
    write_sweep(&outcome, &csv)?;
    write_timeseries(&outcome.control, out.join("control_timeseries.csv"))?;
    println!("{:>6} {:>6} {:>8} {:>8} {:>10}", "f_MHz", "A_kPa", "eta_c", "eta_T", "decrease");
    for (row, res) in &outcome.rows {
        let value = match res {
            Ok(d) => format!("{d:.2}%"),
            Err(e) => format!("failed: {e}"),
        };
        println!(
            "{:>6} {:>6} {:>8} {:>8} {:>10}",
            row.frequency / 1e6,
            row.pressure / 1e3,
            row.eta_culture,
            row.eta_tumor,
            value
        );
    }
    println!("wrote {}", csv.display());
    let failed = outcome.failures();
    if failed > 0 {
        eprintln!("liusim: {failed} of {} sweep rows failed", outcome.rows.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn same_sweep(a: &SweepOutcome, b: &SweepOutcome) -> bool {
    a.control.records == b.control.records
        && a.rows.len() == b.rows.len()
        && a.rows.iter().zip(&b.rows).all(|((ra, da), (rb, db))| {
            ra == rb
                && match (da, db) {
                    (Ok(x), Ok(y)) => x.to_bits() == y.to_bits(),
                    (Err(_), Err(_)) => true,
                    _ => false,
                }
        })
}

fn cmd_validate() -> Result<u8, Failure> {
    let mut failed = 0;
    for report in run_oracle_suite() {
        match report {
            Ok(r) => {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                if !r.passed() {
                    failed += 1;
                }
                println!(
                    "{status} {:<20} measured {:.6e} expected {:.6e} error {:.3e} (tol {:.1e}) {:.2} s",
                    r.name, r.measured, r.expected, r.error, r.tolerance, r.seconds
                );
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {e}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::solver(format!("{failed} oracle(s) failed")));
    }
    Ok(0)
}
