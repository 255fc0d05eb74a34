use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use formation_cli::commands::resolve_out_dir;
use formation_cli::{cmd_optimize, cmd_simulate, cmd_sweep, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "formation", version, about = "CRLB-optimal UAV sensing formations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the CRLB-optimal formation and write optimize.json
    Optimize(CommonArgs),
    /// Run a formation-control episode and write trace.jsonl, trace.csv, summary.json
    Simulate(CommonArgs),
    /// CRLB of benchmark formations over an altitude grid, written to sweep.csv
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the run seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides FORMATION_OUT_DIR and the config file)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable motion noise
    #[arg(long)]
    noise_free: bool,
}

fn load(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.simulation.seed = seed;
    }
    if args.noise_free {
        cfg.simulation.noise_free = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(args) => {
            let cfg = load(&args)?;
            let out = resolve_out_dir(args.out.as_deref(), &cfg);
            let report = cmd_optimize(&cfg, &out)?;
            println!(
                "phi* = {:.4} deg, radius = {:.3} m, bound = {:.6e} m^2 -> {}",
                report.elevation_deg,
                report.ring_radius_m,
                report.bound,
                out.display()
            );
        }
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let out = resolve_out_dir(args.out.as_deref(), &cfg);
            let summary = cmd_simulate(&cfg, &out)?;
            let e = &summary.episode;
            println!(
                "converged = {}, steps = {}, final crlb = {}, bound = {}, violations = {} -> {}",
                e.converged,
                e.steps,
                e.final_crlb.map_or("singular".into(), |v| format!("{v:.6e}")),
                e.bound.map_or("n/a".into(), |v| format!("{v:.6e}")),
                e.safety_violations,
                out.display()
            );
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let out = resolve_out_dir(args.out.as_deref(), &cfg);
            let rows = cmd_sweep(&cfg, &cfg.sweep.altitudes_m, &cfg.sweep.formations, &out)?;
            println!("{} sweep rows -> {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
