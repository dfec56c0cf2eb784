use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sfq_cli::commands::{self, SweepKind};
use sfq_cli::config::{Format, RunConfig};
use sfq_cli::CliError;
use sfq_core::Coupling;

#[derive(Debug, Parser)]
#[command(name = "sfq", version, about = "Optimize, budget and encode SFQ pulse schedules for fluxonium gates")]
struct Cli {
    /// TOML run configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    coupling: Option<Coupling>,
    #[arg(long, global = true)]
    theta_kick: Option<f64>,
    #[arg(long, global = true)]
    theta_targ: Option<f64>,
    /// Clock multiple of the qubit frequency; repeat for several.
    #[arg(long = "clock", global = true)]
    clocks: Vec<u32>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Optimizer restarts per (n, r) cell.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the diagonalized model.
    ModelInfo,
    /// Optimize ramps over the configured (n, r) table.
    Optimize,
    /// Repeat the optimization over kick or target angles.
    Sweep {
        kind: SweepKind,
        /// Comma-separated angles, in radians.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Closed and open error budget of a schedule file.
    Budget { file: PathBuf },
    /// Control word of a snapped schedule file.
    Encode { file: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = cli.coupling {
        cfg.gate.coupling = c;
    }
    if cli.theta_kick.is_some() {
        cfg.gate.theta_kick = cli.theta_kick;
    }
    if let Some(t) = cli.theta_targ {
        cfg.gate.theta_targ = t;
    }
    if !cli.clocks.is_empty() {
        cfg.gate.clock_multiples = cli.clocks.clone();
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trial_budget = t;
    }
    if let Command::Sweep { kind, values: Some(v) } = &cli.command {
        match kind {
            SweepKind::Kick => cfg.sweep.kick_angles = Some(v.clone()),
            SweepKind::Target => cfg.sweep.target_angles = Some(v.clone()),
        }
    }
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let cfg = load_config(cli)?;
    let json = cfg.output.format == Format::Json;
    match &cli.command {
        Command::ModelInfo => {
            let report = commands::cmd_model_info(&cfg)?;
            if json {
                print_json(&report);
            } else {
                print!("{report}");
            }
        }
        Command::Optimize => {
            let outcome = commands::cmd_optimize(&cfg)?;
            let s = &outcome.summary;
            match s.best_continuous {
                Some((n, r, n_train, inf)) => {
                    println!("best continuous: n={n} r={r} n_train={n_train} infidelity={inf:.3e}")
                }
                None => println!("best continuous: none"),
            }
            for (m, choice) in &s.snapped {
                match choice {
                    Some(c) => println!(
                        "best snapped {m}x: n={} r={} n_train={} infidelity={:.3e}",
                        c.n_pulses, c.r_periods, c.n_train, c.infidelity
                    ),
                    None => println!("best snapped {m}x: none"),
                }
            }
            for f in &s.failures {
                eprintln!("cell n={} r={} failed: {}", f.n, f.r, f.reason);
            }
            for p in &outcome.files {
                println!("wrote {}", p.display());
            }
            if !outcome.succeeded() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep { kind, .. } => {
            let outcome = commands::cmd_sweep(&cfg, *kind)?;
            for p in &outcome.files {
                println!("wrote {}", p.display());
            }
        }
        Command::Budget { file } => {
            let report = commands::cmd_budget(&cfg, file)?;
            if json {
                print_json(&report);
            } else {
                print!("{report}");
            }
        }
        Command::Encode { file } => {
            let report = commands::cmd_encode(file)?;
            if json {
                print_json(&report);
            } else {
                print!("{report}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
