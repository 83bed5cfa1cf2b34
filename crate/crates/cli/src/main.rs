//! `hcfwm`: run dispersion, phase-matching, JSA, Schmidt, SET and sweep
//! studies from a TOML config.
//!
//! Exit codes: 0 success, 1 invalid input or config, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hcfwm::config::RunConfig;
use hcfwm::gasmedia::GasDatabase;
use hcfwm::Error;

mod commands;
mod output;

use commands::Context;
use output::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Subcommand {
    Dispersion,
    Phasematch,
    Jsa,
    Schmidt,
    SetSim,
    SweepLength,
    SweepPressure,
    DensityMap,
}

impl Subcommand {
    fn name(self) -> &'static str {
        match self {
            Subcommand::Dispersion => "dispersion",
            Subcommand::Phasematch => "phasematch",
            Subcommand::Jsa => "jsa",
            Subcommand::Schmidt => "schmidt",
            Subcommand::SetSim => "set-sim",
            Subcommand::SweepLength => "sweep-length",
            Subcommand::SweepPressure => "sweep-pressure",
            Subcommand::DensityMap => "density-map",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hcfwm", version, about = "Four-wave mixing photon pairs in gas-filled hollow-core fibers")]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Run configuration (TOML).
    config: PathBuf,
    /// Output root; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run directory name; defaults to a timestamp.
    #[arg(long)]
    label: Option<String>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> hcfwm::Result<PathBuf> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::validation("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation("--threads", e.to_string()))?;
    }
    let text = std::fs::read_to_string(&cli.config)?;
    let cfg = RunConfig::parse(&text)?;
    let db = GasDatabase::load()?;
    let label = cli
        .label
        .clone()
        .unwrap_or_else(|| chrono::Local::now().format("%Y%m%dT%H%M%S").to_string());
    let out_root = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut out = RunDir::create(&out_root, cli.subcommand.name(), &label)?;
    let ctx = Context { cfg, db };
    match cli.subcommand {
        Subcommand::Dispersion => commands::dispersion(&ctx, &mut out)?,
        Subcommand::Phasematch => commands::phasematch(&ctx, &mut out)?,
        Subcommand::Jsa => commands::jsa(&ctx, &mut out)?,
        Subcommand::Schmidt => commands::schmidt(&ctx, &mut out)?,
        Subcommand::SetSim => commands::set_sim(&ctx, &mut out)?,
        Subcommand::SweepLength => commands::sweep_length_cmd(&ctx, &mut out)?,
        Subcommand::SweepPressure => commands::sweep_pressure_cmd(&ctx, &mut out)?,
        Subcommand::DensityMap => commands::density_map_cmd(&ctx, &mut out)?,
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    out.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            println!("{}: manifest", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
