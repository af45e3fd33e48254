use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lorenzlab::config::ExperimentConfig;
use lorenzlab::{validate, LabError, Overrides};

#[derive(Parser)]
#[command(name = "lorenzlab", version, about = "Experiments on the Lorenz flow and the geometric Lorenz model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[run] workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    Simulate(Common),
    Spectrum(Common),
    Lyapunov(Common),
    Measure(Common),
    Dimension(Common),
    Hitting(Common),
    Recurrence(Common),
    Loglaw(Common),
    Correlations(Common),
    Deviations(Common),
    Escape(Common),
    Lapcheck(Common),
    #[command(name = "diagnose-nue")]
    DiagnoseNue(Common),
    Sensitivity(Common),
    Entropy(Common),
    /// Print the model invariants and the equilibrium spectrum without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn split(cmd: Cmd) -> Result<(&'static str, Common), PathBuf> {
    Ok(match cmd {
        Cmd::Simulate(c) => ("simulate", c),
        Cmd::Spectrum(c) => ("spectrum", c),
        Cmd::Lyapunov(c) => ("lyapunov", c),
        Cmd::Measure(c) => ("measure", c),
        Cmd::Dimension(c) => ("dimension", c),
        Cmd::Hitting(c) => ("hitting", c),
        Cmd::Recurrence(c) => ("recurrence", c),
        Cmd::Loglaw(c) => ("loglaw", c),
        Cmd::Correlations(c) => ("correlations", c),
        Cmd::Deviations(c) => ("deviations", c),
        Cmd::Escape(c) => ("escape", c),
        Cmd::Lapcheck(c) => ("lapcheck", c),
        Cmd::DiagnoseNue(c) => ("diagnose-nue", c),
        Cmd::Sensitivity(c) => ("sensitivity", c),
        Cmd::Entropy(c) => ("entropy", c),
        Cmd::Validate { config } => return Err(config),
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.downcast_ref::<LabError>().map_or(2, |l| l.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: anyhow::Result<()> = match split(cli.cmd) {
        Err(path) => ExperimentConfig::load(&path).map_err(anyhow::Error::from).map(|cfg| {
            print!("{}", validate(&cfg).text);
        }),
        Ok((name, c)) => ExperimentConfig::load(&c.config)
            .map_err(anyhow::Error::from)
            .and_then(|cfg| {
                let ov = Overrides { seed: c.seed, out: c.out, workers: c.workers };
                lorenzlab::run(name, &cfg, &ov).map_err(anyhow::Error::from)
            })
            .map(|s| {
                println!("manifest_hash={}", s.manifest_hash);
                for f in s.files.iter().chain(std::iter::once(&s.manifest)) {
                    println!("{}", s.out_dir.join(f).display());
                }
            })
            .with_context(|| format!("lorenzlab {name}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
