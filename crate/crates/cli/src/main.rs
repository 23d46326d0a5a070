use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fedpne_cli::commands::{self, RunOverrides};
use fedpne_cli::config::{load_raw, Algorithm, ObjectiveName, ObjectiveSection, Preset};

#[derive(Parser)]
#[command(name = "fedpne", version, about = "Federated phased node elimination experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write traces and a regret summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// fedpne, dp-fedpne or grid
        #[arg(long)]
        algo: Option<Algorithm>,
        /// experimental or theory
        #[arg(long)]
        preset: Option<Preset>,
    },
    /// Draw the summaries found in a run directory (or its subdirectories).
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the dense-grid optimum of an objective.
    Oracle {
        /// garland, double-sine or seir
        #[arg(long)]
        objective: ObjectiveName,
        #[arg(long)]
        resolution: Option<usize>,
        /// Report on the objective rescaled to [0, 1].
        #[arg(long)]
        normalized: bool,
    },
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out,
            algo,
            preset,
        } => {
            let raw = load_raw(&config)?;
            let overrides = RunOverrides {
                seed: seed_override,
                out,
                algorithm: algo,
                preset,
            };
            let cfg = overrides.apply(raw)?;
            let report = commands::run(&cfg)?;
            println!("fstar={:.16e} out={}", report.fstar, report.out_dir.display());
            for s in &report.seeds {
                let bound = match (s.comm.bound, s.comm.pass) {
                    (Some(b), Some(pass)) => format!("{:.4} {}", b, if pass { "ok" } else { "exceeded" }),
                    _ => "n/a".into(),
                };
                println!(
                    "seed={} phases={} events={} final_avg_regret={:.6} comm_bound={}",
                    s.seed, s.phases, s.comm_events, s.final_average_regret, bound
                );
            }
        }
        Command::Plot { input, out } => {
            let n = commands::plot(&input, &out)?;
            println!("wrote {} ({n} series)", out.display());
        }
        Command::Oracle {
            objective,
            resolution,
            normalized,
        } => {
            let resolution =
                resolution.unwrap_or(ObjectiveSection::default_resolution(objective));
            let report = commands::oracle(objective, resolution, normalized)
                .with_context(|| format!("oracle at resolution {resolution}"))?;
            println!(
                "fstar={:.16e} argmax={} min={:.16e} argmin={}",
                report.fstar,
                join(&report.argmax),
                report.min,
                join(&report.argmin)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::FAILURE
        }
    }
}
