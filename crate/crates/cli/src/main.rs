use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpsf_cli::commands::{cmd_eval, cmd_oracle, cmd_sweep, cmd_train};
use dpsf_cli::config::{RunConfig, SweepAxis};
use dpsf_cli::error::{CliError, ExitKind};

#[derive(Parser)]
#[command(name = "dpsf", about = "Sound field reconstruction with differentiable physics and a PINN baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the reference field, sensors and measurements.
    Oracle(Common),
    /// Train the configured model on stored measurements.
    Train(Common),
    /// Score a trained model against the reference.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Display times for heatmaps, comma separated.
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<f64>>,
        /// Write PGM heatmaps of reference, reconstruction and difference.
        #[arg(long)]
        images: bool,
    },
    /// Train and score one run per value of a parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Option<SweepAxis>,
    },
}

fn resolve(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    let out = cfg.output.dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Oracle(common) => {
            let (cfg, out) = resolve(&common)?;
            let r = cmd_oracle(&cfg, &out)?;
            println!(
                "reference {}x{} over {} frames (dr = {:.4e}, dt = {:.4e}) written to {}",
                r.reference_m,
                r.reference_m,
                r.reference_frames,
                r.dr,
                r.dt,
                out.display()
            );
        }
        Command::Train(common) => {
            let (cfg, out) = resolve(&common)?;
            let r = cmd_train(&cfg, &out)?;
            println!(
                "{} iterations in {:.1} s, final loss {:.4e}",
                r.iterations, r.seconds, r.final_loss
            );
        }
        Command::Eval { common, frames, images } => {
            let (cfg, out) = resolve(&common)?;
            let r = cmd_eval(&cfg, &out, frames.as_deref(), images)?;
            println!("nmse = {:e}", r.nmse);
            for p in r.images {
                println!("wrote {}", p.display());
            }
        }
        Command::Sweep { common, axis } => {
            let (cfg, out) = resolve(&common)?;
            for (model, rows) in cmd_sweep(&cfg, axis, &out)? {
                for r in rows {
                    match (r.nmse, r.error) {
                        (Some(e), _) => println!("{model} {} nmse = {e:e}", r.value),
                        (None, Some(err)) => println!("{model} {} failed: {err}", r.value),
                        (None, None) => {}
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.exit_kind() {
                ExitKind::Numerical => 1,
                ExitKind::User => 2,
            };
            ExitCode::from(code)
        }
    }
}
