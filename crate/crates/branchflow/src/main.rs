//! `branchflow` command-line interface.
//!
//! Exit codes: 0 success, 2 usage/input error, 3 numerical divergence.

use branchflow::experiment::{
    cmd_bench, cmd_classical, cmd_eval, cmd_oracle, cmd_plot, cmd_train_base, cmd_transfer_ic,
    cmd_transfer_potential, CmdResult, ExperimentSpec, PotentialSource,
};
use branchflow::train::Sampling;
use clap::{Parser, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Train the multi-head base network.
    TrainBase,
    /// Fine-tune new heads for fresh initial conditions on a frozen base.
    TransferIc,
    /// Fine-tune new heads on a freshly resampled potential.
    TransferPotential,
    /// Train single-head networks from scratch (the transfer baseline).
    Classical,
    /// Emit RK4 reference trajectories.
    Oracle,
    /// Compare checkpoint heads against fresh oracle runs.
    Eval,
    /// Render trajectory and loss figures from existing artifacts.
    Plot,
    /// Measure epochs/sec across training scenarios and architectures.
    Bench,
}

#[derive(Debug, Parser)]
#[command(
    name = "branchflow",
    about = "Multi-head physics-informed solvers for ray dynamics in random Gaussian potentials"
)]
struct Cli {
    #[arg(value_enum)]
    mode: Mode,
    /// JSON experiment config; defaults reproduce the reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override every stochastic seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the training epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory for all artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Train adversarially (DEQGAN) instead of the plain residual loss.
    #[arg(long)]
    gan: bool,
    /// Use this potential file instead of the config's potential source.
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Checkpoint path for transfer/eval modes.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn build_spec(cli: &Cli) -> CmdResult<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(path) = &cli.potential {
        spec.potential = PotentialSource::File { path: path.clone() };
    }
    if let Some(seed) = cli.seed {
        spec.model.init_seed = seed;
        spec.deqgan.seed = seed;
        spec.resample_seed = seed.wrapping_add(1);
        if let Sampling::UniformResample { seed: s } = &mut spec.training.sampling {
            *s = seed;
        }
        if let PotentialSource::Sample { seed: s, .. } = &mut spec.potential {
            *s = seed;
        }
    }
    if let Some(epochs) = cli.epochs {
        spec.training.epochs = epochs;
    }
    if cli.gan {
        spec.gan = true;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: &Cli) -> CmdResult<()> {
    let spec = build_spec(cli)?;
    let out = cli.out.as_path();
    let checkpoint = cli
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("checkpoint.json"));
    match cli.mode {
        Mode::TrainBase => cmd_train_base(&spec, out),
        Mode::TransferIc => cmd_transfer_ic(&spec, out, &checkpoint),
        Mode::TransferPotential => cmd_transfer_potential(&spec, out, &checkpoint),
        Mode::Classical => cmd_classical(&spec, out),
        Mode::Oracle => cmd_oracle(&spec, out),
        Mode::Eval => {
            let summary = cmd_eval(&spec, out, &checkpoint)?;
            for head in &summary.heads {
                println!(
                    "head y0={:.3}: max_err x={:.3e} y={:.3e} px={:.3e} py={:.3e} residual={:.3e}",
                    head.y0,
                    head.max_errors[0],
                    head.max_errors[1],
                    head.max_errors[2],
                    head.max_errors[3],
                    head.final_residual
                );
            }
            if summary.extrapolated {
                println!("warning: evaluation grid extends beyond the training horizon");
            }
            Ok(())
        }
        Mode::Plot => cmd_plot(&spec, out),
        Mode::Bench => {
            let table = cmd_bench(&spec, out, 200, 30.0)?;
            println!("{:<12} {:<8} {:>12}", "scenario", "arch", "epochs/sec");
            for cell in &table.cells {
                println!(
                    "{:<12} {:<8} {:>12.2}",
                    cell.scenario, cell.architecture, cell.epochs_per_second
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
