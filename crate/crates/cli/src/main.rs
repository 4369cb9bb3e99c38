use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use textcomp_cli::{commands, ExperimentSpec, HarnessError};

/// Synthetic word-image experiments: generate data, train, evaluate, sweep.
#[derive(Parser)]
#[command(name = "textcomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the train and test splits.
    Synth(RunArgs),
    /// Train every listed model variant.
    Train(RunArgs),
    /// Clean evaluation of every listed variant.
    Eval(RunArgs),
    /// Accuracy under detector-style quad noise.
    SweepPerturb(RunArgs),
    /// Accuracy with widened inter-character gaps.
    SweepKern(RunArgs),
    /// Train and compare all ablation variants.
    Ablate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; overrides the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the spec.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentSpec, HarnessError> {
        ExperimentSpec::load(&self.spec)?.resolve(self.out.clone(), self.seed)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Synth(a) => {
            let s = commands::cmd_synth(&a.resolve()?)?;
            println!(
                "{} train / {} test samples, sha256 {}",
                s.train.entries.len(),
                s.test.entries.len(),
                s.sha256
            );
        }
        Command::Train(a) => {
            for o in commands::cmd_train(&a.resolve()?)? {
                let how = if o.reused { "up to date" } else { "trained" };
                println!("{}: {how}, {} steps, {:.0} s", o.variant, o.timing.steps, o.timing.seconds);
            }
        }
        Command::Eval(a) => {
            for m in commands::cmd_eval(&a.resolve()?)? {
                println!(
                    "{}: word accuracy {:.4}, CER {:.4} on {} samples",
                    m.variant, m.report.word_accuracy, m.report.cer, m.report.examples
                );
            }
        }
        Command::SweepPerturb(a) => print!("{}", commands::cmd_perturb_sweep(&a.resolve()?)?.aggregate_csv()),
        Command::SweepKern(a) => print!("{}", commands::cmd_kern_sweep(&a.resolve()?)?.aggregate_csv()),
        Command::Ablate(a) => print!("{}", commands::ablation_csv(&commands::cmd_ablate(&a.resolve()?)?.rows)),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
