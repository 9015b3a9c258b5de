//! Library behind the `lightcon` binary: run configuration, metrics log and
//! the `pretrain`, `eval`, `sweep` and `gradcheck` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;
pub mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lightcon::data::write_synth_dump;
use lightcon::{LossKind, SmoothingPattern};

use commands::{Context, EvalArgs, GradcheckArgs, PretrainArgs, SweepArgs};
use config::{DataSource, Overrides, Protocol, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lightcon", version, about = "Momentum-contrast pretraining with SoftNCE")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML run configuration; every key has a default.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.smoothing.k=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let mut o = Overrides::new();
        for s in &self.set {
            o.push_assignment(s)?;
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Infonce,
    Softnce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProtocolArg {
    Knn,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatternArg {
    Average,
    LinearDecay,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain an encoder and write checkpoints and a metrics log.
    Pretrain {
        #[command(flatten)]
        config: ConfigArgs,
        /// Shorthand for `--set train.total_epochs=N`.
        #[arg(long)]
        epochs: Option<u64>,
        /// Fixed positive weight, shorthand for a static alpha schedule.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        /// Continue from a checkpoint written at an epoch boundary.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Output directory (default `runs/<run id>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the backbone features of a checkpoint's key encoder.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
    },
    /// Pretrain and evaluate every cell of an alpha x K x pattern grid.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "alpha", value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long = "k", value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long = "pattern", value_delimiter = ',', value_enum)]
        patterns: Vec<PatternArg>,
        /// Run independent cells concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the configured synthetic dataset to a binary dump.
    SynthDump {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_command(command: Command, ctx: &Context) -> Result<(), CliError> {
    match command {
        Command::Pretrain {
            config,
            epochs,
            alpha,
            loss,
            resume,
            out,
        } => {
            let mut overrides = config.overrides()?;
            if let Some(e) = epochs {
                overrides.epochs(e)?;
            }
            if let Some(a) = alpha {
                overrides.alpha(a);
            }
            if let Some(l) = loss {
                overrides.loss(match l {
                    LossArg::Infonce => LossKind::InfoNce,
                    LossArg::Softnce => LossKind::SoftNce,
                });
            }
            let outcome = commands::pretrain(
                &PretrainArgs {
                    config: config.config,
                    overrides,
                    resume,
                    out,
                },
                ctx,
            )?;
            println!(
                "run {}: {} epochs, {} steps\ncheckpoint {}\nmetrics {}",
                outcome.run_id,
                outcome.epochs,
                outcome.steps,
                outcome.checkpoint.display(),
                outcome.log.display()
            );
        }
        Command::Eval {
            checkpoint,
            config,
            protocol,
        } => {
            let report = commands::eval(
                &EvalArgs {
                    checkpoint,
                    config: config.config.clone(),
                    overrides: config.overrides()?,
                    protocol: protocol.map(|p| match p {
                        ProtocolArg::Knn => Protocol::Knn,
                        ProtocolArg::Linear => Protocol::Linear,
                    }),
                },
                ctx,
            )?;
            match report.k {
                Some(k) => {
                    if report.clamped {
                        eprintln!("warning: k clamped to the {k} training samples");
                    }
                    println!(
                        "knn accuracy {:.4} (k = {k}, {} eval samples)",
                        report.accuracy, report.n_eval
                    );
                }
                None => println!(
                    "linear probe accuracy {:.4} (train {:.4}, {} eval samples)",
                    report.accuracy,
                    report.train_accuracy.unwrap_or(f64::NAN),
                    report.n_eval
                ),
            }
        }
        Command::Sweep {
            config,
            alphas,
            ks,
            patterns,
            parallel,
            out,
        } => {
            let outcome = commands::sweep(
                &SweepArgs {
                    config: config.config.clone(),
                    overrides: config.overrides()?,
                    alphas,
                    ks,
                    patterns: patterns
                        .into_iter()
                        .map(|p| match p {
                            PatternArg::Average => SmoothingPattern::Average,
                            PatternArg::LinearDecay => SmoothingPattern::LinearDecay,
                        })
                        .collect(),
                    parallel,
                    out,
                },
                ctx,
            )?;
            print!("{}", outcome.table);
            println!("records {}", outcome.records.display());
        }
        Command::Gradcheck {
            seed,
            trials,
            corrupt_gradient,
        } => {
            let report = commands::gradcheck(&GradcheckArgs {
                seed,
                trials,
                corrupt: corrupt_gradient,
            })?;
            print!(
                "{}",
                commands::format_report(&report, lightcon::gradcheck::DEFAULT_THRESHOLD)
            );
            if !report.passed() {
                let failed: Vec<&str> = report
                    .cases
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(CliError::Gradcheck(format!("failed cases: {}", failed.join(", "))));
            }
        }
        Command::Config { config } => {
            let cfg = RunConfig::load(config.config.as_deref(), &config.overrides()?)?;
            print!("{}", cfg.to_toml());
        }
        Command::SynthDump { config, out } => {
            let cfg = RunConfig::load(config.config.as_deref(), &config.overrides()?)?;
            if cfg.data.source != DataSource::Synth {
                return Err(CliError::Config("synth-dump needs data.source = \"synth\"".into()));
            }
            let ds = lightcon::data::synth_generate(&cfg.data.synth, cfg.data.seed)?;
            write_synth_dump(&ds, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

/// Runs a parsed command line and maps failures to exit codes.
pub fn run(cli: Cli) -> ExitCode {
    match run_command(cli.command, &Context::from_env()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lightcon: {} error: {e}", e.kind());
            e.exit_code()
        }
    }
}
