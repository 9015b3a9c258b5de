mod eval;
mod gradcheck;
mod pretrain;
mod sweep;

use std::path::{Path, PathBuf};

use lightcon::pipeline::{knn_eval, probe_eval};
use lightcon::{Checkpoint, Network, Real, Session, Split, ViewSource};
use serde::Serialize;

pub use eval::{eval, EvalArgs};
pub use gradcheck::{format_report, gradcheck, GradcheckArgs};
pub use pretrain::{pretrain, PretrainArgs, PretrainOutcome};
pub use sweep::{sweep, SweepArgs, SweepCell, SweepOutcome};

use crate::config::{Protocol, RunConfig};
use crate::error::CliError;
use crate::metrics::{MetricsLog, RecordKind};
use crate::source::Source;

/// Process-wide settings that do not belong to a run configuration.
#[derive(Debug, Clone, Default)]
pub struct Context {
    /// Directory for metrics logs; defaults to each command's output
    /// directory.
    pub log_dir: Option<PathBuf>,
}

impl Context {
    pub fn from_env() -> Self {
        Self {
            log_dir: std::env::var_os(crate::metrics::LOG_DIR_ENV).map(PathBuf::from),
        }
    }

    fn log_dir_or<'a>(&'a self, fallback: &'a Path) -> &'a Path {
        self.log_dir.as_deref().unwrap_or(fallback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub accuracy: f64,
    /// Neighbors used by the kNN protocol after clamping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub clamped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
    pub n_train: usize,
    pub n_eval: usize,
}

pub(crate) fn evaluate<T: Real>(cfg: &RunConfig, source: &Source, net: &Network<T>) -> Result<EvalReport, CliError> {
    let (n_train, n_eval) = (source.len(Split::Train), source.len(Split::Eval));
    if n_eval == 0 {
        return Err(CliError::Data("the dataset has no evaluation split".into()));
    }
    Ok(match cfg.eval.protocol {
        Protocol::Knn => {
            let out = knn_eval(source, net, &cfg.eval.knn)?;
            EvalReport {
                protocol: Protocol::Knn,
                accuracy: out.accuracy,
                k: Some(out.k),
                clamped: out.clamped,
                train_accuracy: None,
                n_train,
                n_eval,
            }
        }
        Protocol::Linear => {
            let out = probe_eval(source, net, &cfg.eval.probe)?;
            EvalReport {
                protocol: Protocol::Linear,
                accuracy: out.accuracy,
                k: None,
                clamped: false,
                train_accuracy: Some(out.train_accuracy),
                n_train,
                n_eval,
            }
        }
    })
}

pub(crate) fn checkpoint_name(epoch: u64) -> String {
    format!("epoch-{epoch:04}.ckpt")
}

pub(crate) const FINAL_CHECKPOINT: &str = "final.ckpt";
pub(crate) const CONFIG_FILE: &str = "config.toml";

/// Runs the remaining schedule of `cfg` on `source`, logging every step and
/// epoch and writing periodic checkpoints into `ckpt_dir`.
pub(crate) fn train<'a, T: Real>(
    cfg: &RunConfig,
    source: &'a Source,
    resume: Option<&Checkpoint<T>>,
    log: Option<&MetricsLog>,
    ckpt_dir: Option<&Path>,
) -> Result<Session<'a, Source, T>, CliError> {
    let spec = cfg.model.spec(source.input_dim())?;
    let mut session = match resume {
        Some(ckpt) => {
            if ckpt.spec != spec {
                return Err(CliError::Checkpoint(format!(
                    "checkpoint network {:?} does not match the configured {:?}",
                    ckpt.spec, spec
                )));
            }
            Session::resume(source, cfg.train.clone(), ckpt)?
        }
        None => Session::new(source, cfg.train.clone(), spec)?,
    };
    let every = cfg.run.checkpoint_every;
    let mut log_error = None;
    session.run(
        |report| {
            if let Some(log) = log {
                if let Err(e) = log.record(RecordKind::Step, report) {
                    log_error.get_or_insert(e);
                }
            }
        },
        |summary, s| {
            if let Some(log) = log {
                log.record(RecordKind::Epoch, summary)
                    .map_err(|e| lightcon::Error::Io(std::io::Error::other(e.to_string())))?;
            }
            let done = summary.epoch + 1;
            if let Some(dir) = ckpt_dir {
                if every > 0 && done % every == 0 {
                    s.checkpoint().save(dir.join(checkpoint_name(done)))?;
                }
            }
            Ok(())
        },
    )?;
    match log_error {
        Some(e) => Err(e),
        None => Ok(session),
    }
}
