use std::path::PathBuf;

use lightcon::model::peek_precision;
use lightcon::{Checkpoint, Precision, Real};
use serde::Serialize;

use super::{train, Context, CONFIG_FILE, FINAL_CHECKPOINT};
use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::metrics::MetricsLog;
use crate::source::Source;

#[derive(Debug, Clone, Default)]
pub struct PretrainArgs {
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub resume: Option<PathBuf>,
    /// Output directory; defaults to `runs/<run id>`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrainOutcome {
    pub run_id: String,
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub epochs: u64,
    pub steps: u64,
}

pub fn pretrain(args: &PretrainArgs, ctx: &Context) -> Result<PretrainOutcome, CliError> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let run_id = cfg.run_id();
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| CliError::io(&config_path, e))?;
    let log = MetricsLog::in_dir(ctx.log_dir_or(&out), &run_id)?;
    let source = Source::load(&cfg.data)?;

    let resume = match &args.resume {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let found = peek_precision(&bytes)?;
            if found != cfg.run.precision {
                return Err(CliError::Checkpoint(format!(
                    "{} holds {found:?} parameters but the run is configured for {:?}",
                    path.display(),
                    cfg.run.precision
                )));
            }
            Some(bytes)
        }
        None => None,
    };
    let (epochs, steps) = match cfg.run.precision {
        Precision::Single => run::<f32>(&cfg, &source, resume.as_deref(), &log, &out)?,
        Precision::Double => run::<f64>(&cfg, &source, resume.as_deref(), &log, &out)?,
    };
    Ok(PretrainOutcome {
        run_id,
        checkpoint: out.join(FINAL_CHECKPOINT),
        log: log.path().to_path_buf(),
        out_dir: out,
        epochs,
        steps,
    })
}

fn run<T: Real>(
    cfg: &RunConfig,
    source: &Source,
    resume: Option<&[u8]>,
    log: &MetricsLog,
    out: &std::path::Path,
) -> Result<(u64, u64), CliError> {
    let ckpt = resume.map(Checkpoint::<T>::from_bytes).transpose()?;
    let session = train(cfg, source, ckpt.as_ref(), Some(log), Some(out))?;
    session.checkpoint().save(out.join(FINAL_CHECKPOINT))?;
    Ok((session.epoch(), session.trainer().step()))
}
