use std::path::PathBuf;

use lightcon::model::peek_precision;
use lightcon::{Checkpoint, Precision, Real, ViewSource};

use super::{evaluate, Context, EvalReport, CONFIG_FILE};
use crate::config::{Overrides, Protocol, RunConfig};
use crate::error::CliError;
use crate::metrics::{MetricsLog, RecordKind};
use crate::source::Source;

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    /// Defaults to the `config.toml` written next to the checkpoint.
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub protocol: Option<Protocol>,
}

/// Evaluates the key encoder's backbone features of a checkpoint.
pub fn eval(args: &EvalArgs, ctx: &Context) -> Result<EvalReport, CliError> {
    let dir = args.checkpoint.parent().map(PathBuf::from).unwrap_or_default();
    let config = args.config.clone().or_else(|| {
        let sibling = dir.join(CONFIG_FILE);
        sibling.exists().then_some(sibling)
    });
    let mut cfg = RunConfig::load(config.as_deref(), &args.overrides)?;
    if let Some(p) = args.protocol {
        cfg.eval.protocol = p;
    }
    let bytes = std::fs::read(&args.checkpoint).map_err(|e| CliError::io(&args.checkpoint, e))?;
    let source = Source::load(&cfg.data)?;
    let report = match peek_precision(&bytes)? {
        Precision::Single => run::<f32>(&cfg, &source, &bytes)?,
        Precision::Double => run::<f64>(&cfg, &source, &bytes)?,
    };
    let log = MetricsLog::in_dir(ctx.log_dir_or(&dir), &cfg.run_id())?;
    log.record(
        RecordKind::Eval,
        &serde_json::json!({ "checkpoint": args.checkpoint, "report": report }),
    )?;
    Ok(report)
}

fn run<T: Real>(cfg: &RunConfig, source: &Source, bytes: &[u8]) -> Result<EvalReport, CliError> {
    let ckpt = Checkpoint::<T>::from_bytes(bytes)?;
    if ckpt.spec.input_dim() != source.input_dim() {
        return Err(CliError::Checkpoint(format!(
            "checkpoint expects {}-dim inputs but the dataset has {}",
            ckpt.spec.input_dim(),
            source.input_dim()
        )));
    }
    let pair = ckpt.encoder_pair()?;
    evaluate(cfg, source, pair.key())
}
