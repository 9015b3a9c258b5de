use std::path::PathBuf;

use lightcon::losses::AlphaSchedule;
use lightcon::{Precision, Real, SmoothingPattern};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, Context};
use crate::config::{Overrides, Protocol, RunConfig};
use crate::error::CliError;
use crate::metrics::{MetricsLog, RecordKind};
use crate::source::Source;

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    /// Empty lists fall back to the configured value.
    pub alphas: Vec<f64>,
    pub ks: Vec<usize>,
    pub patterns: Vec<SmoothingPattern>,
    pub parallel: bool,
    /// Directory for `sweep.jsonl`; defaults to `runs/sweep-<run id>`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub pattern: SmoothingPattern,
    pub alpha: f64,
    pub k: usize,
    pub protocol: Protocol,
    pub accuracy: f64,
    pub run: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Grid order: pattern, then alpha, then K.
    pub cells: Vec<SweepCell>,
    pub table: String,
    pub records: PathBuf,
}

fn cell_config(base: &RunConfig, pattern: SmoothingPattern, alpha: f64, k: usize) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    cfg.train.smoothing.pattern = pattern;
    cfg.train.smoothing.alpha = AlphaSchedule::Static { alpha };
    cfg.train.smoothing.k = k;
    cfg.validate()?;
    Ok(cfg)
}

/// Pretrains and evaluates every (pattern, α, K) cell with the shared
/// seed. Each finished cell is appended to `sweep.jsonl` immediately.
pub fn sweep(args: &SweepArgs, ctx: &Context) -> Result<SweepOutcome, CliError> {
    let base = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let alphas = if args.alphas.is_empty() {
        vec![match base.train.smoothing.alpha {
            AlphaSchedule::Static { alpha } => alpha,
            AlphaSchedule::Incremental { alpha_min } => alpha_min,
        }]
    } else {
        args.alphas.clone()
    };
    let ks = if args.ks.is_empty() {
        vec![base.train.smoothing.k]
    } else {
        args.ks.clone()
    };
    let patterns = if args.patterns.is_empty() {
        vec![base.train.smoothing.pattern]
    } else {
        args.patterns.clone()
    };

    let mut grid = Vec::new();
    for &pattern in &patterns {
        for &alpha in &alphas {
            for &k in &ks {
                grid.push((pattern, alpha, k, cell_config(&base, pattern, alpha, k)?));
            }
        }
    }

    let sweep_id = format!("sweep-{}", base.run_id());
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&sweep_id));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let records = MetricsLog::open(out.join("sweep.jsonl"), sweep_id)?;
    let log_dir = ctx.log_dir_or(&out).to_path_buf();
    let source = Source::load(&base.data)?;

    let run_cell = |(pattern, alpha, k, cfg): &(SmoothingPattern, f64, usize, RunConfig)| {
        let run = cfg.run_id();
        let log = MetricsLog::in_dir(&log_dir, &run)?;
        let accuracy = match cfg.run.precision {
            Precision::Single => cell_accuracy::<f32>(cfg, &source, &log)?,
            Precision::Double => cell_accuracy::<f64>(cfg, &source, &log)?,
        };
        let cell = SweepCell {
            pattern: *pattern,
            alpha: *alpha,
            k: *k,
            protocol: cfg.eval.protocol,
            accuracy,
            run,
        };
        records.record(RecordKind::Eval, &cell)?;
        Ok::<_, CliError>(cell)
    };
    let cells = if args.parallel {
        grid.par_iter().map(run_cell).collect::<Result<Vec<_>, _>>()?
    } else {
        grid.iter().map(run_cell).collect::<Result<Vec<_>, _>>()?
    };

    Ok(SweepOutcome {
        table: format_table(&patterns, &alphas, &ks, &cells),
        cells,
        records: records.path().to_path_buf(),
    })
}

fn cell_accuracy<T: Real>(cfg: &RunConfig, source: &Source, log: &MetricsLog) -> Result<f64, CliError> {
    let session = train::<T>(cfg, source, None, Some(log), None)?;
    let report = evaluate(cfg, source, session.trainer().pair().key())?;
    log.record(RecordKind::Eval, &report)?;
    Ok(report.accuracy)
}

/// One block per pattern with α rows and K columns.
pub fn format_table(patterns: &[SmoothingPattern], alphas: &[f64], ks: &[usize], cells: &[SweepCell]) -> String {
    let protocol = cells.first().map_or("accuracy", |c| match c.protocol {
        Protocol::Knn => "kNN accuracy",
        Protocol::Linear => "linear probe accuracy",
    });
    let headers: Vec<String> = ks.iter().map(|k| format!("K={k}")).collect();
    let labels: Vec<String> = alphas.iter().map(|a| format!("alpha={a}")).collect();
    let first = labels.iter().map(String::len).max().unwrap_or(0).max(5);
    let col = headers.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let mut cells = cells.iter();
    for (p, pattern) in patterns.iter().enumerate() {
        if p > 0 {
            out.push('\n');
        }
        let name = match pattern {
            SmoothingPattern::Average => "average",
            SmoothingPattern::LinearDecay => "linear_decay",
        };
        out.push_str(&format!("{protocol}, pattern {name}\n"));
        out.push_str(&format!("{:<first$}", ""));
        for h in &headers {
            out.push_str(&format!("  {h:>col$}"));
        }
        out.push('\n');
        for label in &labels {
            out.push_str(&format!("{label:<first$}"));
            for _ in ks {
                let acc = cells.next().map_or(f64::NAN, |c| c.accuracy);
                out.push_str(&format!("  {acc:>col$.4}"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(alpha: f64, k: usize, accuracy: f64) -> SweepCell {
        SweepCell {
            pattern: SmoothingPattern::LinearDecay,
            alpha,
            k,
            protocol: Protocol::Knn,
            accuracy,
            run: String::new(),
        }
    }

    #[test]
    fn table_is_aligned() {
        let cells = [
            cell(0.8, 5, 0.5),
            cell(0.8, 10, 0.25),
            cell(0.95, 5, 1.0),
            cell(0.95, 10, 0.125),
        ];
        let t = format_table(&[SmoothingPattern::LinearDecay], &[0.8, 0.95], &[5, 10], &cells);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "kNN accuracy, pattern linear_decay");
        assert_eq!(lines[1], "               K=5    K=10");
        assert_eq!(lines[2], "alpha=0.8   0.5000  0.2500");
        assert_eq!(lines[3], "alpha=0.95  1.0000  0.1250");
        assert!(lines[1..].iter().all(|l| l.len() == lines[1].len()));
    }
}
