use lightcon::gradcheck::{run_gradcheck, GradcheckOptions, GradcheckReport};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct GradcheckArgs {
    pub seed: u64,
    pub trials: usize,
    pub corrupt: bool,
}

impl Default for GradcheckArgs {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 200,
            corrupt: false,
        }
    }
}

/// Returns the report even when a case fails; callers decide the exit
/// status from [`GradcheckReport::passed`].
pub fn gradcheck(args: &GradcheckArgs) -> Result<GradcheckReport, CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("gradcheck needs at least one trial".into()));
    }
    Ok(run_gradcheck(&GradcheckOptions {
        seed: args.seed,
        trials: args.trials,
        corrupt: args.corrupt,
        ..GradcheckOptions::default()
    })?)
}

pub fn format_report(report: &GradcheckReport, threshold: f64) -> String {
    let width = report.cases.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>10}  {:>12}  result\n",
        "case", "trials", "components", "max rel err"
    );
    for c in &report.cases {
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>10}  {:>12.3e}  {}\n",
            c.name,
            c.trials,
            c.components,
            c.max_rel_err,
            if c.passed { "pass" } else { "FAIL" }
        ));
    }
    out.push_str(&format!(
        "max relative error {:.3e} (threshold {threshold:.0e}): {}\n",
        report.max_rel_err(),
        if report.passed() { "pass" } else { "FAIL" }
    ));
    out
}
