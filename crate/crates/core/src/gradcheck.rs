//! Central finite-difference checks of every hand-written gradient, in
//! double precision.
//!
//! Relative error is `|a - n| / max(|a|, |n|, 1e-3)`; the floor keeps
//! components that are zero analytically from dividing roundoff by zero.

use serde::Serialize;

use crate::error::Result;
use crate::losses::{
    beta_weights, directional_loss_with_weights, info_nce, soft_nce, AlphaSchedule, KPolicy, SmoothWeights,
    SmoothingConfig, SmoothingPattern,
};
use crate::model::{normalize_backward, Network, NetworkSpec};
use crate::tensor::{dot, Rng};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub trials: usize,
    pub step: f64,
    pub threshold: f64,
    /// Scales every analytic gradient by 1.01 to exercise the failure path.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 200,
            step: DEFAULT_STEP,
            threshold: DEFAULT_THRESHOLD,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub trials: usize,
    pub components: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub cases: Vec<CaseReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Largest relative error between `analytic` and the central difference of
/// `f` around `x`.
pub fn compare(x: &[f64], analytic: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        let e = rel_err(analytic[i], numeric);
        // NaN must count as a failure
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    }
    Ok(worst)
}

struct Trial {
    max_rel_err: f64,
    components: usize,
}

fn corrupt(grad: &mut [f64], on: bool) {
    if on {
        for g in grad.iter_mut() {
            *g *= 1.01;
        }
    }
}

fn sims(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

fn info_nce_trial(rng: &mut Rng, opts: &GradcheckOptions) -> Result<Trial> {
    let n = 1 + rng.below(64) as usize;
    let tau = rng.uniform_range(0.05, 1.0);
    let x = sims(rng, n + 1);
    let (_, mut grad) = info_nce(x[0], &x[1..], tau)?;
    corrupt(&mut grad, opts.corrupt);
    let max_rel_err = compare(&x, &grad, opts.step, |p| Ok(info_nce(p[0], &p[1..], tau)?.0))?;
    Ok(Trial {
        max_rel_err,
        components: x.len(),
    })
}

fn smoothing(pattern: SmoothingPattern, k: usize, tau: f64) -> SmoothingConfig {
    SmoothingConfig {
        pattern,
        k,
        alpha: AlphaSchedule::Static { alpha: 0.8 },
        tau,
        k_policy: KPolicy::Checked,
    }
}

fn soft_nce_trial(rng: &mut Rng, opts: &GradcheckOptions, pattern: SmoothingPattern, k: usize) -> Result<Trial> {
    let n = k + rng.below(40) as usize;
    let tau = rng.uniform_range(0.05, 1.0);
    let alpha = rng.uniform_range(0.5, 1.0);
    let x = sims(rng, n + 1);
    let weights = beta_weights(&x[1..], &smoothing(pattern, k, tau), alpha)?;
    let (_, mut grad) = soft_nce(x[0], &x[1..], &weights, tau)?;
    corrupt(&mut grad, opts.corrupt);
    let max_rel_err = compare(&x, &grad, opts.step, |p| Ok(soft_nce(p[0], &p[1..], &weights, tau)?.0))?;
    Ok(Trial {
        max_rel_err,
        components: x.len(),
    })
}

/// SoftNCE of `normalize(u)` against fixed unit keys, differentiated with
/// respect to the unnormalized projector output `u`.
fn normalization_trial(rng: &mut Rng, opts: &GradcheckOptions) -> Result<Trial> {
    let dim = 2 + rng.below(15) as usize;
    let n = 5 + rng.below(20) as usize;
    let tau = rng.uniform_range(0.1, 1.0);
    let keys = rng.unit_rows::<f64>(n + 1, dim);
    let u: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.2, 3.0) * rng.normal()).collect();
    let cfg = smoothing(SmoothingPattern::LinearDecay, 5, tau);
    let alpha = rng.uniform_range(0.5, 1.0);

    let sims_of = |u: &[f64]| -> Result<Vec<f64>> {
        let z = crate::tensor::l2_normalize(u)?;
        Ok(keys.iter_rows().map(|k| dot(&z, k)).collect())
    };
    let s = sims_of(&u)?;
    let weights: SmoothWeights = beta_weights(&s[1..], &cfg, alpha)?;
    let (_, dsims) = soft_nce(s[0], &s[1..], &weights, tau)?;
    let mut dz = vec![0.0; dim];
    for (g, k) in dsims.iter().zip(keys.iter_rows()) {
        for (d, &kv) in dz.iter_mut().zip(k) {
            *d += g * kv;
        }
    }
    let mut grad = normalize_backward(&u, &dz)?;
    corrupt(&mut grad, opts.corrupt);
    let max_rel_err = compare(&u, &grad, opts.step, |p| {
        let s = sims_of(p)?;
        Ok(soft_nce(s[0], &s[1..], &weights, tau)?.0)
    })?;
    Ok(Trial {
        max_rel_err,
        components: dim,
    })
}

/// Batch SoftNCE through the whole query network (backbone, projector,
/// normalization) with respect to every parameter. Smoothing weights are
/// frozen at the base point.
fn encoder_trial(rng: &mut Rng, opts: &GradcheckOptions) -> Result<Trial> {
    let spec = NetworkSpec::new(vec![6, 10, 8], 9, 5)?;
    let batch = 4;
    // nonzero biases so the point is generic; redraw if a row's output dies
    let (net, inputs, fwd) = loop {
        let mut net = Network::<f64>::new(spec.clone(), rng)?;
        for l in 0..net.num_layers() {
            for b in net.layer_mut(l).1 {
                *b = rng.uniform_range(-0.2, 0.2);
            }
        }
        let inputs = rng.normal_matrix::<f64>(batch, spec.input_dim(), 1.0);
        if let Ok(fwd) = net.forward(&inputs) {
            break (net, inputs, fwd);
        }
    };
    let keys = rng.unit_rows::<f64>(batch, spec.embed_dim);
    let negatives = rng.unit_rows::<f64>(12, spec.embed_dim);
    let pattern = if rng.bernoulli(0.5) {
        SmoothingPattern::Average
    } else {
        SmoothingPattern::LinearDecay
    };
    let k = [1, 2, 5][rng.below(3) as usize];
    let cfg = smoothing(pattern, k, rng.uniform_range(0.1, 0.5));
    let alpha = rng.uniform_range(0.7, 1.0);

    let sims = fwd.embeddings.matmul_transposed(&negatives)?;
    let weights = sims
        .iter_rows()
        .map(|row| beta_weights(row, &cfg, alpha))
        .collect::<Result<Vec<_>>>()?;
    let loss = directional_loss_with_weights(&fwd.embeddings, &keys, &negatives, &cfg, &weights, false)?;
    let mut grad = net.backward(&fwd.cache, &loss.grad_query)?;
    corrupt(&mut grad, opts.corrupt);

    let params = net.params().to_vec();
    let max_rel_err = compare(&params, &grad, opts.step, |p| {
        let probe = Network::from_params(spec.clone(), p.to_vec())?;
        let z = probe.embed(&inputs)?;
        Ok(directional_loss_with_weights(&z, &keys, &negatives, &cfg, &weights, false)?.value)
    })?;
    Ok(Trial {
        max_rel_err,
        components: params.len(),
    })
}

fn run_case(
    name: String,
    index: u64,
    opts: &GradcheckOptions,
    trial: impl Fn(&mut Rng, &GradcheckOptions) -> Result<Trial>,
) -> Result<CaseReport> {
    let case_rng = Rng::new(opts.seed).fork(index);
    let mut worst = 0.0f64;
    let mut components = 0;
    for t in 0..opts.trials {
        let mut rng = case_rng.fork(t as u64);
        let r = trial(&mut rng, opts)?;
        worst = worst.max(r.max_rel_err);
        components += r.components;
    }
    Ok(CaseReport {
        name,
        trials: opts.trials,
        components,
        max_rel_err: worst,
        passed: worst < opts.threshold,
    })
}

/// Runs every suite for `opts.trials` random configurations each.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut cases = vec![run_case("info_nce".into(), 0, opts, info_nce_trial)?];
    let mut index = 1;
    for (pattern, label) in [
        (SmoothingPattern::Average, "average"),
        (SmoothingPattern::LinearDecay, "linear_decay"),
    ] {
        for k in [1, 2, 5, 20] {
            cases.push(run_case(format!("soft_nce/{label}/k={k}"), index, opts, |rng, o| {
                soft_nce_trial(rng, o, pattern, k)
            })?);
            index += 1;
        }
    }
    cases.push(run_case(
        "normalization_jacobian".into(),
        index,
        opts,
        normalization_trial,
    )?);
    cases.push(run_case("encoder_chain".into(), index + 1, opts, encoder_trial)?);
    Ok(GradcheckReport { cases })
}
