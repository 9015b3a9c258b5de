use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{alpha_at, directional_loss, symmetric_pair_loss, LossKind, SmoothingConfig};
use crate::membank::NegativeQueue;
use crate::model::{momentum_at, Checkpoint, EncoderPair, NetworkSpec};
use crate::tensor::{Matrix, Real, Rng, RngState};

use super::{lr_at, sgd_step, SgdState};

/// Schedules and hyperparameters of a pretraining run. The temperature
/// lives in `smoothing.tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainPlan {
    pub base_lr: f64,
    pub warmup_epochs: u64,
    pub total_epochs: u64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub sgd_momentum: f64,
    pub loss: LossKind,
    pub smoothing: SmoothingConfig,
    pub queue_capacity: usize,
    pub ema_m0: f64,
    pub symmetric: bool,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            base_lr: 0.2,
            warmup_epochs: 5,
            total_epochs: 200,
            batch_size: 128,
            weight_decay: 1e-4,
            sgd_momentum: 0.9,
            loss: LossKind::SoftNce,
            smoothing: SmoothingConfig::default(),
            queue_capacity: 4096,
            ema_m0: 0.99,
            symmetric: true,
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.total_epochs > 0 && self.warmup_epochs >= self.total_epochs {
            return bad(format!(
                "warmup_epochs ({}) must be below total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            ));
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("weight_decay", self.weight_decay),
            ("sgd_momentum", self.sgd_momentum),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.ema_m0) {
            return bad(format!("ema_m0 must lie in [0, 1), got {}", self.ema_m0));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let per_step = self.batch_size * if self.symmetric { 2 } else { 1 };
        if per_step > self.queue_capacity {
            return bad(format!(
                "queue_capacity {} cannot hold the {per_step} keys enqueued per step",
                self.queue_capacity
            ));
        }
        self.smoothing.validate()?;
        if self.loss == LossKind::SoftNce && self.smoothing.k > self.queue_capacity {
            return bad(format!(
                "smoothing K = {} exceeds queue capacity {}",
                self.smoothing.k, self.queue_capacity
            ));
        }
        Ok(())
    }
}

/// Metrics of one optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub epoch: u64,
    pub lr: f64,
    pub momentum: f64,
    pub alpha: f64,
    pub loss: f64,
    pub grad_norm: f64,
    /// Largest enqueue stamp among the negatives this step used; always
    /// below `step + 1`, the stamp of this step's own keys.
    pub newest_negative_stamp: u64,
}

const STREAM_INIT: u64 = 1;
const STREAM_QUEUE: u64 = 2;

/// Query/key networks, optimizer state and negative queue of one run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    plan: TrainPlan,
    steps_per_epoch: u64,
    pair: EncoderPair<T>,
    sgd: SgdState<T>,
    queue: NegativeQueue<T>,
    step: u64,
}

struct Forward<T> {
    loss: f64,
    grads: Vec<T>,
    keys: Vec<Matrix<T>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(plan: TrainPlan, spec: NetworkSpec, steps_per_epoch: u64) -> Result<Self> {
        plan.validate()?;
        if steps_per_epoch == 0 {
            return Err(Error::InvalidConfig("an epoch needs at least one step".into()));
        }
        let root = Rng::new(plan.seed);
        let pair = EncoderPair::init(spec.clone(), &mut root.fork(STREAM_INIT))?;
        let queue = NegativeQueue::prefilled(plan.queue_capacity, spec.embed_dim, &mut root.fork(STREAM_QUEUE))?;
        Ok(Self {
            sgd: SgdState::new(spec.param_count()),
            plan,
            steps_per_epoch,
            pair,
            queue,
            step: 0,
        })
    }

    pub fn from_checkpoint(plan: TrainPlan, steps_per_epoch: u64, ckpt: &Checkpoint<T>) -> Result<Self> {
        plan.validate()?;
        let pair = ckpt.encoder_pair()?;
        let queue = ckpt.negative_queue()?;
        if queue.capacity() != plan.queue_capacity || queue.dim() != ckpt.spec.embed_dim {
            return Err(Error::IncompatibleCheckpoint(format!(
                "queue {}x{} does not match plan capacity {} / embedding {}",
                queue.capacity(),
                queue.dim(),
                plan.queue_capacity,
                ckpt.spec.embed_dim
            )));
        }
        if ckpt.velocity.len() != ckpt.spec.param_count() {
            return Err(Error::IncompatibleCheckpoint("velocity length".into()));
        }
        Ok(Self {
            plan,
            steps_per_epoch,
            pair,
            sgd: SgdState {
                velocity: ckpt.velocity.clone(),
            },
            queue,
            step: ckpt.step,
        })
    }

    pub fn checkpoint(&self, rng: RngState, epoch: u64) -> Checkpoint<T> {
        Checkpoint {
            spec: self.pair.query.spec().clone(),
            query: self.pair.query.params().to_vec(),
            key: self.pair.key().params().to_vec(),
            velocity: self.sgd.velocity.clone(),
            rng,
            step: self.step,
            epoch,
            queue: self.queue.to_parts(),
        }
    }

    pub fn plan(&self) -> &TrainPlan {
        &self.plan
    }

    pub fn pair(&self) -> &EncoderPair<T> {
        &self.pair
    }

    pub fn queue(&self) -> &NegativeQueue<T> {
        &self.queue
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.steps_per_epoch
    }

    pub fn total_steps(&self) -> u64 {
        self.plan.total_epochs * self.steps_per_epoch
    }

    fn alpha_for(&self, epoch: u64) -> f64 {
        match self.plan.loss {
            LossKind::InfoNce => 1.0,
            LossKind::SoftNce => alpha_at(epoch, self.plan.total_epochs, self.plan.smoothing.alpha),
        }
    }

    fn check_views(&self, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(Error::ShapeMismatch(format!(
                "view batches {}x{} and {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("input views"));
        }
        let per_step = a.rows() * if self.plan.symmetric { 2 } else { 1 };
        if per_step > self.queue.capacity() {
            return Err(Error::BatchTooLarge {
                batch: per_step,
                capacity: self.queue.capacity(),
            });
        }
        Ok(())
    }

    fn forward(&self, a: &Matrix<T>, b: &Matrix<T>, alpha: f64, want_grads: bool) -> Result<Forward<T>> {
        let negatives = self.queue.snapshot();
        let cfg = &self.plan.smoothing;
        let kind = self.plan.loss;
        let query = &self.pair.query;
        let key = self.pair.key();
        let qa = query.forward(a)?;
        let kb = key.embed(b)?;
        if self.plan.symmetric {
            let qb = query.forward(b)?;
            let ka = key.embed(a)?;
            let out = symmetric_pair_loss(&qa.embeddings, &kb, &qb.embeddings, &ka, &negatives, cfg, kind, alpha)?;
            let grads = if want_grads {
                let mut g = query.backward(&qa.cache, &out.a_to_b.grad_query)?;
                let g2 = query.backward(&qb.cache, &out.b_to_a.grad_query)?;
                for (x, y) in g.iter_mut().zip(g2) {
                    *x += y;
                }
                g
            } else {
                Vec::new()
            };
            Ok(Forward {
                loss: out.value,
                grads,
                keys: vec![kb, ka],
            })
        } else {
            let out = directional_loss(&qa.embeddings, &kb, &negatives, cfg, kind, alpha, false)?;
            let grads = if want_grads {
                query.backward(&qa.cache, &out.grad_query)?
            } else {
                Vec::new()
            };
            Ok(Forward {
                loss: out.value,
                grads,
                keys: vec![kb],
            })
        }
    }

    /// Loss the next step would see for these views, without side effects.
    pub fn evaluate(&self, views_a: &Matrix<T>, views_b: &Matrix<T>) -> Result<f64> {
        self.check_views(views_a, views_b)?;
        let alpha = self.alpha_for(self.step / self.steps_per_epoch);
        Ok(self.forward(views_a, views_b, alpha, false)?.loss)
    }

    /// One optimization step on a batch of view pairs. Keys produced here
    /// enter the queue only after the loss and update are done.
    pub fn train_step(&mut self, views_a: &Matrix<T>, views_b: &Matrix<T>) -> Result<StepReport> {
        self.check_views(views_a, views_b)?;
        let step = self.step;
        let epoch = step / self.steps_per_epoch;
        let alpha = self.alpha_for(epoch);
        let lr = lr_at(step, self.steps_per_epoch, &self.plan);
        let momentum = momentum_at(step, self.total_steps(), self.plan.ema_m0);
        let newest_negative_stamp = self.queue.newest_stamp().unwrap_or(0);

        let fwd = match self.forward(views_a, views_b, alpha, true) {
            Ok(f) => f,
            Err(Error::NonFinite(what)) => {
                return Err(Error::NumericFailure {
                    step,
                    reason: format!("non-finite values in {what}"),
                    dump: self.state_dump(epoch, lr, momentum, alpha),
                })
            }
            Err(e) => return Err(e),
        };
        let grad_norm = fwd
            .grads
            .iter()
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum::<f64>()
            .sqrt();
        if !fwd.loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NumericFailure {
                step,
                reason: format!("loss {} / gradient norm {grad_norm}", fwd.loss),
                dump: self.state_dump(epoch, lr, momentum, alpha),
            });
        }

        sgd_step(
            self.pair.query.params_mut(),
            &fwd.grads,
            lr,
            self.plan.weight_decay,
            self.plan.sgd_momentum,
            &mut self.sgd,
        )?;
        if self.pair.query.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFailure {
                step,
                reason: "non-finite parameters after update".into(),
                dump: self.state_dump(epoch, lr, momentum, alpha),
            });
        }
        self.pair.ema_update(momentum);
        for keys in &fwd.keys {
            self.queue.enqueue_stamped(keys, step + 1)?;
        }
        self.step += 1;
        Ok(StepReport {
            step,
            epoch,
            lr,
            momentum,
            alpha,
            loss: fwd.loss,
            grad_norm,
            newest_negative_stamp,
        })
    }

    fn state_dump(&self, epoch: u64, lr: f64, momentum: f64, alpha: f64) -> String {
        let norm = |p: &[T]| p.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        let mut s = String::new();
        let _ = writeln!(s, "step={} epoch={epoch} lr={lr} m={momentum} alpha={alpha}", self.step);
        let _ = writeln!(
            s,
            "query_param_norm={} key_param_norm={} velocity_norm={}",
            norm(self.pair.query.params()),
            norm(self.pair.key().params()),
            norm(&self.sgd.velocity)
        );
        let nonfinite = self.pair.query.params().iter().filter(|p| !p.is_finite()).count();
        let _ = writeln!(s, "non_finite_query_params={nonfinite} queue_len={}", self.queue.len());
        s
    }
}
