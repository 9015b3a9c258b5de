//! Epoch loop over a [`ViewSource`]: shuffling, batching, view generation,
//! checkpointing and frozen-feature evaluation.
//!
//! All data randomness is a pure function of `(seed, epoch, step, row)`:
//! epoch `e` is shuffled with `data.fork(0).fork(e)` and sample `i` of step
//! `s` is augmented with `data.fork(1).fork(s).fork(i)`, where
//! `data = Rng::new(seed).fork(3)`. Views can therefore be generated in
//! parallel and a run resumed from any epoch boundary continues
//! bit-identically.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{stack_views, Split, ViewPair, ViewSource};
use crate::error::{Error, Result};
use crate::eval::{knn_classify, linear_probe, KnnConfig, KnnOutcome, ProbeConfig, ProbeOutcome};
use crate::model::{Checkpoint, Network, NetworkSpec};
use crate::optim::{StepReport, TrainPlan, Trainer};
use crate::tensor::{dot, Matrix, Real, Rng};

const STREAM_DATA: u64 = 3;
const FEATURE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    /// Zero-based index of the finished epoch.
    pub epoch: u64,
    pub steps: u64,
    pub mean_loss: f64,
    pub alpha: f64,
    pub lr: f64,
    /// Fraction of pairs in the epoch whose second view was swapped.
    pub false_positive_rate: f64,
}

pub struct Session<'a, S, T> {
    source: &'a S,
    trainer: Trainer<T>,
    data: Rng,
    epoch: u64,
}

fn steps_per_epoch(n_train: usize, batch: usize) -> Result<u64> {
    if n_train == 0 {
        return Err(Error::EmptyTrainSet);
    }
    let steps = n_train / batch;
    if steps == 0 {
        return Err(Error::InvalidConfig(format!(
            "batch size {batch} exceeds the {n_train} training samples"
        )));
    }
    Ok(steps as u64)
}

impl<'a, S: ViewSource, T: Real> Session<'a, S, T> {
    pub fn new(source: &'a S, plan: TrainPlan, spec: NetworkSpec) -> Result<Self> {
        if spec.input_dim() != source.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input vs data",
                expected: source.input_dim(),
                found: spec.input_dim(),
            });
        }
        let spe = steps_per_epoch(source.len(Split::Train), plan.batch_size)?;
        let data = Rng::new(plan.seed).fork(STREAM_DATA);
        Ok(Self {
            source,
            trainer: Trainer::new(plan, spec, spe)?,
            data,
            epoch: 0,
        })
    }

    /// Continues a run from a checkpoint written at an epoch boundary.
    pub fn resume(source: &'a S, plan: TrainPlan, ckpt: &Checkpoint<T>) -> Result<Self> {
        if ckpt.spec.input_dim() != source.input_dim() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint expects {}-dim inputs, data has {}",
                ckpt.spec.input_dim(),
                source.input_dim()
            )));
        }
        let spe = steps_per_epoch(source.len(Split::Train), plan.batch_size)?;
        if ckpt.step != ckpt.epoch * spe {
            return Err(Error::IncompatibleCheckpoint(format!(
                "step {} is not the start of epoch {} at {spe} steps per epoch",
                ckpt.step, ckpt.epoch
            )));
        }
        let data = Rng::from_state(ckpt.rng);
        if data != Rng::new(plan.seed).fork(STREAM_DATA) {
            return Err(Error::IncompatibleCheckpoint(
                "data stream does not match the configured seed".into(),
            ));
        }
        Ok(Self {
            source,
            trainer: Trainer::from_checkpoint(plan, spe, ckpt)?,
            data,
            epoch: ckpt.epoch,
        })
    }

    pub fn trainer(&self) -> &Trainer<T> {
        &self.trainer
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.trainer.plan().total_epochs
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        self.trainer.checkpoint(self.data.state(), self.epoch)
    }

    fn batch_views(&self, rows: &[usize], step: u64) -> Vec<ViewPair> {
        let views = self.data.fork(1).fork(step);
        rows.par_iter()
            .enumerate()
            .map(|(i, &row)| self.source.views(row, &mut views.fork(i as u64)))
            .collect()
    }

    pub fn run_epoch(&mut self, mut on_step: impl FnMut(&StepReport)) -> Result<EpochSummary> {
        let plan = self.trainer.plan().clone();
        let order = self
            .data
            .fork(0)
            .fork(self.epoch)
            .permutation(self.source.len(Split::Train));
        let spe = self.trainer.steps_per_epoch() as usize;
        let mut loss_sum = 0.0;
        let mut swapped = 0usize;
        let mut last = None;
        for rows in order.chunks_exact(plan.batch_size).take(spe) {
            let pairs = self.batch_views(rows, self.trainer.step());
            swapped += pairs.iter().filter(|p| p.is_false_positive).count();
            let (a, b) = stack_views::<T>(&pairs);
            let report = self.trainer.train_step(&a, &b)?;
            loss_sum += report.loss;
            on_step(&report);
            last = Some(report);
        }
        let last = last.expect("at least one step per epoch");
        let summary = EpochSummary {
            epoch: self.epoch,
            steps: spe as u64,
            mean_loss: loss_sum / spe as f64,
            alpha: last.alpha,
            lr: last.lr,
            false_positive_rate: swapped as f64 / (spe * plan.batch_size) as f64,
        };
        self.epoch += 1;
        Ok(summary)
    }

    /// Runs the remaining epochs of the schedule.
    pub fn run(
        &mut self,
        mut on_step: impl FnMut(&StepReport),
        mut on_epoch: impl FnMut(&EpochSummary, &Self) -> Result<()>,
    ) -> Result<()> {
        while !self.is_finished() {
            let summary = self.run_epoch(&mut on_step)?;
            on_epoch(&summary, self)?;
        }
        Ok(())
    }
}

/// Unit-normalized backbone features, computed in parallel chunks. Rows
/// whose features are all zero map to the first basis vector.
pub fn backbone_features<T: Real>(net: &Network<T>, inputs: &Matrix<T>) -> Result<Matrix<T>> {
    let dim = net.spec().feature_dim();
    let rows: Vec<usize> = (0..inputs.rows()).collect();
    let chunks = rows
        .par_chunks(FEATURE_CHUNK)
        .map(|idx| net.features(&inputs.select_rows(idx)))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(inputs.rows() * dim);
    for chunk in chunks {
        for row in chunk.iter_rows() {
            let norm = dot(row, row).sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite("backbone features"));
            }
            if norm.as_f64() < 1e-12 {
                data.push(T::one());
                data.extend(std::iter::repeat(T::zero()).take(dim - 1));
            } else {
                data.extend(row.iter().map(|&v| v / norm));
            }
        }
    }
    Ok(Matrix::from_vec_unchecked(inputs.rows(), dim, data))
}

/// kNN accuracy of eval-split features against train-split features.
pub fn knn_eval<S: ViewSource, T: Real>(source: &S, net: &Network<T>, config: &KnnConfig) -> Result<KnnOutcome> {
    let train = backbone_features(net, &source.inputs::<T>(Split::Train))?;
    let eval = backbone_features(net, &source.inputs::<T>(Split::Eval))?;
    knn_classify(
        &train,
        &source.labels(Split::Train),
        &eval,
        &source.labels(Split::Eval),
        config,
    )
}

pub fn probe_eval<S: ViewSource, T: Real>(source: &S, net: &Network<T>, config: &ProbeConfig) -> Result<ProbeOutcome> {
    let train = backbone_features(net, &source.inputs::<T>(Split::Train))?;
    let eval = backbone_features(net, &source.inputs::<T>(Split::Eval))?;
    linear_probe(
        &train,
        &source.labels(Split::Train),
        &eval,
        &source.labels(Split::Eval),
        config,
    )
}
