//! Desk-scale momentum-contrast pretraining with SoftNCE: InfoNCE whose
//! one-hot target is smoothed over the top-K hardest negatives in the
//! memory queue.
//!
//! Everything is implemented on a small dense tensor core with hand-written
//! gradients, so every derivative can be checked against finite
//! differences (see [`gradcheck`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod membank;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod tensor;

pub use data::{LabeledDataset, Split, SynthConfig, SynthDataset, ViewPair, ViewSource};
pub use error::{Error, Result};
pub use eval::{KnnConfig, ProbeConfig, Vote};
pub use losses::{LossKind, SmoothWeights, SmoothingConfig, SmoothingPattern};
pub use membank::NegativeQueue;
pub use model::{Checkpoint, EncoderPair, Network, NetworkSpec};
pub use optim::{StepReport, TrainPlan, Trainer};
pub use pipeline::{EpochSummary, Session};
pub use tensor::{Matrix, Precision, Real, Rng};
