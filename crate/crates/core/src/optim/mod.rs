//! SGD, the learning-rate schedule, and the training step that wires the
//! losses, networks and negative queue together.

mod sgd;
mod trainer;

pub use sgd::{lr_at, sgd_step, SgdState};
pub use trainer::{StepReport, TrainPlan, Trainer};
