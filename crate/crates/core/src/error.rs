use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero-length vector")]
    ZeroVector,

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("expected a unit-norm vector, found norm {norm}")]
    NotUnitNorm { norm: f64 },

    #[error("at least one negative similarity is required")]
    EmptyNegatives,

    #[error("K = {k} exceeds the {available} available negatives")]
    KTooLarge { k: usize, available: usize },

    #[error("{weights} smoothing weights supplied for {negatives} negatives")]
    MisalignedWeights { weights: usize, negatives: usize },

    #[error("invalid smoothing weights: {0}")]
    InvalidWeights(String),

    #[error("negative queue is empty")]
    EmptyQueue,

    #[error("batch of {batch} keys does not fit a queue of capacity {capacity}")]
    BatchTooLarge { batch: usize, capacity: usize },

    #[error("forward cache does not match the network or upstream gradient")]
    StaleCache,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("malformed data file: {0}")]
    MalformedFile(String),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric failure at step {step}: {reason}\n{dump}")]
    NumericFailure { step: u64, reason: String, dump: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
