use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient repeats for variance estimation: need at least 2, got {0}")]
    InsufficientRepeats(usize),

    #[error("attribute {attribute} has {repeats} repeats; moment estimation needs at least 2")]
    AttributeUnderRepeated { attribute: usize, repeats: u32 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid repeat vector: {0}")]
    InvalidRepeatVector(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("symmetric eigendecomposition did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("enumeration of feasible repeat vectors exceeds the limit of {limit}")]
    EnumerationTooLarge { limit: usize },

    #[error("repeat mismatch: dataset has {dataset:?}, predictor expects {expected:?}")]
    RepeatMismatch { dataset: Vec<u32>, expected: Vec<u32> },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("cannot top up attribute {attribute}: target {target} is below the existing {existing} judgments")]
    TopUpBelowExisting {
        attribute: usize,
        existing: u32,
        target: u32,
    },

    #[error("attribute {attribute} has {available} judgments but {required} are required")]
    InsufficientJudgments {
        attribute: usize,
        available: u32,
        required: u32,
    },

    #[error("model has no closed-form truth: {0}")]
    IntractableModel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed dataset file: {0}")]
    MalformedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
