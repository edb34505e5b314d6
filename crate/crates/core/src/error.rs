use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("gimbal lock: pitch {pitch} is within the guard band of ±π/2")]
    GimbalLock { pitch: f64 },
    #[error("trajectory must contain at least one pose")]
    EmptyTrajectory,
    #[error("{timestamps} timestamps supplied for {poses} poses")]
    TimestampCount { poses: usize, timestamps: usize },
    #[error("timestamps not strictly increasing at index {index}")]
    NonMonotoneTimestamps { index: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward requires a 1×1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("window of {window} needs {window} predictions, got {available}")]
    InsufficientHistory { window: usize, available: usize },
    #[error("{predictions} predictions but {truth} ground-truth rows")]
    LengthMismatch { predictions: usize, truth: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurriculumError {
    #[error("the curriculum has finished all of its stages")]
    TrainingComplete,
    #[error("invalid stage {index}: {reason}")]
    InvalidStage { index: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid sub-sequence range: {0}")]
    InvalidRange(String),
    #[error("invalid motion or feature model: {0}")]
    InvalidModel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no segment of length {length} m fits in a trajectory of {available:.3} m")]
    SegmentTooLong { length: f64, available: f64 },
    #[error("trajectories differ in length: {gt} vs {est}")]
    LineCountMismatch { gt: usize, est: usize },
    #[error("no frame has ground-truth motion above the degeneracy threshold")]
    DegenerateMotion,
    #[error("no segment lengths requested")]
    NoSegments,
}

/// Failure while reading or writing one of the on-disk formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl FormatError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
}
