use thiserror::Error;

/// Stream validity violations. `index` is the position of the first
/// offending event in the input sequence.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("timestamp decreases at event {index} ({prev} -> {ts})")]
    Monotonicity { index: usize, prev: u64, ts: u64 },
    #[error("event {index} at ({x}, {y}) is outside the {width}x{height} sensor")]
    Bounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
}

impl StreamError {
    pub fn index(&self) -> usize {
        match self {
            StreamError::Monotonicity { index, .. } | StreamError::Bounds { index, .. } => *index,
        }
    }

    pub(crate) fn with_index(self, index: usize) -> Self {
        match self {
            StreamError::Monotonicity { prev, ts, .. } => {
                StreamError::Monotonicity { index, prev, ts }
            }
            StreamError::Bounds {
                x,
                y,
                width,
                height,
                ..
            } => StreamError::Bounds {
                index,
                x,
                y,
                width,
                height,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("sensor geometry must be non-zero, got {width}x{height}")]
    EmptyGeometry { width: u16, height: u16 },
    #[error("scale must be a power of two in 1..=256, got {0}")]
    Scale(u32),
    #[error("update factor exponent must be in 1..=8, got {0}")]
    UpdateFactor(u8),
    #[error("filter length must be positive")]
    FilterLength,
    #[error("global update {0} must be positive")]
    GlobalUpdate(&'static str),
    #[error("pipeline configuration: {0}")]
    Pipeline(String),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("bad magic {0:02x?}, expected \"EVS1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported stream version {0}")]
    Version(u16),
    #[error("truncated input: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("header declares {declared} events but payload holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },
    #[error("labels must be present on all events or on none (event {0} differs)")]
    MixedLabels(usize),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("event {0} carries no ground-truth label")]
    MissingLabel(usize),
    #[error("histogram has no bins")]
    EmptyHistogram,
    #[error("every histogram bin was discarded as motion")]
    AllBinsDiscarded,
    #[error("bin width must be positive")]
    BinWidth,
}

/// Throughput model rejections.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThroughputError {
    #[error("update period of {period_cycles} cycles cannot absorb {blocked} blocked cycles")]
    Saturated { period_cycles: f64, blocked: u64 },
    #[error("clock frequency and update period must be positive")]
    NonPositive,
}

/// Umbrella error for workflows that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Throughput(#[from] ThroughputError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
