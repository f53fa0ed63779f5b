use thiserror::Error;

/// Errors raised anywhere in the ingestion, analysis or detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: value is not finite")]
    NonFinite { line: usize },

    #[error("line {line}: date label {label:?} does not follow the previous one")]
    NonIncreasingDates { line: usize, label: String },

    #[error("series has {len} values, at least 2 are required")]
    TooShort { len: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("window [{start}, {start}+{window}+{lag}) exceeds series length {len}")]
    WindowOutOfBounds {
        start: usize,
        window: usize,
        lag: usize,
        len: usize,
    },

    #[error("degenerate window at {start}: {survivors} nonzero increments, need {required}")]
    DegenerateWindow {
        start: usize,
        survivors: usize,
        required: usize,
    },

    #[error("partition function overflows at q = {q}")]
    Overflow { q: f64 },

    #[error("mapped index {index} is beyond the series end ({len})")]
    IndexBeyondSeries { index: usize, len: usize },

    #[error("no analysis window fits the series")]
    NoWindowFits,

    #[error("every analysis window is degenerate")]
    AllDegenerate,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure category, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Config,
    Degenerate,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::NonFinite { .. }
            | Error::NonIncreasingDates { .. }
            | Error::TooShort { .. }
            | Error::InvalidSeries(_) => ErrorKind::Parse,
            Error::InvalidSpec(_)
            | Error::InvalidConfig(_)
            | Error::WindowOutOfBounds { .. }
            | Error::IndexBeyondSeries { .. }
            | Error::NoWindowFits => ErrorKind::Config,
            Error::DegenerateWindow { .. } | Error::Overflow { .. } | Error::AllDegenerate => {
                ErrorKind::Degenerate
            }
            Error::Io(_) => ErrorKind::Io,
        }
    }

    /// Process exit status: 2 parse, 3 config, 4 degenerate data, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Parse => 2,
            ErrorKind::Config => 3,
            ErrorKind::Degenerate => 4,
            ErrorKind::Io => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
