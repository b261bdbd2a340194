use std::path::PathBuf;

/// Errors produced anywhere in the evaluation engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mixed sample rates: {first} Hz and {other} Hz")]
    MixedSampleRates { first: u32, other: u32 },

    #[error("{what} is silent (zero power)")]
    SilentSignal { what: &'static str },

    #[error("impulse response is empty or all zeros")]
    DegenerateImpulseResponse,

    #[error("speed ratio must be positive, got {0}")]
    InvalidSpeedRatio(f64),

    #[error("audio has {samples} samples, shorter than one {frame_length}-sample frame")]
    AudioTooShort { samples: usize, frame_length: usize },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("input has {frames} frames; the network needs at least {min}")]
    TooFewFrames { frames: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("unsupported speed ratio {0} for label expansion")]
    UnknownSpeedRatio(f64),

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cohort {0}")]
    Cohort(String),

    #[error("{side} cohort scores have zero standard deviation")]
    DegenerateCohortStats { side: &'static str },

    #[error("empty enrollment set")]
    EmptyEnrollment,

    #[error("score sets are misaligned: {0}")]
    Misaligned(String),

    #[error("trial set needs at least one target and one nontarget trial")]
    SingleClass,

    #[error("empty ranking for query {0}")]
    EmptyRanking(usize),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("unresolvable utterance ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
