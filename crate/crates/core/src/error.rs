use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("array has {have} elements but order {order} needs at least {need}")]
    Undersampled { order: usize, have: usize, need: usize },
    #[error("expected a {expected} geometry, got {got}")]
    Role { expected: &'static str, got: &'static str },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty signal")]
    EmptySignal,
    #[error("no sample exceeds the onset threshold (silent impulse response)")]
    OnsetNotFound,
    #[error("degenerate loudspeaker layout: {0}")]
    DegenerateLayout(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("invalid filterbank parameters: {0}")]
    Filterbank(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("wav error: {0}")]
    Wav(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
