//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration file or override could not be parsed or is inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// A training log holds too few snapshot pairs for one voltage vector.
    #[error(
        "insufficient training data for voltage vector {vector_index}: \
         {got} snapshot pairs, need at least {need}"
    )]
    InsufficientData {
        vector_index: u8,
        got: usize,
        need: usize,
    },

    /// A spectral window does not span an integer number of fundamental periods.
    #[error("dft window: {0}")]
    Window(String),

    /// Harmonic distortion is undefined because the fundamental amplitude is zero.
    #[error("thd: fundamental amplitude is zero")]
    ZeroFundamental,

    /// A steady-state segment is too short for the requested averaging window.
    #[error("segment too short: {0}")]
    SegmentTooShort(String),

    /// No reference step was found at the requested time.
    #[error("no reference step at t = {0} s")]
    StepNotFound(f64),

    /// A persisted model bank file is malformed.
    #[error("model bank format: {0}")]
    BankFormat(String),

    /// A persisted trajectory log is malformed.
    #[error("log format: {0}")]
    LogFormat(String),

    /// A command needs a trained model bank that does not exist on disk.
    #[error("missing model bank: {} (run `kdrive train` first)", .0.display())]
    MissingModel(PathBuf),

    /// Underlying I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
