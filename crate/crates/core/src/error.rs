use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// The capture file is not something this reader understands.
    #[error("capture format error: {0}")]
    CaptureFormat(String),

    /// The capture uses nanosecond timestamp resolution, which is not
    /// supported; only the microsecond format is accepted.
    #[error("unsupported capture: nanosecond timestamp resolution (magic {magic:#010x}); only microsecond-resolution files are accepted")]
    NanosecondCapture { magic: u32 },

    /// A packet was constructed with inconsistent lengths.
    #[error("invalid packet: {0}")]
    InvalidPacket(String),

    /// On-disk archive state is missing or structurally invalid.
    #[error("archive error: {0}")]
    Archive(String),

    /// A stored record failed integrity checks (bad magic, impossible
    /// lengths, undecodable content).
    #[error("corrupt record at {context} offset {offset}: {reason}")]
    Corrupt {
        context: String,
        offset: u64,
        reason: String,
    },

    /// A payload chunk reference points at data that has been evicted
    /// (or never existed). The bytes are gone; the error is explicit so
    /// callers never receive wrong data.
    #[error("payload data unavailable: chunk at segment {segment} offset {offset} is not readable (evicted or missing)")]
    DataUnavailable { segment: u64, offset: u64 },

    /// A configuration value is out of its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A query is malformed (e.g. no time range and no criteria).
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// A required file is absent.
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;
