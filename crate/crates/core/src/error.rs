use thiserror::Error;

/// Errors raised across framing, kernels, tables and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ADU payload is empty")]
    EmptyAdu,
    #[error("invalid ADU: {0}")]
    InvalidAdu(String),
    #[error("wrong ADU kind: expected {expected}, got {got}")]
    WrongKind { expected: String, got: String },
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("tile map does not match input: {0}")]
    MapMismatch(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("no vocabulary token covers byte {byte:#04x} at offset {offset}")]
    NoToken { offset: usize, byte: u8 },
    #[error("out-of-order transaction: expected seq {expected}, got {got}")]
    SequenceError { expected: u64, got: u64 },
    #[error("table {table}: key {key} outside domain")]
    TableMiss { table: String, key: u64 },
    #[error("channel FIFO overflow: capacity {capacity} elements")]
    FifoOverflow { capacity: usize },
    #[error("row buffer too small: {configured} rows configured, {required} required")]
    BufferTooSmall { configured: usize, required: usize },
    #[error("metadata too small: {needed} bytes needed, {available} available")]
    MetaTooSmall { needed: usize, available: usize },
    #[error("token splice failed: no anchor near offset {chunk_start}")]
    ResyncFailure { chunk_start: usize },
    #[error("pipeline type error: {0}")]
    PipelineTypeError(String),
    #[error("no variants to compare")]
    NoVariants,
    #[error("cannot compare outputs: {0}")]
    CompareError(String),
    #[error("unknown corpus kind: {0}")]
    BadKind(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
