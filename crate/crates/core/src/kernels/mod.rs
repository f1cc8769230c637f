//! Streamed kernels: the device side of the equivalence.
//!
//! A kernel sees one [`Transaction`] per [`Kernel::push`] and keeps whatever
//! it needs between pushes in its own state. [`Kernel::flush`] drains what is
//! still buffered once the last transaction has been pushed.

mod normalize;
mod resize;
mod text;
mod tokenizer;

pub use normalize::{NormalizeMode, ReshapeScaleKernel, StreamNormalizeKernel};
pub use resize::{FullBufferResizeKernel, InterpUnit, RowBufferResizeKernel, TileResizeKernel};
pub use text::{IdentityKernel, TextNormalizeKernel};
pub use tokenizer::{
    decode_tokens, encode_token, naive_chunked_tokenize, splice_tokens, ChunkedTokenizerKernel, SpliceMode,
    TOKEN_RECORD_BYTES,
};

use serde::{Deserialize, Serialize};

use crate::cost::CycleCostTable;
use crate::error::{Error, Result};
use crate::lut::TieredTable;
use crate::reference::Token;
use crate::stream::Transaction;

/// What the bytes of a stream mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// Row-major HWC u8 pixels.
    ImageU8,
    /// u8 pixels grouped in 4-pixel tiles, one tile per output pixel.
    TileStream,
    /// Planar CHW little-endian f32.
    TensorF32,
    Text,
    /// 8-byte records: token id, start offset (both u32 LE).
    Tokens,
}

impl std::fmt::Display for StreamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Abstract operations a push performed. Lookup cycles are already
/// tier-dependent; everything else is priced by a [`CycleCostTable`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub lookup_cycles: u64,
    pub lookups: u64,
    pub memory_stall_cycles: u64,
    pub memory_writes: u64,
    pub int_adds: u64,
    pub int_muls: u64,
    pub float_adds: u64,
    pub float_muls: u64,
    pub float_divs: u64,
    pub compares: u64,
}

impl OpCounts {
    pub fn compute_cycles(&self, costs: &CycleCostTable) -> u64 {
        self.lookup_cycles
            + self.memory_writes * costs.memory_write
            + self.int_adds * costs.int_add
            + self.int_muls * costs.int_mul
            + self.float_adds * costs.float_add
            + self.float_muls * costs.float_mul
            + self.float_divs * costs.float_div
            + self.compares * costs.compare
    }

    pub fn accumulate(&mut self, other: &OpCounts) {
        self.lookup_cycles += other.lookup_cycles;
        self.lookups += other.lookups;
        self.memory_stall_cycles += other.memory_stall_cycles;
        self.memory_writes += other.memory_writes;
        self.int_adds += other.int_adds;
        self.int_muls += other.int_muls;
        self.float_adds += other.float_adds;
        self.float_muls += other.float_muls;
        self.float_divs += other.float_divs;
        self.compares += other.compares;
    }

    /// Charges one table read, splitting the slow-tier penalty out as stall.
    pub(crate) fn lookup(&mut self, table: &TieredTable, cycles: u64) {
        self.lookups += 1;
        self.lookup_cycles += cycles;
        self.memory_stall_cycles += cycles.saturating_sub(table.placement.fast_hit_cycles);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelOutput {
    pub out_txns: Vec<Transaction>,
    pub ops: OpCounts,
    /// Cycles lost to slow-tier table reads.
    pub stall_cycles: u64,
}

impl KernelOutput {
    fn new(out_txns: Vec<Transaction>, ops: OpCounts) -> Self {
        Self { stall_cycles: ops.memory_stall_cycles, out_txns, ops }
    }
}

/// Snapshot of a kernel's streaming state.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelState {
    Stateless { next_seq: u64 },
    Fifos { depths: Vec<usize>, capacity: usize, draining: usize },
    RowBuffer { rows_held: usize, depth_rows: usize, row_fill: usize, next_out_row: usize },
    Tiles { tile_fill: usize, next_out_pixel: usize },
    FullBuffer { filled: usize, total: usize },
    Tokenizer { overlap_len: usize, pending: Vec<Token>, chunk_start: usize },
    Elementwise { carry: usize, elements: usize },
}

/// Observer of which input bytes each output unit was computed from.
///
/// Indices are absolute positions in the kernel's input byte stream.
pub trait AccessProbe {
    fn read(&mut self, index: u64);
    /// Closes the current output unit.
    fn emit(&mut self);
}

/// Probe that records nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoProbe;

impl AccessProbe for NoProbe {
    #[inline]
    fn read(&mut self, _: u64) {}
    #[inline]
    fn emit(&mut self) {}
}

/// Uniform streaming interface.
pub trait Kernel: Send {
    fn name(&self) -> &str;
    fn input_kind(&self) -> StreamKind;
    fn output_kind(&self) -> StreamKind;
    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput>;
    fn flush(&mut self, probe: &mut dyn AccessProbe) -> Result<KernelOutput>;
    fn state(&self) -> KernelState;

    /// Bytes of on-device buffering this kernel is built with.
    fn buffer_bytes(&self) -> u64 {
        0
    }

    /// Metadata bytes per transaction the kernel relies on.
    fn meta_bytes(&self) -> u64 {
        0
    }

    fn tables(&self) -> Vec<&TieredTable> {
        Vec::new()
    }

    /// Internal pipeline depth; a push occupies the kernel for
    /// `ceil(cycles / stages)` while its result still takes `cycles`.
    fn pipeline_stages(&self) -> u64 {
        1
    }
}

/// Enforces consecutive sequence numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct SeqGuard {
    next: u64,
}

impl SeqGuard {
    pub(crate) fn check(&mut self, txn: &Transaction) -> Result<()> {
        if txn.seq != self.next {
            return Err(Error::SequenceError { expected: self.next, got: txn.seq });
        }
        self.next += 1;
        Ok(())
    }

    pub(crate) fn next(&self) -> u64 {
        self.next
    }
}

/// Absolute input index of byte `offset` of `txn`.
#[inline]
pub(crate) fn stream_index(txn: &Transaction, offset: usize) -> u64 {
    txn.seq * txn.bus_width() as u64 + offset as u64
}

/// Pushes every transaction then flushes; returns all output transactions.
pub fn run_kernel(kernel: &mut dyn Kernel, txns: &[Transaction]) -> Result<Vec<Transaction>> {
    let mut out = Vec::new();
    for t in txns {
        out.extend(kernel.push(t, &mut NoProbe)?.out_txns);
    }
    out.extend(kernel.flush(&mut NoProbe)?.out_txns);
    Ok(out)
}

/// Runs a chain of kernels transaction by transaction.
pub fn run_chain(kernels: &mut [Box<dyn Kernel>], txns: &[Transaction]) -> Result<Vec<Transaction>> {
    let mut stream = txns.to_vec();
    for k in kernels.iter_mut() {
        stream = run_kernel(k.as_mut(), &stream)?;
    }
    Ok(stream)
}
