use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{stream_index, AccessProbe, Kernel, KernelOutput, KernelState, OpCounts, SeqGuard, StreamKind};
use crate::error::{Error, Result};
use crate::lut::TieredTable;
use crate::reference::{NormParams, TENSOR_SCALE};
use crate::stream::{Transaction, TxnPacker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeMode {
    /// Per-channel tables over the floats a ToTensor stage produced.
    Lut,
    /// ToTensor and Normalize in one datapath: u8 in, normalized f32 out.
    FusedLut,
    /// Float subtract and divide per element.
    Arith,
}

/// HWC u8 to CHW f32: a reshaper feeds one channel extractor per channel,
/// each into its own FIFO; an arbiter forwards channel 0 first, then 1, then
/// 2, to a table-driven scaler.
///
/// The scaler emits at most one output word of floats per input word, so
/// later channels pile up in their FIFOs until the earlier ones have drained.
#[derive(Debug, Clone)]
pub struct ReshapeScaleKernel {
    name: &'static str,
    height: usize,
    width: usize,
    channels: usize,
    capacity: usize,
    // one shared table, or one per channel
    tables: Vec<TieredTable>,
    fifos: Vec<VecDeque<(u8, u64)>>,
    received: usize,
    draining: usize,
    drained_in_channel: usize,
    drain_per_push: usize,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl ReshapeScaleKernel {
    /// ToTensor: every channel shares the `i → i/256` scaler table.
    pub fn to_tensor(
        dims: (usize, usize, usize),
        fifo_capacity: Option<usize>,
        scaler: TieredTable,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        Self::build("to-tensor", dims, fifo_capacity, vec![scaler], bus_width, meta_width)
    }

    /// ToTensor fused with Normalize: channel `c` reads table `c`.
    pub fn fused_normalize(
        dims: (usize, usize, usize),
        fifo_capacity: Option<usize>,
        tables: Vec<TieredTable>,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        if tables.len() != dims.2 {
            return Err(Error::BadParams(format!("{} tables for {} channels", tables.len(), dims.2)));
        }
        Self::build("normalize-fused", dims, fifo_capacity, tables, bus_width, meta_width)
    }

    fn build(
        name: &'static str,
        (height, width, channels): (usize, usize, usize),
        fifo_capacity: Option<usize>,
        tables: Vec<TieredTable>,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::BadDims(format!("{height}x{width}x{channels}")));
        }
        Ok(Self {
            name,
            height,
            width,
            channels,
            capacity: fifo_capacity.unwrap_or(height * width),
            tables,
            fifos: vec![VecDeque::new(); channels],
            received: 0,
            draining: 0,
            drained_in_channel: 0,
            drain_per_push: (bus_width / 4).max(1),
            seq: SeqGuard::default(),
            packer: TxnPacker::new(bus_width, meta_width, 0),
        })
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn drain(&mut self, mut budget: usize, ops: &mut OpCounts, probe: &mut dyn AccessProbe) -> Result<()> {
        while budget > 0 && self.draining < self.channels {
            let Some((value, index)) = self.fifos[self.draining].pop_front() else { break };
            let t = if self.tables.len() == 1 { 0 } else { self.draining };
            let table = &mut self.tables[t];
            let before = table.clock.cycles;
            let scaled = table.get_f32(value as u64)?;
            ops.lookup(table, table.clock.cycles - before);
            probe.read(index);
            probe.emit();
            self.packer.extend_f32(scaled);
            budget -= 1;
            self.drained_in_channel += 1;
            if self.drained_in_channel == self.plane() {
                self.draining += 1;
                self.drained_in_channel = 0;
            }
        }
        Ok(())
    }
}

impl Kernel for ReshapeScaleKernel {
    fn name(&self) -> &str {
        self.name
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::ImageU8
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::TensorF32
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        let total = self.plane() * self.channels;
        for (i, &b) in txn.valid().iter().enumerate() {
            if self.received == total {
                return Err(Error::InvalidAdu(format!("stream longer than {total} bytes")));
            }
            let ch = self.received % self.channels;
            self.fifos[ch].push_back((b, stream_index(txn, i)));
            if self.fifos[ch].len() > self.capacity {
                return Err(Error::FifoOverflow { capacity: self.capacity });
            }
            self.received += 1;
        }
        let mut ops = OpCounts::default();
        self.drain(self.drain_per_push, &mut ops, probe)?;
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        let total = self.plane() * self.channels;
        if self.received != total {
            return Err(Error::InvalidAdu(format!("stream ended after {} of {total} bytes", self.received)));
        }
        let mut ops = OpCounts::default();
        self.drain(usize::MAX, &mut ops, probe)?;
        Ok(KernelOutput::new(self.packer.finish(), ops))
    }

    fn state(&self) -> KernelState {
        KernelState::Fifos {
            depths: self.fifos.iter().map(VecDeque::len).collect(),
            capacity: self.capacity,
            draining: self.draining,
        }
    }

    fn buffer_bytes(&self) -> u64 {
        (self.capacity * self.channels) as u64
    }

    fn tables(&self) -> Vec<&TieredTable> {
        self.tables.iter().collect()
    }
}

/// Normalize over a CHW f32 stream, either by table or by arithmetic.
#[derive(Debug, Clone)]
pub struct StreamNormalizeKernel {
    params: NormParams,
    plane: usize,
    channels: usize,
    tables: Vec<TieredTable>,
    carry: Vec<u8>,
    carry_start: u64,
    elements: usize,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl StreamNormalizeKernel {
    /// Table-driven; `tables` are the unfused per-channel normalize tables.
    pub fn lut(
        params: NormParams,
        dims: (usize, usize, usize),
        tables: Vec<TieredTable>,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        if tables.len() != dims.0 {
            return Err(Error::BadParams(format!("{} tables for {} channels", tables.len(), dims.0)));
        }
        Self::build(params, dims, tables, bus_width, meta_width)
    }

    pub fn arith(params: NormParams, dims: (usize, usize, usize), bus_width: usize, meta_width: usize) -> Result<Self> {
        Self::build(params, dims, Vec::new(), bus_width, meta_width)
    }

    fn build(
        params: NormParams,
        (channels, height, width): (usize, usize, usize),
        tables: Vec<TieredTable>,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        params.check_channels(channels)?;
        Ok(Self {
            params,
            plane: height * width,
            channels,
            tables,
            carry: Vec::with_capacity(4),
            carry_start: 0,
            elements: 0,
            seq: SeqGuard::default(),
            packer: TxnPacker::new(bus_width, meta_width, 0),
        })
    }

    fn element(&mut self, x: f32, ops: &mut OpCounts) -> Result<f32> {
        let ch = (self.elements / self.plane).min(self.channels - 1);
        if self.tables.is_empty() {
            ops.float_adds += 1;
            ops.float_divs += 1;
            return Ok(self.params.apply(ch, x));
        }
        let table = &mut self.tables[ch];
        let scaled = x * TENSOR_SCALE;
        if !(0.0..256.0).contains(&scaled) || scaled.fract() != 0.0 {
            return Err(Error::TableMiss { table: table.table.name().into(), key: x.to_bits() as u64 });
        }
        let before = table.clock.cycles;
        let v = table.get_f32(scaled as u64)?;
        ops.lookup(table, table.clock.cycles - before);
        Ok(v)
    }
}

impl Kernel for StreamNormalizeKernel {
    fn name(&self) -> &str {
        if self.tables.is_empty() {
            "normalize-arith"
        } else {
            "normalize-lut"
        }
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::TensorF32
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::TensorF32
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        let mut ops = OpCounts::default();
        for (i, &b) in txn.valid().iter().enumerate() {
            if self.carry.is_empty() {
                self.carry_start = stream_index(txn, i);
            }
            self.carry.push(b);
            if self.carry.len() == 4 {
                let x = f32::from_le_bytes([self.carry[0], self.carry[1], self.carry[2], self.carry[3]]);
                self.carry.clear();
                let y = self.element(x, &mut ops)?;
                for k in 0..4 {
                    probe.read(self.carry_start + k);
                }
                probe.emit();
                self.packer.extend_f32(y);
                self.elements += 1;
            }
        }
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, _: &mut dyn AccessProbe) -> Result<KernelOutput> {
        if !self.carry.is_empty() {
            return Err(Error::InvalidAdu(format!("{} trailing bytes in f32 stream", self.carry.len())));
        }
        Ok(KernelOutput::new(self.packer.finish(), OpCounts::default()))
    }

    fn state(&self) -> KernelState {
        KernelState::Elementwise { carry: self.carry.len(), elements: self.elements }
    }

    fn tables(&self) -> Vec<&TieredTable> {
        self.tables.iter().collect()
    }
}
