//! Bilinear resize over three input orders.
//!
//! All three kernels share one table-driven datapath: the output value is
//! the sum of four precomputed 8-bit terms, so they agree with each other
//! exactly and with the float reference to within the term rounding.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{stream_index, AccessProbe, Kernel, KernelOutput, KernelState, OpCounts, SeqGuard, StreamKind};
use crate::error::{Error, Result};
use crate::lut::{InterpTables, PlacementMap, TieredTable};
use crate::stream::tile::axis_neighbors;
use crate::stream::{TileMap, Transaction, TxnPacker};

/// Term and coordinate tables with the placements one kernel owns.
#[derive(Debug, Clone)]
pub struct InterpUnit {
    tables: Arc<InterpTables>,
    terms: TieredTable,
    coords: Option<TieredTable>,
}

impl InterpUnit {
    pub fn new(tables: Arc<InterpTables>, terms: PlacementMap, coords: Option<PlacementMap>) -> Self {
        let terms = TieredTable::new(tables.terms.clone(), terms);
        let coords = coords.map(|p| TieredTable::new(tables.coords.clone(), p));
        Self { tables, terms, coords }
    }

    /// Everything resident in the fast tier.
    pub fn resident(tables: Arc<InterpTables>, with_coords: bool) -> Self {
        let terms = TieredTable::resident(tables.terms.clone());
        let coords = with_coords.then(|| TieredTable::resident(tables.coords.clone()));
        Self { tables, terms, coords }
    }

    pub fn tables(&self) -> &InterpTables {
        &self.tables
    }

    fn advance(&mut self, row: usize) {
        self.terms.placement.advance_to_row(row);
        if let Some(c) = &mut self.coords {
            c.placement.advance_to_row(row);
        }
    }

    /// Input pixel indices (`row · W + col`) of the four corners.
    fn corners(&mut self, y: usize, x: usize, ops: &mut OpCounts) -> Result<[usize; 4]> {
        let coords = self.coords.as_mut().ok_or_else(|| Error::BadParams("coordinate table not loaded".into()))?;
        let mut out = [0usize; 4];
        for (k, slot) in out.iter_mut().enumerate() {
            let before = coords.clock.cycles;
            *slot = coords.get(self.tables.coord_key(y, x, k))? as usize;
            ops.lookup(coords, coords.clock.cycles - before);
        }
        Ok(out)
    }

    /// One output channel value from its four neighbour intensities.
    fn value(&mut self, y: usize, x: usize, px: [u8; 4], ops: &mut OpCounts) -> Result<u8> {
        let mut sum = 0u32;
        for (term, &p) in px.iter().enumerate() {
            let key = self.tables.term_key(y, x, term, p)?;
            let before = self.terms.clock.cycles;
            sum += self.terms.get(key)?;
            ops.lookup(&self.terms, self.terms.clock.cycles - before);
        }
        ops.int_adds += 3;
        Ok(sum.min(255) as u8)
    }

    fn table_refs(&self) -> Vec<&TieredTable> {
        std::iter::once(&self.terms).chain(self.coords.as_ref()).collect()
    }
}

/// Rows of input needed at once: 2 if any output row interpolates between
/// two input rows, else 1.
fn required_rows(in_h: usize, out_h: usize) -> usize {
    if (0..out_h).any(|y| {
        let (lo, hi, _) = axis_neighbors(in_h, out_h, y);
        lo != hi
    }) {
        2
    } else {
        1
    }
}

fn check_geometry(unit: &InterpUnit, in_hw: (usize, usize), out_hw: (usize, usize)) -> Result<()> {
    let t = unit.tables();
    if t.in_dims != in_hw || t.out_dims != out_hw {
        return Err(Error::MapMismatch(format!(
            "tables built for {:?} -> {:?}, kernel configured for {in_hw:?} -> {out_hw:?}",
            t.in_dims, t.out_dims
        )));
    }
    Ok(())
}

/// Row-major input; keeps a small ring of input rows and emits each output
/// row as soon as the lower of its two neighbour rows is complete.
#[derive(Debug, Clone)]
pub struct RowBufferResizeKernel {
    in_dims: (usize, usize, usize),
    out_dims: (usize, usize),
    depth_rows: usize,
    unit: InterpUnit,
    high_row: Vec<usize>,
    rows: VecDeque<(usize, Vec<u8>)>,
    current: Vec<u8>,
    current_row: usize,
    next_out_row: usize,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl RowBufferResizeKernel {
    pub fn new(
        in_dims: (usize, usize, usize),
        out_dims: (usize, usize),
        depth_rows: usize,
        unit: InterpUnit,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        let (h, w, _) = in_dims;
        check_geometry(&unit, (h, w), out_dims)?;
        if unit.coords.is_none() {
            return Err(Error::BadParams("row-buffer resize needs the coordinate table".into()));
        }
        let required = required_rows(h, out_dims.0);
        if depth_rows < required {
            return Err(Error::BufferTooSmall { configured: depth_rows, required });
        }
        let high_row = (0..out_dims.0).map(|y| axis_neighbors(h, out_dims.0, y).1).collect();
        Ok(Self {
            in_dims,
            out_dims,
            depth_rows,
            unit,
            high_row,
            rows: VecDeque::new(),
            current: Vec::with_capacity(w * in_dims.2),
            current_row: 0,
            next_out_row: 0,
            seq: SeqGuard::default(),
            packer: TxnPacker::new(bus_width, meta_width, 0),
        })
    }

    fn row(&self, r: usize) -> Result<&[u8]> {
        self.rows
            .iter()
            .find(|(idx, _)| *idx == r)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::BufferTooSmall { configured: self.depth_rows, required: self.depth_rows + 1 })
    }

    fn emit_ready_rows(&mut self, completed: usize, ops: &mut OpCounts, probe: &mut dyn AccessProbe) -> Result<()> {
        let (_, w, c) = self.in_dims;
        let (out_h, out_w) = self.out_dims;
        while self.next_out_row < out_h && self.high_row[self.next_out_row] <= completed {
            let y = self.next_out_row;
            self.unit.advance(y);
            for x in 0..out_w {
                let corners = self.unit.corners(y, x, ops)?;
                for ch in 0..c {
                    let mut px = [0u8; 4];
                    for (k, &idx) in corners.iter().enumerate() {
                        let (r, col) = (idx / w, idx % w);
                        px[k] = self.row(r)?[col * c + ch];
                        probe.read((idx * c + ch) as u64);
                    }
                    let v = self.unit.value(y, x, px, ops)?;
                    probe.emit();
                    self.packer.push(v);
                }
            }
            self.next_out_row += 1;
        }
        Ok(())
    }
}

impl Kernel for RowBufferResizeKernel {
    fn name(&self) -> &str {
        "resize-row-buffer"
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::ImageU8
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::ImageU8
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        let (h, w, c) = self.in_dims;
        let row_bytes = w * c;
        let mut ops = OpCounts { memory_writes: 1, ..Default::default() };
        for &b in txn.valid() {
            if self.current_row >= h {
                return Err(Error::InvalidAdu("stream longer than the configured image".into()));
            }
            self.current.push(b);
            if self.current.len() == row_bytes {
                let r = self.current_row;
                let row = std::mem::replace(&mut self.current, Vec::with_capacity(row_bytes));
                self.rows.push_back((r, row));
                self.emit_ready_rows(r, &mut ops, probe)?;
                // keep room for the row that fills next
                while self.rows.len() > self.depth_rows - 1 {
                    self.rows.pop_front();
                }
                self.current_row += 1;
            }
        }
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, _: &mut dyn AccessProbe) -> Result<KernelOutput> {
        if self.current_row != self.in_dims.0 || !self.current.is_empty() {
            return Err(Error::InvalidAdu(format!("stream ended inside input row {}", self.current_row)));
        }
        Ok(KernelOutput::new(self.packer.finish(), OpCounts::default()))
    }

    fn state(&self) -> KernelState {
        KernelState::RowBuffer {
            rows_held: self.rows.len() + usize::from(!self.current.is_empty()),
            depth_rows: self.depth_rows,
            row_fill: self.current.len(),
            next_out_row: self.next_out_row,
        }
    }

    fn buffer_bytes(&self) -> u64 {
        (self.depth_rows * self.in_dims.1 * self.in_dims.2) as u64
    }

    fn tables(&self) -> Vec<&TieredTable> {
        self.unit.table_refs()
    }
}

/// Tile-major input: every `4·C` bytes are the four neighbours of the next
/// output pixel, so each pixel is emitted as soon as its tile is in.
#[derive(Debug, Clone)]
pub struct TileResizeKernel {
    channels: usize,
    out_dims: (usize, usize),
    unit: InterpUnit,
    tile: Vec<(u8, u64)>,
    next_out: usize,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl TileResizeKernel {
    pub fn new(map: &TileMap, channels: usize, unit: InterpUnit, bus_width: usize, meta_width: usize) -> Result<Self> {
        check_geometry(&unit, map.in_dims, map.out_dims)?;
        if channels == 0 {
            return Err(Error::BadDims("zero channels".into()));
        }
        Ok(Self {
            channels,
            out_dims: map.out_dims,
            unit,
            tile: Vec::with_capacity(4 * channels),
            next_out: 0,
            seq: SeqGuard::default(),
            packer: TxnPacker::new(bus_width, meta_width, 0),
        })
    }

    fn total(&self) -> usize {
        self.out_dims.0 * self.out_dims.1
    }
}

impl Kernel for TileResizeKernel {
    fn name(&self) -> &str {
        "resize-tile-major"
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::TileStream
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::ImageU8
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        let c = self.channels;
        let mut ops = OpCounts::default();
        for (i, &b) in txn.valid().iter().enumerate() {
            if self.next_out == self.total() {
                return Err(Error::MapMismatch("tile stream longer than the map".into()));
            }
            self.tile.push((b, stream_index(txn, i)));
            if self.tile.len() < 4 * c {
                continue;
            }
            let (y, x) = (self.next_out / self.out_dims.1, self.next_out % self.out_dims.1);
            if x == 0 {
                self.unit.advance(y);
            }
            for ch in 0..c {
                let mut px = [0u8; 4];
                for (k, p) in px.iter_mut().enumerate() {
                    let (v, idx) = self.tile[k * c + ch];
                    *p = v;
                    probe.read(idx);
                }
                let v = self.unit.value(y, x, px, &mut ops)?;
                probe.emit();
                self.packer.push(v);
            }
            self.tile.clear();
            self.next_out += 1;
        }
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, _: &mut dyn AccessProbe) -> Result<KernelOutput> {
        if !self.tile.is_empty() || self.next_out != self.total() {
            return Err(Error::MapMismatch(format!(
                "tile stream ended after {} of {} tiles",
                self.next_out,
                self.total()
            )));
        }
        Ok(KernelOutput::new(self.packer.finish(), OpCounts::default()))
    }

    fn state(&self) -> KernelState {
        KernelState::Tiles { tile_fill: self.tile.len(), next_out_pixel: self.next_out }
    }

    fn buffer_bytes(&self) -> u64 {
        (4 * self.channels) as u64
    }

    fn tables(&self) -> Vec<&TieredTable> {
        self.unit.table_refs()
    }
}

/// Buffers the whole image before computing anything.
#[derive(Debug, Clone)]
pub struct FullBufferResizeKernel {
    in_dims: (usize, usize, usize),
    out_dims: (usize, usize),
    unit: InterpUnit,
    image: Vec<u8>,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl FullBufferResizeKernel {
    pub fn new(
        in_dims: (usize, usize, usize),
        out_dims: (usize, usize),
        unit: InterpUnit,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        check_geometry(&unit, (in_dims.0, in_dims.1), out_dims)?;
        if unit.coords.is_none() {
            return Err(Error::BadParams("full-buffer resize needs the coordinate table".into()));
        }
        Ok(Self {
            in_dims,
            out_dims,
            unit,
            image: Vec::with_capacity(in_dims.0 * in_dims.1 * in_dims.2),
            seq: SeqGuard::default(),
            packer: TxnPacker::new(bus_width, meta_width, 0),
        })
    }

    fn total(&self) -> usize {
        self.in_dims.0 * self.in_dims.1 * self.in_dims.2
    }

    fn compute(&mut self, ops: &mut OpCounts, probe: &mut dyn AccessProbe) -> Result<()> {
        let c = self.in_dims.2;
        for y in 0..self.out_dims.0 {
            self.unit.advance(y);
            for x in 0..self.out_dims.1 {
                let corners = self.unit.corners(y, x, ops)?;
                for ch in 0..c {
                    let mut px = [0u8; 4];
                    for (k, &idx) in corners.iter().enumerate() {
                        px[k] = self.image[idx * c + ch];
                        probe.read((idx * c + ch) as u64);
                    }
                    let v = self.unit.value(y, x, px, ops)?;
                    probe.emit();
                    self.packer.push(v);
                }
            }
        }
        Ok(())
    }
}

impl Kernel for FullBufferResizeKernel {
    fn name(&self) -> &str {
        "resize-full-buffer"
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::ImageU8
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::ImageU8
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        if self.image.len() + txn.valid_bytes > self.total() {
            return Err(Error::InvalidAdu("stream longer than the configured image".into()));
        }
        self.image.extend_from_slice(txn.valid());
        let mut ops = OpCounts { memory_writes: 1, ..Default::default() };
        if self.image.len() == self.total() {
            self.compute(&mut ops, probe)?;
        }
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, _: &mut dyn AccessProbe) -> Result<KernelOutput> {
        if self.image.len() != self.total() {
            return Err(Error::InvalidAdu(format!("stream ended after {} bytes", self.image.len())));
        }
        Ok(KernelOutput::new(self.packer.finish(), OpCounts::default()))
    }

    fn state(&self) -> KernelState {
        KernelState::FullBuffer { filled: self.image.len(), total: self.total() }
    }

    fn buffer_bytes(&self) -> u64 {
        self.total() as u64
    }

    fn tables(&self) -> Vec<&TieredTable> {
        self.unit.table_refs()
    }
}
