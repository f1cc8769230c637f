//! Application data units and their framing onto a fixed-width bus.
//!
//! An [`Adu`] is a whole sample (image, tensor or prompt). A device only ever
//! sees it as a sequence of [`Transaction`]s: bus words of `bus_width` bytes
//! with a small out-of-band metadata field. Serialization order (row-major or
//! tile-major) is decided on the sending side, before framing.

mod io;
pub(crate) mod tile;

pub use io::{load_adu, load_input, read_pnm, read_text, save_adu, write_pnm, AduDescriptor};
pub use tile::{build_tile_map, referenced_coords, serialize_tile_major, Coord, TileMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BUS_WIDTH: usize = 32;
pub const DEFAULT_META_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AduKind {
    ImageU8,
    TensorF32,
    Text,
}

impl AduKind {
    pub fn element_size(self) -> usize {
        match self {
            AduKind::ImageU8 | AduKind::Text => 1,
            AduKind::TensorF32 => 4,
        }
    }
}

impl std::fmt::Display for AduKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AduKind::ImageU8 => "image_u8",
            AduKind::TensorF32 => "tensor_f32",
            AduKind::Text => "text",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Height, width, channel (interleaved pixels).
    Hwc,
    /// Channel, height, width (planar).
    Chw,
    Flat,
}

/// One application data unit: the whole sample a reference function consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Adu {
    kind: AduKind,
    dims: Vec<usize>,
    layout: Layout,
    payload: Vec<u8>,
}

impl Adu {
    pub fn new(kind: AduKind, dims: Vec<usize>, layout: Layout, payload: Vec<u8>) -> Result<Self> {
        let adu = Self { kind, dims, layout, payload };
        adu.validate()?;
        Ok(adu)
    }

    /// Interleaved `height × width × channels` u8 image.
    pub fn image(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(AduKind::ImageU8, vec![height, width, channels], Layout::Hwc, pixels)
    }

    /// Planar `channels × height × width` f32 tensor.
    pub fn tensor_chw(channels: usize, height: usize, width: usize, values: &[f32]) -> Result<Self> {
        let payload = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(AduKind::TensorF32, vec![channels, height, width], Layout::Chw, payload)
    }

    pub fn text(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let payload: Vec<u8> = bytes.into();
        Self::new(AduKind::Text, vec![payload.len()], Layout::Flat, payload)
    }

    pub fn validate(&self) -> Result<()> {
        if self.payload.is_empty() {
            return Err(Error::EmptyAdu);
        }
        if self.dims.contains(&0) {
            return Err(Error::BadDims(format!("{:?}", self.dims)));
        }
        let expected = self.dims.iter().product::<usize>() * self.kind.element_size();
        if expected != self.payload.len() {
            return Err(Error::InvalidAdu(format!(
                "payload is {} bytes, dims {:?} need {}",
                self.payload.len(),
                self.dims,
                expected
            )));
        }
        match (self.kind, self.layout) {
            (AduKind::ImageU8, Layout::Hwc) | (AduKind::TensorF32, Layout::Chw) => {
                if self.dims.len() != 3 {
                    return Err(Error::BadDims(format!("expected 3 dims, got {:?}", self.dims)));
                }
            }
            (AduKind::Text, Layout::Flat) => {}
            (kind, layout) => {
                return Err(Error::InvalidAdu(format!("{kind} with layout {layout:?}")));
            }
        }
        if self.kind == AduKind::TensorF32 && self.f32_values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAdu("tensor holds non-finite values".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> AduKind {
        self.kind
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    /// `(height, width, channels)` of an image ADU.
    pub fn image_dims(&self) -> Result<(usize, usize, usize)> {
        self.expect_kind(AduKind::ImageU8)?;
        Ok((self.dims[0], self.dims[1], self.dims[2]))
    }

    /// `(channels, height, width)` of a tensor ADU.
    pub fn tensor_dims(&self) -> Result<(usize, usize, usize)> {
        self.expect_kind(AduKind::TensorF32)?;
        Ok((self.dims[0], self.dims[1], self.dims[2]))
    }

    pub fn f32_values(&self) -> Vec<f32> {
        bytes_to_f32(&self.payload)
    }

    pub fn expect_kind(&self, kind: AduKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongKind { expected: kind.to_string(), got: self.kind.to_string() });
        }
        Ok(())
    }
}

pub fn bytes_to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

/// One bus word. `data` is always `bus_width` bytes long; only the first
/// `valid_bytes` are meaningful. `meta` rides beside the data word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub seq: u64,
    pub data: Vec<u8>,
    pub valid_bytes: usize,
    pub meta: Vec<u8>,
    pub meta_width: usize,
}

impl Transaction {
    pub fn valid(&self) -> &[u8] {
        &self.data[..self.valid_bytes]
    }

    pub fn bus_width(&self) -> usize {
        self.data.len()
    }
}

/// Splits byte streams into transactions.
///
/// With a non-zero `overlap`, every transaction's metadata carries the
/// `overlap` stream bytes that immediately precede its data word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Framer {
    bus_width: usize,
    meta_width: usize,
    overlap: usize,
}

impl Framer {
    pub fn new(bus_width: usize) -> Result<Self> {
        if bus_width == 0 {
            return Err(Error::BadParams("bus width must be positive".into()));
        }
        Ok(Self { bus_width, meta_width: DEFAULT_META_WIDTH, overlap: 0 })
    }

    pub fn with_meta_width(mut self, meta_width: usize) -> Result<Self> {
        if self.overlap > meta_width {
            return Err(Error::MetaTooSmall { needed: self.overlap, available: meta_width });
        }
        self.meta_width = meta_width;
        Ok(self)
    }

    pub fn with_overlap(mut self, overlap: usize) -> Result<Self> {
        if overlap > self.meta_width {
            return Err(Error::MetaTooSmall { needed: overlap, available: self.meta_width });
        }
        self.overlap = overlap;
        Ok(self)
    }

    pub fn bus_width(&self) -> usize {
        self.bus_width
    }

    pub fn meta_width(&self) -> usize {
        self.meta_width
    }

    pub fn frame(&self, adu: &Adu) -> Result<Vec<Transaction>> {
        self.frame_bytes(adu.payload())
    }

    pub fn frame_bytes(&self, bytes: &[u8]) -> Result<Vec<Transaction>> {
        if bytes.is_empty() {
            return Err(Error::EmptyAdu);
        }
        let mut packer = TxnPacker::new(self.bus_width, self.meta_width, self.overlap);
        packer.extend(bytes);
        let mut out = packer.take_ready();
        out.extend(packer.finish());
        Ok(out)
    }
}

/// Frames an ADU's payload with the default metadata width.
pub fn frame_adu(adu: &Adu, bus_width: usize) -> Result<Vec<Transaction>> {
    Framer::new(bus_width)?.frame(adu)
}

/// Concatenates the valid bytes of `txns` in order.
pub fn deframe(txns: &[Transaction]) -> Vec<u8> {
    txns.iter().flat_map(|t| t.valid().iter().copied()).collect()
}

/// Row-major (HWC) byte order of an image: byte `k` is pixel
/// `(k / (W·C), (k % (W·C)) / C)`, channel `k % C`.
pub fn serialize_row_major(image: &Adu) -> Result<Vec<u8>> {
    image.expect_kind(AduKind::ImageU8)?;
    if image.layout() != Layout::Hwc {
        return Err(Error::InvalidAdu("row-major serialization needs an HWC image".into()));
    }
    Ok(image.payload().to_vec())
}

/// Accumulates an output byte stream and cuts it into bus words.
#[derive(Debug, Clone)]
pub struct TxnPacker {
    bus_width: usize,
    meta_width: usize,
    overlap: usize,
    pending: Vec<u8>,
    // last `overlap` bytes already packed
    history: Vec<u8>,
    ready: Vec<Transaction>,
    next_seq: u64,
    emitted_bytes: u64,
}

impl TxnPacker {
    pub fn new(bus_width: usize, meta_width: usize, overlap: usize) -> Self {
        Self {
            bus_width,
            meta_width,
            overlap,
            pending: Vec::with_capacity(bus_width),
            history: Vec::new(),
            ready: Vec::new(),
            next_seq: 0,
            emitted_bytes: 0,
        }
    }

    pub fn push(&mut self, byte: u8) {
        self.pending.push(byte);
        if self.pending.len() == self.bus_width {
            self.cut();
        }
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.push(b);
        }
    }

    pub fn extend_f32(&mut self, v: f32) {
        self.extend(&v.to_le_bytes());
    }

    fn cut(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let valid = self.pending.len();
        let mut data = std::mem::replace(&mut self.pending, Vec::with_capacity(self.bus_width));
        let meta = self.history.clone();
        if self.overlap > 0 {
            self.history.extend_from_slice(&data);
            let excess = self.history.len().saturating_sub(self.overlap);
            self.history.drain(..excess);
        }
        data.resize(self.bus_width, 0);
        self.ready.push(Transaction {
            seq: self.next_seq,
            data,
            valid_bytes: valid,
            meta,
            meta_width: self.meta_width,
        });
        self.next_seq += 1;
        self.emitted_bytes += valid as u64;
    }

    pub fn take_ready(&mut self) -> Vec<Transaction> {
        std::mem::take(&mut self.ready)
    }

    /// Emits the zero-padded tail word, if any.
    pub fn finish(&mut self) -> Vec<Transaction> {
        self.cut();
        self.take_ready()
    }

    pub fn bytes_emitted(&self) -> u64 {
        self.emitted_bytes + self.pending.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hd_frame_is_86400_words() {
        let img = Adu::image(720, 1280, 3, vec![7; 1280 * 720 * 3]).unwrap();
        assert_eq!(frame_adu(&img, 32).unwrap().len(), 86_400);
    }

    #[test]
    fn exact_fit_single_word() {
        let txns = Framer::new(32).unwrap().frame_bytes(&[1; 32]).unwrap();
        assert_eq!(txns.len(), 1);
        assert_eq!(txns[0].valid_bytes, 32);
    }

    #[test]
    fn one_rgb_row_is_120_words() {
        let txns = Framer::new(32).unwrap().frame_bytes(&[0; 3840]).unwrap();
        assert_eq!(txns.len(), 120);
    }

    #[test]
    fn tail_is_zero_padded() {
        let txns = Framer::new(4).unwrap().frame_bytes(&[9, 9, 9, 9, 9, 9]).unwrap();
        assert_eq!(txns.len(), 2);
        assert_eq!(txns[1].valid_bytes, 2);
        assert_eq!(txns[1].data, vec![9, 9, 0, 0]);
    }

    #[test]
    fn empty_payload_rejected() {
        assert!(matches!(Framer::new(32).unwrap().frame_bytes(&[]), Err(Error::EmptyAdu)));
        assert!(matches!(Adu::text(""), Err(Error::EmptyAdu)));
        assert!(Framer::new(0).is_err());
    }

    #[test]
    fn overlap_lands_in_meta() {
        let framer = Framer::new(4).unwrap().with_overlap(3).unwrap();
        let txns = framer.frame_bytes(b"abcdefghij").unwrap();
        assert!(txns[0].meta.is_empty());
        assert_eq!(txns[1].meta, b"bcd");
        assert_eq!(txns[2].meta, b"fgh");
        assert!(matches!(
            Framer::new(4).unwrap().with_overlap(9),
            Err(Error::MetaTooSmall { needed: 9, available: 8 })
        ));
    }

    #[test]
    fn row_major_small_cases() {
        let row = Adu::image(1, 2, 1, vec![5, 6]).unwrap();
        assert_eq!(serialize_row_major(&row).unwrap(), vec![5, 6]);
        let sq = Adu::image(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(serialize_row_major(&sq).unwrap(), vec![1, 2, 3, 4]);
        let text = Adu::text("hi").unwrap();
        assert!(matches!(serialize_row_major(&text), Err(Error::WrongKind { .. })));
    }

    #[test]
    fn row_major_rgb_index_formula() {
        // value encodes (row, col, channel) so the byte position can be checked
        let (h, w, c) = (2usize, 2usize, 3usize);
        let mut px = vec![0u8; h * w * c];
        for r in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    px[(r * w + col) * c + ch] = (r * 100 + col * 10 + ch) as u8;
                }
            }
        }
        let bytes = serialize_row_major(&Adu::image(h, w, c, px).unwrap()).unwrap();
        assert_eq!(bytes.len(), 12);
        for (k, &b) in bytes.iter().enumerate() {
            let r = k / (w * c);
            let col = (k % (w * c)) / c;
            let ch = k % c;
            assert_eq!(b as usize, r * 100 + col * 10 + ch);
        }
    }

    #[test]
    fn invalid_adus() {
        assert!(Adu::image(2, 2, 3, vec![0; 11]).is_err());
        assert!(Adu::tensor_chw(1, 1, 1, &[f32::NAN]).is_err());
        assert!(Adu::new(AduKind::Text, vec![2], Layout::Hwc, vec![1, 2]).is_err());
    }
}
