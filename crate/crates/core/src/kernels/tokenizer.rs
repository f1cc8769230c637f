//! Chunked greedy tokenization with overlap carried in transaction metadata.
//!
//! Each transaction is one chunk. A token whose start lies within the last
//! `L` bytes of the chunk (L = longest vocabulary token) may have been cut
//! short by the chunk edge, so it stays pending. The next chunk re-tokenizes
//! from the first pending token's start, using the previous bytes carried in
//! its metadata, and the two token streams are spliced.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AccessProbe, Kernel, KernelOutput, KernelState, OpCounts, SeqGuard, StreamKind};
use crate::error::{Error, Result};
use crate::reference::{Token, Vocabulary};
use crate::stream::{Transaction, TxnPacker};

/// Bytes per token record on the output stream.
pub const TOKEN_RECORD_BYTES: usize = 8;

pub fn encode_token(t: &Token) -> [u8; TOKEN_RECORD_BYTES] {
    let mut out = [0u8; TOKEN_RECORD_BYTES];
    out[..4].copy_from_slice(&t.id.to_le_bytes());
    out[4..].copy_from_slice(&(t.start as u32).to_le_bytes());
    out
}

pub fn decode_tokens(bytes: &[u8], vocab: &Vocabulary) -> Result<Vec<Token>> {
    if !bytes.len().is_multiple_of(TOKEN_RECORD_BYTES) {
        return Err(Error::Format(format!("token stream of {} bytes is not whole records", bytes.len())));
    }
    bytes
        .chunks_exact(TOKEN_RECORD_BYTES)
        .map(|r| {
            let id = u32::from_le_bytes([r[0], r[1], r[2], r[3]]);
            let start = u32::from_le_bytes([r[4], r[5], r[6], r[7]]) as usize;
            if id as usize >= vocab.len() {
                return Err(Error::Format(format!("token id {id} outside the vocabulary")));
            }
            Ok(Token { id, start, len: vocab.token(id).len() })
        })
        .collect()
}

/// How chunk token streams are joined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpliceMode {
    /// Re-tokenize from the first pending token's start.
    #[default]
    Aligned,
    /// Re-tokenize from exactly `L` bytes before the chunk and splice at
    /// the first duplicated token.
    Literal,
    /// No overlap: every chunk tokenized on its own.
    None,
}

/// Greedy tokens of `text[from..]`, offsets shifted by `base`.
fn tokenize_from(text: &[u8], base: usize, vocab: &Vocabulary, ops: &mut OpCounts) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < text.len() {
        ops.compares += (text.len() - at).min(vocab.max_token_len()) as u64;
        let (id, len) = vocab.longest_match(text, at).ok_or(Error::NoToken { offset: base + at, byte: text[at] })?;
        out.push(Token { id, start: base + at, len });
        at += len;
    }
    Ok(out)
}

/// Tokenizes each `chunk`-byte piece independently.
pub fn naive_chunked_tokenize(text: &[u8], vocab: &Vocabulary, chunk: usize) -> Result<Vec<Token>> {
    if chunk == 0 {
        return Err(Error::BadParams("chunk size must be positive".into()));
    }
    let mut ops = OpCounts::default();
    let mut out = Vec::new();
    for (i, piece) in text.chunks(chunk).enumerate() {
        out.extend(tokenize_from(piece, i * chunk, vocab, &mut ops)?);
    }
    Ok(out)
}

fn same(a: &Token, b: &Token) -> bool {
    a.id == b.id && a.start == b.start && a.len == b.len
}

/// First token of `ext` that also occurs in `prev` (same id and span):
/// keep `prev` through it, then `ext` after it.
fn anchor_splice(prev: &[Token], ext: &[Token], chunk_start: usize) -> Result<Vec<Token>> {
    for (i, e) in ext.iter().enumerate() {
        if let Some(j) = prev.iter().position(|p| same(p, e)) {
            let mut out = prev[..=j].to_vec();
            out.extend_from_slice(&ext[i + 1..]);
            return Ok(out);
        }
    }
    Err(Error::ResyncFailure { chunk_start })
}

/// Merges the tokens left over from the previous chunk with the tokens of
/// the extended next chunk.
///
/// When `ext` begins on a token boundary of `prev` inside the overlap, `prev`
/// is cut there and `ext` taken whole; otherwise the first duplicated token
/// serves as the anchor.
pub fn splice_tokens(prev: &[Token], ext: &[Token], chunk_start: usize, overlap: usize) -> Result<Vec<Token>> {
    let Some(first) = ext.first() else {
        return Ok(prev.to_vec());
    };
    if prev.is_empty() {
        return Ok(ext.to_vec());
    }
    if prev.iter().any(|p| same(p, first)) {
        return anchor_splice(prev, ext, chunk_start);
    }
    if first.start + overlap >= chunk_start && prev.iter().any(|p| p.start == first.start) {
        let mut out: Vec<Token> = prev.iter().filter(|p| p.start < first.start).copied().collect();
        out.extend_from_slice(ext);
        return Ok(out);
    }
    anchor_splice(prev, ext, chunk_start)
}

/// Streaming tokenizer; one input transaction is one chunk.
#[derive(Debug, Clone)]
pub struct ChunkedTokenizerKernel {
    vocab: Arc<Vocabulary>,
    stages: u64,
    mode: SpliceMode,
    overlap: usize,
    pending: Vec<Token>,
    chunk_start: usize,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl ChunkedTokenizerKernel {
    pub fn new(
        vocab: Arc<Vocabulary>,
        stages: u64,
        mode: SpliceMode,
        bus_width: usize,
        meta_width: usize,
    ) -> Result<Self> {
        let overlap = vocab.max_token_len();
        if mode != SpliceMode::None && meta_width < overlap {
            return Err(Error::MetaTooSmall { needed: overlap, available: meta_width });
        }
        if stages == 0 {
            return Err(Error::BadParams("tokenizer needs at least one stage".into()));
        }
        Ok(Self {
            vocab,
            stages,
            mode,
            overlap,
            pending: Vec::new(),
            chunk_start: 0,
            seq: SeqGuard::default(),
            packer: TxnPacker::new(bus_width, meta_width, 0),
        })
    }

    /// Bytes of metadata the input stream must carry.
    pub fn overlap(&self) -> usize {
        self.overlap
    }

    fn emit(&mut self, tokens: &[Token], probe: &mut dyn AccessProbe, ops: &mut OpCounts) {
        for t in tokens {
            for i in t.start..t.end() {
                probe.read(i as u64);
            }
            probe.emit();
            self.packer.extend(&encode_token(t));
            ops.memory_writes += 1;
        }
    }

    /// The `back` bytes preceding the chunk, taken from the metadata.
    fn carried<'a>(&self, txn: &'a Transaction, back: usize) -> Result<&'a [u8]> {
        if txn.meta.len() < back {
            return Err(Error::MetaTooSmall { needed: back, available: txn.meta.len() });
        }
        Ok(&txn.meta[txn.meta.len() - back..])
    }
}

impl Kernel for ChunkedTokenizerKernel {
    fn name(&self) -> &str {
        "tokenizer"
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::Text
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::Tokens
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        let cs = self.chunk_start;
        let data = txn.valid();
        let mut ops = OpCounts::default();
        let merged = match self.mode {
            SpliceMode::None => tokenize_from(data, cs, &self.vocab, &mut ops)?,
            SpliceMode::Aligned => {
                let b = self.pending.first().map_or(cs, |t| t.start);
                let mut window = self.carried(txn, cs - b)?.to_vec();
                window.extend_from_slice(data);
                let ext = tokenize_from(&window, b, &self.vocab, &mut ops)?;
                splice_tokens(&self.pending, &ext, cs, self.overlap)?
            }
            SpliceMode::Literal => {
                let b = cs.saturating_sub(self.overlap);
                let mut window = self.carried(txn, cs - b)?.to_vec();
                window.extend_from_slice(data);
                let ext = tokenize_from(&window, b, &self.vocab, &mut ops)?;
                if self.pending.is_empty() {
                    ext
                } else {
                    anchor_splice(&self.pending, &ext, cs)?
                }
            }
        };
        self.chunk_start += data.len();
        let (done, keep): (Vec<Token>, Vec<Token>) = if self.mode == SpliceMode::None {
            (merged, Vec::new())
        } else {
            let edge = self.chunk_start.saturating_sub(self.overlap);
            merged.into_iter().partition(|t| t.start < edge)
        };
        self.pending = keep;
        self.emit(&done, probe, &mut ops);
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        let mut ops = OpCounts::default();
        let rest = std::mem::take(&mut self.pending);
        self.emit(&rest, probe, &mut ops);
        Ok(KernelOutput::new(self.packer.finish(), ops))
    }

    fn state(&self) -> KernelState {
        KernelState::Tokenizer {
            overlap_len: self.overlap,
            pending: self.pending.clone(),
            chunk_start: self.chunk_start,
        }
    }

    fn buffer_bytes(&self) -> u64 {
        // the pending tail plus its records
        (self.overlap * (1 + TOKEN_RECORD_BYTES)) as u64
    }

    fn meta_bytes(&self) -> u64 {
        match self.mode {
            SpliceMode::None => 0,
            _ => self.overlap as u64,
        }
    }

    fn pipeline_stages(&self) -> u64 {
        self.stages
    }
}
