use super::{stream_index, AccessProbe, Kernel, KernelOutput, KernelState, OpCounts, SeqGuard, StreamKind};
use crate::error::Result;
use crate::reference::normalize_byte;
use crate::stream::{Transaction, TxnPacker};

/// Pass-through kernel.
#[derive(Debug, Clone)]
pub struct IdentityKernel {
    kind: StreamKind,
    seq: SeqGuard,
    packer: TxnPacker,
}

impl IdentityKernel {
    pub fn new(kind: StreamKind, bus_width: usize, meta_width: usize) -> Self {
        Self { kind, seq: SeqGuard::default(), packer: TxnPacker::new(bus_width, meta_width, 0) }
    }
}

impl Kernel for IdentityKernel {
    fn name(&self) -> &str {
        "identity"
    }

    fn input_kind(&self) -> StreamKind {
        self.kind
    }

    fn output_kind(&self) -> StreamKind {
        self.kind
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        for (i, &b) in txn.valid().iter().enumerate() {
            probe.read(stream_index(txn, i));
            probe.emit();
            self.packer.push(b);
        }
        let mut out = self.packer.take_ready();
        // words pass through untouched, meta included
        for o in &mut out {
            o.meta = txn.meta.clone();
            o.meta_width = txn.meta_width;
        }
        Ok(KernelOutput::new(out, OpCounts::default()))
    }

    fn flush(&mut self, _: &mut dyn AccessProbe) -> Result<KernelOutput> {
        Ok(KernelOutput::new(self.packer.finish(), OpCounts::default()))
    }

    fn state(&self) -> KernelState {
        KernelState::Stateless { next_seq: self.seq.next() }
    }
}

/// Streaming text normalizer: lowercases ASCII capitals and drops bytes
/// outside `[a-z0-9 ]`. Optionally tags each output word with the preceding
/// `overlap` output bytes for a downstream tokenizer.
#[derive(Debug, Clone)]
pub struct TextNormalizeKernel {
    seq: SeqGuard,
    packer: TxnPacker,
    overlap: usize,
}

impl TextNormalizeKernel {
    pub fn new(bus_width: usize, meta_width: usize, overlap: usize) -> Result<Self> {
        if overlap > meta_width {
            return Err(crate::Error::MetaTooSmall { needed: overlap, available: meta_width });
        }
        Ok(Self { seq: SeqGuard::default(), packer: TxnPacker::new(bus_width, meta_width, overlap), overlap })
    }
}

impl Kernel for TextNormalizeKernel {
    fn name(&self) -> &str {
        "text-normalize"
    }

    fn input_kind(&self) -> StreamKind {
        StreamKind::Text
    }

    fn output_kind(&self) -> StreamKind {
        StreamKind::Text
    }

    fn push(&mut self, txn: &Transaction, probe: &mut dyn AccessProbe) -> Result<KernelOutput> {
        self.seq.check(txn)?;
        let mut ops = OpCounts::default();
        for (i, &b) in txn.valid().iter().enumerate() {
            ops.compares += 1;
            if let Some(n) = normalize_byte(b) {
                probe.read(stream_index(txn, i));
                probe.emit();
                self.packer.push(n);
            }
        }
        Ok(KernelOutput::new(self.packer.take_ready(), ops))
    }

    fn flush(&mut self, _: &mut dyn AccessProbe) -> Result<KernelOutput> {
        Ok(KernelOutput::new(self.packer.finish(), OpCounts::default()))
    }

    fn state(&self) -> KernelState {
        KernelState::Stateless { next_seq: self.seq.next() }
    }

    fn meta_bytes(&self) -> u64 {
        self.overlap as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{run_kernel, NoProbe};
    use crate::reference::spec_text_normalize;
    use crate::stream::{deframe, Framer};
    use crate::Error;

    #[test]
    fn identity_passes_words_through() {
        let txns = Framer::new(4).unwrap().frame_bytes(b"abcdefghij").unwrap();
        let mut k = IdentityKernel::new(StreamKind::Text, 4, 8);
        let first = k.push(&txns[0], &mut NoProbe).unwrap();
        assert_eq!(first.out_txns, vec![txns[0].clone()]);
        assert_eq!(first.stall_cycles, 0);
        let mut k = IdentityKernel::new(StreamKind::Text, 4, 8);
        assert_eq!(run_kernel(&mut k, &txns).unwrap(), txns);
    }

    #[test]
    fn out_of_order_rejected() {
        let txns = Framer::new(4).unwrap().frame_bytes(b"abcdefghij").unwrap();
        let mut k = IdentityKernel::new(StreamKind::Text, 4, 8);
        assert!(matches!(k.push(&txns[1], &mut NoProbe), Err(Error::SequenceError { expected: 0, got: 1 })));
    }

    #[test]
    fn text_normalize_matches_reference() {
        let text = b"Hello, World! 42 Times; ALL-CAPS & symbols #1";
        let txns = Framer::new(8).unwrap().frame_bytes(text).unwrap();
        let mut k = TextNormalizeKernel::new(8, 8, 5).unwrap();
        let out = run_kernel(&mut k, &txns).unwrap();
        let bytes = deframe(&out);
        assert_eq!(bytes, spec_text_normalize(text));
        // every word but the first carries the five bytes before it
        for (i, t) in out.iter().enumerate().skip(1) {
            let start = i * 8;
            assert_eq!(t.meta, bytes[start - 5..start]);
        }
        assert!(TextNormalizeKernel::new(8, 4, 5).is_err());
    }
}
