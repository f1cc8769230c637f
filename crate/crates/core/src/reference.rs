//! Whole-sample reference implementations.
//!
//! These consume an entire ADU at once and are the oracle every streamed
//! kernel is checked against.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{Adu, AduKind, Layout};

/// Per-channel normalization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormParams {
    pub fn new(mean: Vec<f32>, std: Vec<f32>) -> Result<Self> {
        let p = Self { mean, std };
        p.validate()?;
        Ok(p)
    }

    /// ImageNet statistics, the usual choice in front of CNN backbones.
    pub fn imagenet() -> Self {
        Self { mean: vec![0.485, 0.456, 0.406], std: vec![0.229, 0.224, 0.225] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() || self.mean.len() != self.std.len() {
            return Err(Error::BadParams(format!(
                "{} means vs {} standard deviations",
                self.mean.len(),
                self.std.len()
            )));
        }
        if let Some(s) = self.std.iter().find(|s| **s <= 0.0 || !s.is_finite()) {
            return Err(Error::BadParams(format!("std must be positive, got {s}")));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::BadParams("mean must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn check_channels(&self, channels: usize) -> Result<()> {
        self.validate()?;
        if self.channels() != channels {
            return Err(Error::BadParams(format!("params cover {} channels, data has {channels}", self.channels())));
        }
        Ok(())
    }

    /// The normalization of one element, in f32 as the reference defines it.
    #[inline]
    pub fn apply(&self, channel: usize, x: f32) -> f32 {
        (x - self.mean[channel]) / self.std[channel]
    }
}

/// `O[c,i,j] = (I[c,i,j] - mean[c]) / std[c]` over a CHW tensor.
pub fn spec_normalize(tensor: &Adu, params: &NormParams) -> Result<Adu> {
    let (c, h, w) = tensor.tensor_dims()?;
    params.check_channels(c)?;
    let plane = h * w;
    let out: Vec<f32> = tensor.f32_values().iter().enumerate().map(|(i, &x)| params.apply(i / plane, x)).collect();
    Adu::tensor_chw(c, h, w, &out)
}

/// Scale factor applied to every u8 intensity by `spec_to_tensor`.
pub const TENSOR_SCALE: f32 = 256.0;

/// HWC u8 image to CHW f32 tensor, each value `i / 256`.
pub fn spec_to_tensor(image: &Adu) -> Result<Adu> {
    let (h, w, c) = image.image_dims()?;
    let px = image.payload();
    let mut out = vec![0f32; h * w * c];
    for (k, &v) in px.iter().enumerate() {
        let ch = k % c;
        let pixel = k / c;
        out[ch * h * w + pixel] = v as f32 / TENSOR_SCALE;
    }
    Adu::tensor_chw(c, h, w, &out)
}

/// Bilinear resize with floor/ceil neighbours clamped at the border and
/// round-half-away-from-zero output.
pub fn spec_resize_bilinear(image: &Adu, out_dims: (usize, usize)) -> Result<Adu> {
    let (h, w, c) = image.image_dims()?;
    let (out_h, out_w) = out_dims;
    if out_h == 0 || out_w == 0 {
        return Err(Error::BadDims(format!("resize to {out_h}x{out_w}")));
    }
    let px = image.payload();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let at = |r: usize, col: usize, ch: usize| px[(r * w + col) * c + ch] as f64;
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let y_in = y as f64 * sy;
        let y1 = (y_in.floor() as usize).min(h - 1);
        let y2 = (y_in.ceil() as usize).min(h - 1);
        let dy = y_in - y_in.floor();
        for x in 0..out_w {
            let x_in = x as f64 * sx;
            let x1 = (x_in.floor() as usize).min(w - 1);
            let x2 = (x_in.ceil() as usize).min(w - 1);
            let dx = x_in - x_in.floor();
            for ch in 0..c {
                let v = (1.0 - dx) * (1.0 - dy) * at(y1, x1, ch)
                    + dx * (1.0 - dy) * at(y1, x2, ch)
                    + (1.0 - dx) * dy * at(y2, x1, ch)
                    + dx * dy * at(y2, x2, ch);
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Adu::image(out_h, out_w, c, out)
}

/// Keeps `[a-z0-9 ]`, lowercasing ASCII capitals and dropping every other byte.
pub fn spec_text_normalize(text: &[u8]) -> Vec<u8> {
    text.iter().filter_map(|&b| normalize_byte(b)).collect()
}

#[inline]
pub(crate) fn normalize_byte(b: u8) -> Option<u8> {
    match b {
        b'a'..=b'z' | b'0'..=b'9' | b' ' => Some(b),
        b'A'..=b'Z' => Some(b.to_ascii_lowercase()),
        _ => None,
    }
}

pub type TokenId = u32;

/// A token occurrence: vocabulary id plus its byte span in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub start: usize,
    pub len: usize,
}

impl Token {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Byte-string vocabulary with a fixed maximum token length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, TokenId>,
    max_token_len: usize,
}

impl Vocabulary {
    /// Builds a vocabulary in the given order; duplicates keep their first id.
    pub fn new<I, T>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<Vec<u8>>,
    {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new(), max_token_len: 0 };
        for t in tokens {
            let t: Vec<u8> = t.into();
            if t.is_empty() {
                return Err(Error::BadParams("empty vocabulary token".into()));
            }
            if v.index.contains_key(&t) {
                continue;
            }
            v.max_token_len = v.max_token_len.max(t.len());
            v.index.insert(t.clone(), v.tokens.len() as TokenId);
            v.tokens.push(t);
        }
        if v.tokens.is_empty() {
            return Err(Error::BadParams("empty vocabulary".into()));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_token_len(&self) -> usize {
        self.max_token_len
    }

    pub fn token(&self, id: TokenId) -> &[u8] {
        &self.tokens[id as usize]
    }

    pub fn id(&self, token: &[u8]) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[u8]> {
        self.tokens.iter().map(Vec::as_slice)
    }

    /// Longest vocabulary token that prefixes `text[at..]`.
    pub fn longest_match(&self, text: &[u8], at: usize) -> Option<(TokenId, usize)> {
        let room = (text.len() - at).min(self.max_token_len);
        (1..=room).rev().find_map(|len| self.id(&text[at..at + len]).map(|id| (id, len)))
    }

    /// Parses the newline-delimited vocabulary format. Within a line `\s` is a
    /// space, `\t` tab, `\n` newline, `\\` a backslash and `\xHH` any byte;
    /// blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            tokens.push(unescape(line).map_err(|e| Error::Format(format!("vocab line {}: {e}", lineno + 1)))?);
        }
        Self::new(tokens)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&escape(t));
            out.push('\n');
        }
        out
    }

    /// Vocabulary reproducing the greedy tokenization listed for the
    /// example prompt "This is an example of an input prompt". Its longest
    /// token, " input", is six bytes.
    pub fn demo() -> Self {
        Self::new(demo_tokens(true)).expect("static vocabulary")
    }

    /// Same as [`Vocabulary::demo`] with tokens capped at five bytes
    /// (" input" becomes " in" + "put").
    pub fn demo_max5() -> Self {
        Self::new(demo_tokens(false)).expect("static vocabulary")
    }

    pub fn render(&self, tokens: &[Token]) -> Vec<String> {
        tokens.iter().map(|t| String::from_utf8_lossy(self.token(t.id)).into_owned()).collect()
    }
}

fn demo_tokens(with_input: bool) -> Vec<Vec<u8>> {
    let mut tokens: Vec<Vec<u8>> = Vec::new();
    for b in (b'a'..=b'z').chain(b'A'..=b'Z').chain(b'0'..=b'9') {
        tokens.push(vec![b]);
    }
    tokens.push(b" ".to_vec());
    let words: &[&str] = &["This", " is", " an", " e", " exam", "xam", "pl", "ple", " of", " prom", "pt"];
    tokens.extend(words.iter().map(|w| w.as_bytes().to_vec()));
    if with_input {
        tokens.push(b" input".to_vec());
    } else {
        tokens.push(b" in".to_vec());
        tokens.push(b"put".to_vec());
    }
    tokens
}

fn escape(token: &[u8]) -> String {
    let mut s = String::new();
    for &b in token {
        match b {
            b' ' => s.push_str("\\s"),
            b'\t' => s.push_str("\\t"),
            b'\n' => s.push_str("\\n"),
            b'\\' => s.push_str("\\\\"),
            0x21..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\x{b:02x}")),
        }
    }
    s
}

fn unescape(line: &str) -> std::result::Result<Vec<u8>, String> {
    let bytes = line.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        let esc = *bytes.get(i + 1).ok_or("dangling backslash")?;
        match esc {
            b's' => out.push(b' '),
            b't' => out.push(b'\t'),
            b'n' => out.push(b'\n'),
            b'\\' => out.push(b'\\'),
            b'x' => {
                let hex = line.get(i + 2..i + 4).ok_or("truncated \\x escape")?;
                out.push(u8::from_str_radix(hex, 16).map_err(|_| format!("bad hex {hex}"))?);
                i += 2;
            }
            other => return Err(format!("unknown escape \\{}", other as char)),
        }
        i += 2;
    }
    Ok(out)
}

/// Greedy longest-prefix tokenization of the whole prompt.
pub fn spec_tokenize(text: &[u8], vocab: &Vocabulary) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < text.len() {
        let (id, len) = vocab.longest_match(text, at).ok_or(Error::NoToken { offset: at, byte: text[at] })?;
        out.push(Token { id, start: at, len });
        at += len;
    }
    Ok(out)
}

/// Convenience: tokenizes a text ADU.
pub fn spec_tokenize_adu(adu: &Adu, vocab: &Vocabulary) -> Result<Vec<Token>> {
    adu.expect_kind(AduKind::Text)?;
    debug_assert_eq!(adu.layout(), Layout::Flat);
    spec_tokenize(adu.payload(), vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, c: usize, px: Vec<u8>) -> Adu {
        Adu::image(h, w, c, px).unwrap()
    }

    #[test]
    fn normalize_identity_params() {
        let t = Adu::tensor_chw(1, 1, 3, &[0.25, -3.0, 7.5]).unwrap();
        let p = NormParams::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(spec_normalize(&t, &p).unwrap(), t);
    }

    #[test]
    fn normalize_zero_numerator() {
        let t = Adu::tensor_chw(1, 1, 1, &[0.5]).unwrap();
        let p = NormParams::new(vec![0.5], vec![0.5]).unwrap();
        assert_eq!(spec_normalize(&t, &p).unwrap().f32_values(), vec![0.0]);
    }

    #[test]
    fn normalize_rejects_bad_std() {
        assert!(matches!(NormParams::new(vec![0.0], vec![0.0]), Err(Error::BadParams(_))));
        assert!(matches!(NormParams::new(vec![0.0], vec![-1.0]), Err(Error::BadParams(_))));
        let t = Adu::tensor_chw(2, 1, 1, &[0.5, 0.5]).unwrap();
        let bad = NormParams { mean: vec![0.0, 0.0], std: vec![1.0, 0.0] };
        assert!(matches!(spec_normalize(&t, &bad), Err(Error::BadParams(_))));
        let one = NormParams::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(spec_normalize(&t, &one), Err(Error::BadParams(_))));
    }

    #[test]
    fn to_tensor_values() {
        let t = spec_to_tensor(&img(1, 2, 1, vec![0, 255])).unwrap();
        assert_eq!(t.f32_values(), vec![0.0, 0.99609375]);
    }

    #[test]
    fn to_tensor_permutes_hwc_to_chw() {
        let px: Vec<u8> = (0..12).map(|v| v * 20).collect();
        let t = spec_to_tensor(&img(2, 2, 3, px.clone())).unwrap();
        assert_eq!(t.tensor_dims().unwrap(), (3, 2, 2));
        let vals = t.f32_values();
        for i in 0..2 {
            for j in 0..2 {
                for c in 0..3 {
                    assert_eq!(vals[c * 4 + i * 2 + j], px[(i * 2 + j) * 3 + c] as f32 / 256.0);
                }
            }
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let px: Vec<u8> = (0..27).map(|v| (v * 9) as u8).collect();
        let im = img(3, 3, 3, px);
        assert_eq!(spec_resize_bilinear(&im, (3, 3)).unwrap(), im);
        let flat = img(4, 5, 1, vec![77; 20]);
        for dims in [(1, 1), (2, 3), (7, 9), (4, 5)] {
            let out = spec_resize_bilinear(&flat, dims).unwrap();
            assert!(out.payload().iter().all(|&v| v == 77));
        }
    }

    #[test]
    fn resize_two_to_one() {
        let im = img(2, 2, 1, vec![0, 100, 100, 200]);
        assert_eq!(spec_resize_bilinear(&im, (1, 1)).unwrap().payload(), &[0]);
    }

    #[test]
    fn resize_upscale_half_pixel() {
        // 1x2 -> 1x4: x_in = 0, .5, 1, 1.5 -> 0, 50, 100, 100 (clamped)
        let im = img(1, 2, 1, vec![0, 100]);
        assert_eq!(spec_resize_bilinear(&im, (1, 4)).unwrap().payload(), &[0, 50, 100, 100]);
        assert!(matches!(spec_resize_bilinear(&im, (0, 4)), Err(Error::BadDims(_))));
    }

    #[test]
    fn text_normalize_rules() {
        assert_eq!(spec_text_normalize(b"ABC"), b"abc");
        assert_eq!(spec_text_normalize(b"a!b"), b"ab");
        assert_eq!(spec_text_normalize(b"ok 42"), b"ok 42");
        assert_eq!(spec_text_normalize("caf\u{e9}".as_bytes()), b"caf");
    }

    #[test]
    fn example_prompt_tokens() {
        let v = Vocabulary::demo();
        let toks = spec_tokenize(b"This is an example of an input prompt", &v).unwrap();
        assert_eq!(v.render(&toks), ["This", " is", " an", " exam", "ple", " of", " an", " input", " prom", "pt"]);
        assert_eq!(v.max_token_len(), 6);
        assert_eq!(Vocabulary::demo_max5().max_token_len(), 5);
    }

    #[test]
    fn single_char_and_missing_byte() {
        let v = Vocabulary::demo();
        assert_eq!(v.render(&spec_tokenize(b"a", &v).unwrap()), ["a"]);
        assert!(matches!(spec_tokenize(b"a!", &v), Err(Error::NoToken { offset: 1, byte: b'!' })));
    }

    #[test]
    fn vocab_file_roundtrip() {
        let v = Vocabulary::new(vec![b" a".to_vec(), b"b\\".to_vec(), vec![0xff, b'c'], b"x".to_vec()]).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("\\sa\n"));
        assert_eq!(Vocabulary::parse(&text).unwrap(), v);
        assert!(Vocabulary::parse("\\q\n").is_err());
        assert!(Vocabulary::parse("\n\n").is_err());
    }
}
