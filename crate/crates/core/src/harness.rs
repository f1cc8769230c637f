//! Reference-versus-kernel equivalence checks, seeded corpora and access-locality
//! tracing.

use std::collections::HashMap;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CorpusConfig, InputKind, PipelineConfig, PipelineSpec, StageSpec};
use crate::error::{Error, Result};
use crate::kernels::{AccessProbe, Kernel};
use crate::lut::PIXEL_VALUES;
use crate::pipeline::{build_pipeline, reference_output, Output, TableCache};
use crate::reference::{spec_text_normalize, Token, Vocabulary};
use crate::stream::{Adu, Transaction};

/// Positions reported per verdict at most.
const MAX_POSITIONS: usize = 32;

/// Side-by-side view of two token sequences around their first divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDiff {
    pub first_divergence: usize,
    pub expected: Vec<String>,
    pub got: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub tolerance: f64,
    pub exact_match: bool,
    pub max_abs_error: f64,
    pub mismatch_count: usize,
    /// First differing element positions.
    pub mismatch_positions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_diff: Option<TokenDiff>,
}

impl Verdict {
    fn numeric(diffs: impl Iterator<Item = f64>, tolerance: f64) -> Self {
        let mut max = 0.0f64;
        let mut positions = Vec::new();
        let mut count = 0;
        for (i, d) in diffs.enumerate() {
            if d != 0.0 {
                count += 1;
                if positions.len() < MAX_POSITIONS {
                    positions.push(i);
                }
            }
            max = max.max(d);
        }
        Self {
            passed: max <= tolerance,
            tolerance,
            exact_match: count == 0,
            max_abs_error: max,
            mismatch_count: count,
            mismatch_positions: positions,
            token_diff: None,
        }
    }

    fn failed(tolerance: f64) -> Self {
        Self {
            passed: false,
            tolerance,
            exact_match: false,
            max_abs_error: f64::INFINITY,
            mismatch_count: 1,
            mismatch_positions: Vec::new(),
            token_diff: None,
        }
    }
}

fn render(tokens: &[Token], vocab: Option<&Vocabulary>) -> Vec<String> {
    tokens
        .iter()
        .map(|t| match vocab {
            Some(v) => format!("{:?}@{}", String::from_utf8_lossy(v.token(t.id)), t.start),
            None => format!("#{}@{}", t.id, t.start),
        })
        .collect()
}

/// Compares a streamed output with the reference under `tolerance`.
/// Tensors compare by value, but only bit-identical floats are exact.
pub fn compare_outputs(got: &Output, want: &Output, tolerance: f64, vocab: Option<&Vocabulary>) -> Result<Verdict> {
    match (got, want) {
        (Output::Image(g), Output::Image(w)) => {
            if g.dims() != w.dims() {
                return Err(Error::CompareError(format!("image dims {:?} vs {:?}", g.dims(), w.dims())));
            }
            let diffs = g.payload().iter().zip(w.payload()).map(|(a, b)| (*a as f64 - *b as f64).abs());
            Ok(Verdict::numeric(diffs, tolerance))
        }
        (Output::Tensor(g), Output::Tensor(w)) => {
            if g.dims() != w.dims() {
                return Err(Error::CompareError(format!("tensor dims {:?} vs {:?}", g.dims(), w.dims())));
            }
            let (gv, wv) = (g.f32_values(), w.f32_values());
            let diffs = gv.iter().zip(&wv).map(|(a, b)| {
                if a.to_bits() == b.to_bits() {
                    0.0
                } else {
                    // a differing bit pattern never counts as exact
                    ((*a as f64) - (*b as f64)).abs().max(f64::MIN_POSITIVE)
                }
            });
            Ok(Verdict::numeric(diffs, tolerance))
        }
        (Output::Text(g), Output::Text(w)) => {
            let mut v = Verdict::numeric(g.iter().zip(w).map(|(a, b)| f64::from(u8::from(a != b))), 0.0);
            if g.len() != w.len() {
                v = Verdict { passed: false, exact_match: false, mismatch_count: v.mismatch_count + 1, ..v };
            }
            Ok(Verdict { tolerance, ..v })
        }
        (Output::Tokens(g), Output::Tokens(w)) => {
            let first =
                g.iter().zip(w).position(|(a, b)| a != b).or((g.len() != w.len()).then(|| g.len().min(w.len())));
            let Some(first) = first else {
                return Ok(Verdict::numeric(std::iter::empty(), tolerance));
            };
            let lo = first.saturating_sub(3);
            let window = |t: &[Token]| render(&t[lo.min(t.len())..(first + 4).min(t.len())], vocab);
            let mismatch_count = g.iter().zip(w).filter(|(a, b)| a != b).count() + g.len().abs_diff(w.len());
            Ok(Verdict {
                passed: false,
                tolerance,
                exact_match: false,
                max_abs_error: 1.0,
                mismatch_count,
                mismatch_positions: vec![first],
                token_diff: Some(TokenDiff { first_divergence: first, expected: window(w), got: window(g) }),
            })
        }
        (g, w) => Err(Error::CompareError(format!("{} output vs {} reference", g.kind_name(), w.kind_name()))),
    }
}

/// Frames `adu`, streams it through the pipeline and checks the result
/// against the reference composition.
pub fn run_equivalence(cfg: &PipelineConfig, spec: &PipelineSpec, adu: &Adu, cache: &TableCache) -> Result<Verdict> {
    let mut built = build_pipeline(cfg, spec, adu, cache)?;
    let want = reference_output(cfg, spec, adu, cache)?;
    let got = built.run()?;
    compare_outputs(&got, &want, spec.tolerance(), built.vocab.as_deref())
}

/// One sample that failed, with enough context to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sample: usize,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineVerdict {
    pub pipeline: String,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: usize,
    pub exact: usize,
    pub max_abs_error: f64,
    pub counterexamples: Vec<Counterexample>,
}

impl PipelineVerdict {
    pub fn all_passed(&self) -> bool {
        self.passed == self.samples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub pipelines: Vec<PipelineVerdict>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.pipelines.iter().all(PipelineVerdict::all_passed)
    }
}

fn describe(adu: &Adu) -> String {
    match adu.kind() {
        crate::stream::AduKind::Text => String::from_utf8_lossy(adu.payload()).into_owned(),
        _ => format!("{} {:?}", adu.kind(), adu.dims()),
    }
}

/// Verifies one pipeline over `corpus`; every failing sample is recorded.
pub fn verify_pipeline(
    cfg: &PipelineConfig,
    spec: &PipelineSpec,
    corpus: &[Adu],
    cache: &TableCache,
) -> PipelineVerdict {
    let tolerance = spec.tolerance();
    let results: Vec<Result<Verdict>> = std::thread::scope(|s| {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
        let chunk = corpus.len().div_ceil(workers).max(1);
        let handles: Vec<_> = corpus
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|a| run_equivalence(cfg, spec, a, cache)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("verification thread panicked")).collect()
    });
    let mut v = PipelineVerdict {
        pipeline: spec.name.clone(),
        tolerance,
        samples: corpus.len(),
        passed: 0,
        exact: 0,
        max_abs_error: 0.0,
        counterexamples: Vec::new(),
    };
    for (i, (r, adu)) in results.into_iter().zip(corpus).enumerate() {
        match r {
            Ok(verdict) => {
                v.max_abs_error = v.max_abs_error.max(verdict.max_abs_error);
                v.exact += usize::from(verdict.exact_match);
                if verdict.passed {
                    v.passed += 1;
                } else {
                    v.counterexamples.push(Counterexample {
                        sample: i,
                        input: describe(adu),
                        error: None,
                        verdict: Some(verdict),
                    });
                }
            }
            Err(e) => {
                v.max_abs_error = f64::INFINITY;
                v.counterexamples.push(Counterexample {
                    sample: i,
                    input: describe(adu),
                    error: Some(e.to_string()),
                    verdict: Some(Verdict::failed(tolerance)),
                });
            }
        }
    }
    v
}

/// The corpus a pipeline is verified on.
pub fn corpus_for(cfg: &PipelineConfig, spec: &PipelineSpec) -> Result<Vec<Adu>> {
    let c = &cfg.corpus;
    match spec.input {
        InputKind::Image => generate_corpus("images", c, cfg.seed),
        InputKind::Text => {
            let mut out = generate_corpus("prompts", c, cfg.seed)?;
            out.extend(fixtures(c)?);
            Ok(out)
        }
        InputKind::Fixture => fixtures(c),
    }
}

fn fixtures(c: &CorpusConfig) -> Result<Vec<Adu>> {
    c.fixtures.iter().map(|f| Adu::text(f.as_bytes())).collect()
}

/// Runs every pipeline in the config (or only `only`) over its corpus.
pub fn verify_config(cfg: &PipelineConfig, only: Option<&str>, cache: &TableCache) -> Result<VerifyReport> {
    let mut pipelines = Vec::new();
    for spec in &cfg.pipelines {
        if only.is_some_and(|n| n != spec.name) {
            continue;
        }
        // a missing vocabulary is a config problem, not a per-sample mismatch
        for stage in &spec.stages {
            if let StageSpec::Tokenize { vocab, .. } = stage {
                cache.vocab(cfg, vocab)?;
            }
        }
        let corpus = corpus_for(cfg, spec)?;
        pipelines.push(verify_pipeline(cfg, spec, &corpus, cache));
    }
    if let Some(n) = only {
        if pipelines.is_empty() {
            return Err(Error::Config(format!("no pipeline named {n}")));
        }
    }
    Ok(VerifyReport { seed: cfg.seed, pipelines })
}

/// Pixel sampler over 0..=255: uniform, or Zipf over a seeded permutation
/// of the values.
pub struct PixelSampler {
    values: Vec<u8>,
    dist: Option<WeightedIndex<f64>>,
}

impl PixelSampler {
    pub fn uniform() -> Self {
        Self { values: (0..=255).collect(), dist: None }
    }

    pub fn zipf(exponent: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(Error::BadParams(format!("zipf exponent {exponent}")));
        }
        let mut values: Vec<u8> = (0..=255).collect();
        values.shuffle(rng);
        let weights = (1..=PIXEL_VALUES).map(|r| (r as f64).powf(-exponent));
        let dist = WeightedIndex::new(weights).map_err(|e| Error::BadParams(e.to_string()))?;
        Ok(Self { values, dist: Some(dist) })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u8 {
        match &self.dist {
            Some(d) => self.values[d.sample(rng)],
            None => rng.gen(),
        }
    }
}

/// Share of `pixels` taken by the `k` most frequent values.
pub fn top_k_mass(pixels: &[u8], k: usize) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let mut counts = [0u64; 256];
    for &p in pixels {
        counts[p as usize] += 1;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts[..k.min(256)].iter().sum::<u64>() as f64 / pixels.len() as f64
}

/// Seeded corpus. Kinds: `images` (the configured distribution),
/// `uniform-images`, `zipf-images` and `prompts`.
pub fn generate_corpus(kind: &str, params: &CorpusConfig, seed: u64) -> Result<Vec<Adu>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distribution = match kind {
        "images" => params.distribution.as_str(),
        "uniform-images" => "uniform",
        "zipf-images" => "zipf",
        "prompts" => return Ok(generate_prompts(params, &mut rng)),
        other => return Err(Error::BadKind(other.to_string())),
    };
    let sampler = match distribution {
        "uniform" => PixelSampler::uniform(),
        "zipf" => PixelSampler::zipf(params.zipf_exponent, &mut rng)?,
        other => return Err(Error::BadKind(format!("{other} pixel distribution"))),
    };
    (0..params.images)
        .map(|_| {
            let h = rng.gen_range(params.min_side..=params.max_side);
            let w = rng.gen_range(params.min_side..=params.max_side);
            let px = (0..h * w * params.channels).map(|_| sampler.sample(&mut rng)).collect();
            Adu::image(h, w, params.channels, px)
        })
        .collect()
}

/// One image drawn from the named distribution.
pub fn generate_image(h: usize, w: usize, c: usize, distribution: &str, zipf_exponent: f64, seed: u64) -> Result<Adu> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = match distribution {
        "uniform" => PixelSampler::uniform(),
        "zipf" => PixelSampler::zipf(zipf_exponent, &mut rng)?,
        other => return Err(Error::BadKind(format!("{other} pixel distribution"))),
    };
    Adu::image(h, w, c, (0..h * w * c).map(|_| sampler.sample(&mut rng)).collect())
}

const WORDS: &[&str] = &[
    "the",
    "image",
    "video",
    "frame",
    "describe",
    "summarize",
    "please",
    "what",
    "is",
    "in",
    "this",
    "scene",
    "object",
    "person",
    "car",
    "road",
    "list",
    "all",
    "colors",
    "count",
    "how",
    "many",
    "people",
    "are",
    "there",
    "and",
    "of",
    "a",
    "an",
    "example",
    "input",
    "prompt",
    "model",
    "answer",
    "briefly",
    "detail",
    "left",
    "right",
];

const NOISE: &[&str] = &[",", ".", "!", "?", ";", ":", "-", "'", "(", ")"];

fn fresh_words(rng: &mut impl Rng, len: usize) -> String {
    let mut s = String::new();
    while s.len() < len {
        if !s.is_empty() {
            s.push(' ');
        }
        let mut w = WORDS[rng.gen_range(0..WORDS.len())].to_string();
        match rng.gen_range(0..10) {
            0 => w = w.to_uppercase(),
            1 | 2 => {
                let mut c = w.chars();
                w = c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default();
            }
            3 => w = rng.gen_range(0..1000).to_string(),
            _ => {}
        }
        s.push_str(&w);
        if rng.gen_bool(0.15) {
            s.push_str(NOISE[rng.gen_range(0..NOISE.len())]);
        }
    }
    s
}

/// Printable-ASCII prompts; with probability `shared_prefix` a prompt starts
/// with a prefix of an earlier one, as edited prompts do.
fn generate_prompts(params: &CorpusConfig, rng: &mut ChaCha8Rng) -> Vec<Adu> {
    let mut texts: Vec<String> = Vec::with_capacity(params.prompts);
    for _ in 0..params.prompts {
        let len = rng.gen_range(params.prompt_min_len..=params.prompt_max_len);
        let mut s = String::new();
        if !texts.is_empty() && rng.gen_bool(params.shared_prefix.clamp(0.0, 1.0)) {
            let base = &texts[rng.gen_range(0..texts.len())];
            let cut = rng.gen_range(1..=base.len());
            s.push_str(&base[..cut]);
        }
        if s.len() < len {
            s.push_str(&fresh_words(rng, len - s.len()));
        }
        s.truncate(len);
        texts.push(s);
    }
    texts.into_iter().map(|t| Adu::text(t.into_bytes()).expect("non-empty prompt")).collect()
}

/// Vocabulary for the generated prompts: every printable ASCII byte plus the
/// `vocab_size` most frequent 2..=5-byte substrings of a seeded sample, raw
/// and normalized.
pub fn generate_vocabulary(params: &CorpusConfig, seed: u64) -> Result<Vocabulary> {
    let sample_params = CorpusConfig { prompts: params.prompts.max(50), ..params.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0076_6f63_6162);
    let prompts = generate_prompts(&sample_params, &mut rng);
    let mut counts: HashMap<&[u8], u64> = HashMap::new();
    let normalized: Vec<Vec<u8>> = prompts.iter().map(|p| spec_text_normalize(p.payload())).collect();
    for text in prompts.iter().map(Adu::payload).chain(normalized.iter().map(Vec::as_slice)) {
        for len in 2..=5 {
            for w in text.windows(len) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&[u8], u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let singles = (0x20u8..=0x7e).map(|b| vec![b]);
    let multi = ranked.into_iter().take(params.vocab_size).map(|(t, _)| t.to_vec());
    Vocabulary::new(singles.chain(multi))
}

/// Read window of one kernel over one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLocality {
    pub stage: String,
    pub output_units: usize,
    /// Largest `max - min + 1` over the input indices of one output unit.
    pub max_span: u64,
    /// Bytes the kernel may look back: its buffer plus metadata.
    pub capacity: u64,
    /// Reads outside `[txn_start - capacity, txn_end)` of the current push.
    pub out_of_window_reads: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub pipeline: String,
    pub stages: Vec<StageLocality>,
}

struct WindowProbe {
    lo: u64,
    hi: u64,
    current: Vec<u64>,
    units: usize,
    max_span: u64,
    outside: u64,
}

impl AccessProbe for WindowProbe {
    fn read(&mut self, index: u64) {
        if index < self.lo || index >= self.hi {
            self.outside += 1;
        }
        self.current.push(index);
    }

    fn emit(&mut self) {
        if let (Some(min), Some(max)) = (self.current.iter().min(), self.current.iter().max()) {
            self.max_span = self.max_span.max(max - min + 1);
        }
        self.current.clear();
        self.units += 1;
    }
}

fn trace_stage(kernel: &mut dyn Kernel, input: &[Transaction]) -> Result<(StageLocality, Vec<Transaction>)> {
    let capacity = kernel.buffer_bytes() + kernel.meta_bytes();
    let mut probe = WindowProbe { lo: 0, hi: 0, current: Vec::new(), units: 0, max_span: 0, outside: 0 };
    let mut out = Vec::new();
    let mut end = 0u64;
    for t in input {
        let start = t.seq * t.bus_width() as u64;
        end = start + t.valid_bytes as u64;
        probe.lo = start.saturating_sub(capacity);
        probe.hi = end;
        out.extend(kernel.push(t, &mut probe)?.out_txns);
    }
    probe.lo = end.saturating_sub(capacity);
    probe.hi = end;
    out.extend(kernel.flush(&mut probe)?.out_txns);
    let report = StageLocality {
        stage: kernel.name().to_string(),
        output_units: probe.units,
        max_span: probe.max_span,
        capacity,
        out_of_window_reads: probe.outside,
    };
    Ok((report, out))
}

/// Records, per output unit of every stage, which input bytes were read.
pub fn trace_access_locality(
    cfg: &PipelineConfig,
    spec: &PipelineSpec,
    adu: &Adu,
    cache: &TableCache,
) -> Result<LocalityReport> {
    let mut built = build_pipeline(cfg, spec, adu, cache)?;
    let mut stream = built.input.clone();
    let mut stages = Vec::new();
    for k in built.stages.iter_mut() {
        let (report, out) = trace_stage(k.as_mut(), &stream)?;
        stages.push(report);
        stream = out;
    }
    Ok(LocalityReport { pipeline: spec.name.clone(), stages })
}
