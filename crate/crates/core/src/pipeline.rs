//! Turns a [`PipelineSpec`] into kernels for one concrete input, and
//! composes the matching whole-sample reference.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::config::{ComparisonInput, ComparisonSpec, PipelineConfig, PipelineSpec, ResizeOrder, StageSpec};
use crate::cost::{compare_impls, Comparison, Variant};
use crate::error::{Error, Result};
use crate::harness::{generate_image, generate_vocabulary};
use crate::kernels::{
    decode_tokens, run_chain, ChunkedTokenizerKernel, FullBufferResizeKernel, IdentityKernel, InterpUnit, Kernel,
    NormalizeMode, ReshapeScaleKernel, RowBufferResizeKernel, SpliceMode, StreamKind, StreamNormalizeKernel,
    TextNormalizeKernel, TileResizeKernel,
};
use crate::lut::{
    build_interp_tables, build_normalize_tables, build_scaler_table, plan_placement, AccessHint, InterpTables,
    LookupTable, PixelDomain, PlacementConfig, TieredTable,
};
use crate::reference::{
    spec_normalize, spec_resize_bilinear, spec_text_normalize, spec_to_tensor, spec_tokenize, NormParams, Token,
    Vocabulary,
};
use crate::stream::{build_tile_map, deframe, serialize_tile_major, Adu, AduKind, Framer, Transaction};

type InterpKey = ((usize, usize), (usize, usize), PixelDomain);
type NormKey = (Vec<u32>, Vec<u32>, bool);

/// Tables and vocabularies shared by every pipeline built from one config.
#[derive(Default)]
pub struct TableCache {
    interp: Mutex<HashMap<InterpKey, Arc<InterpTables>>>,
    normalize: Mutex<HashMap<NormKey, Vec<Arc<LookupTable>>>>,
    scaler: OnceLock<Arc<LookupTable>>,
    vocabs: Mutex<HashMap<String, Arc<Vocabulary>>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn interp(
        &self,
        in_dims: (usize, usize),
        out_dims: (usize, usize),
        domain: PixelDomain,
    ) -> Result<Arc<InterpTables>> {
        let key = (in_dims, out_dims, domain);
        if let Some(t) = self.interp.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(build_interp_tables(in_dims, out_dims, domain)?);
        self.interp.lock().unwrap().insert(key, t.clone());
        Ok(t)
    }

    pub fn normalize(&self, params: &NormParams, fused: bool) -> Result<Vec<Arc<LookupTable>>> {
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let key = (bits(&params.mean), bits(&params.std), fused);
        let mut map = self.normalize.lock().unwrap();
        if let Some(t) = map.get(&key) {
            return Ok(t.clone());
        }
        let tables: Vec<_> = build_normalize_tables(params, fused)?.into_iter().map(Arc::new).collect();
        map.insert(key, tables.clone());
        Ok(tables)
    }

    pub fn scaler(&self) -> Arc<LookupTable> {
        self.scaler.get_or_init(|| Arc::new(build_scaler_table())).clone()
    }

    /// `demo`, `demo-max5`, `generated`, or a file path relative to the config.
    pub fn vocab(&self, cfg: &PipelineConfig, name: &str) -> Result<Arc<Vocabulary>> {
        if let Some(v) = self.vocabs.lock().unwrap().get(name) {
            return Ok(v.clone());
        }
        let v = Arc::new(match name {
            "demo" => Vocabulary::demo(),
            "demo-max5" => Vocabulary::demo_max5(),
            "generated" => generate_vocabulary(&cfg.corpus, cfg.seed)?,
            path => {
                let p = cfg.resolve(path);
                if !p.is_file() {
                    return Err(Error::Config(format!("vocabulary file {} not found", p.display())));
                }
                Vocabulary::load(&p)?
            }
        });
        self.vocabs.lock().unwrap().insert(name.to_string(), v.clone());
        Ok(v)
    }
}

/// Shape of the stream between two stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Image(usize, usize, usize),
    /// `(channels, height, width)`
    Tensor(usize, usize, usize),
    Text,
    Tokens,
}

/// Decoded pipeline or reference output.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Image(Adu),
    Tensor(Adu),
    Text(Vec<u8>),
    Tokens(Vec<Token>),
}

impl Output {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Output::Image(_) => "image",
            Output::Tensor(_) => "tensor",
            Output::Text(_) => "text",
            Output::Tokens(_) => "tokens",
        }
    }
}

/// Kernels ready to run plus the framed input.
pub struct BuiltPipeline {
    pub name: String,
    pub stages: Vec<Box<dyn Kernel>>,
    pub input: Vec<Transaction>,
    pub out_shape: Shape,
    pub vocab: Option<Arc<Vocabulary>>,
}

impl BuiltPipeline {
    pub fn run(&mut self) -> Result<Output> {
        let out = run_chain(&mut self.stages, &self.input)?;
        self.decode(&out)
    }

    pub fn decode(&self, txns: &[Transaction]) -> Result<Output> {
        let bytes = deframe(txns);
        Ok(match self.out_shape {
            Shape::Image(h, w, c) => Output::Image(Adu::image(h, w, c, bytes)?),
            Shape::Tensor(c, h, w) => {
                Output::Tensor(Adu::new(AduKind::TensorF32, vec![c, h, w], crate::stream::Layout::Chw, bytes)?)
            }
            Shape::Text => Output::Text(bytes),
            Shape::Tokens => {
                let vocab =
                    self.vocab.as_ref().ok_or_else(|| Error::PipelineTypeError("tokens without vocabulary".into()))?;
                Output::Tokens(decode_tokens(&bytes, vocab)?)
            }
        })
    }
}

/// Configured mean/std, else ImageNet values for 3 channels and 0.5 otherwise.
pub fn norm_params(mean: &Option<Vec<f32>>, std: &Option<Vec<f32>>, channels: usize) -> Result<NormParams> {
    let fallback = if channels == 3 {
        NormParams::imagenet()
    } else {
        NormParams { mean: vec![0.5; channels], std: vec![0.5; channels] }
    };
    let p = NormParams::new(mean.clone().unwrap_or(fallback.mean), std.clone().unwrap_or(fallback.std))?;
    p.check_channels(channels)?;
    Ok(p)
}

fn input_shape(adu: &Adu) -> Result<Shape> {
    Ok(match adu.kind() {
        AduKind::ImageU8 => {
            let (h, w, c) = adu.image_dims()?;
            Shape::Image(h, w, c)
        }
        AduKind::TensorF32 => {
            let (c, h, w) = adu.tensor_dims()?;
            Shape::Tensor(c, h, w)
        }
        AduKind::Text => Shape::Text,
    })
}

fn stage_error(i: usize, stage: &StageSpec, shape: Shape) -> Error {
    Error::PipelineTypeError(format!("stage {i} ({}) cannot take {shape:?}", stage.input_kind()))
}

struct Placer {
    config: PlacementConfig,
    remaining: u64,
    hint: AccessHint,
}

impl Placer {
    fn place(&mut self, table: &Arc<LookupTable>) -> TieredTable {
        let p = plan_placement(table, &self.config, self.remaining, &self.hint);
        self.remaining = self.remaining.saturating_sub(p.fast_bytes());
        TieredTable::new(table.clone(), p)
    }
}

/// Builds the kernels of `spec` for `adu` and frames the input.
pub fn build_pipeline(
    cfg: &PipelineConfig,
    spec: &PipelineSpec,
    adu: &Adu,
    cache: &TableCache,
) -> Result<BuiltPipeline> {
    build_with_budget(cfg, spec, adu, cache, cfg.fast_budget())
}

/// Same as [`build_pipeline`] with an explicit fast-tier budget.
pub fn build_with_budget(
    cfg: &PipelineConfig,
    spec: &PipelineSpec,
    adu: &Adu,
    cache: &TableCache,
    budget: u64,
) -> Result<BuiltPipeline> {
    let bus = spec.bus_width.unwrap_or(cfg.bus_width);
    let meta = cfg.meta_width;
    let mut shape = input_shape(adu)?;
    let hint =
        if adu.kind() == AduKind::ImageU8 { AccessHint::from_pixels(adu.payload()) } else { AccessHint::default() };
    let mut placer = Placer { config: cfg.placement_config(), remaining: budget, hint };
    let mut stages: Vec<Box<dyn Kernel>> = Vec::new();
    let mut vocab_out = None;
    let mut input_bytes = None;
    let mut input_overlap = 0;

    for (i, stage) in spec.stages.iter().enumerate() {
        let kernel: Box<dyn Kernel> = match (stage, shape) {
            (StageSpec::Identity, Shape::Image(..)) => Box::new(IdentityKernel::new(StreamKind::ImageU8, bus, meta)),
            (StageSpec::ToTensor { fifo_capacity }, Shape::Image(h, w, c)) => {
                shape = Shape::Tensor(c, h, w);
                let scaler = placer.place(&cache.scaler());
                Box::new(ReshapeScaleKernel::to_tensor((h, w, c), *fifo_capacity, scaler, bus, meta)?)
            }
            (
                StageSpec::Normalize { mode: NormalizeMode::FusedLut, mean, std, fifo_capacity },
                Shape::Image(h, w, c),
            ) => {
                let params = norm_params(mean, std, c)?;
                shape = Shape::Tensor(c, h, w);
                let tables = cache.normalize(&params, true)?.iter().map(|t| placer.place(t)).collect();
                Box::new(ReshapeScaleKernel::fused_normalize((h, w, c), *fifo_capacity, tables, bus, meta)?)
            }
            (StageSpec::Normalize { mode, mean, std, .. }, Shape::Tensor(c, h, w)) => {
                let params = norm_params(mean, std, c)?;
                match mode {
                    NormalizeMode::Arith => Box::new(StreamNormalizeKernel::arith(params, (c, h, w), bus, meta)?),
                    _ => {
                        let tables = cache.normalize(&params, false)?.iter().map(|t| placer.place(t)).collect();
                        Box::new(StreamNormalizeKernel::lut(params, (c, h, w), tables, bus, meta)?)
                    }
                }
            }
            (StageSpec::Resize { out, order, depth_rows, domain }, Shape::Image(h, w, c)) => {
                let out = (out[0], out[1]);
                let tables = cache.interp((h, w), out, *domain)?;
                let with_coords = *order != ResizeOrder::TileMajor;
                let terms = placer.place(&tables.terms).placement;
                let coords = with_coords.then(|| placer.place(&tables.coords).placement);
                let unit = InterpUnit::new(tables, terms, coords);
                shape = Shape::Image(out.0, out.1, c);
                match order {
                    ResizeOrder::RowBuffer => {
                        Box::new(RowBufferResizeKernel::new((h, w, c), out, *depth_rows, unit, bus, meta)?)
                    }
                    ResizeOrder::FullBuffer => Box::new(FullBufferResizeKernel::new((h, w, c), out, unit, bus, meta)?),
                    ResizeOrder::TileMajor => {
                        if i != 0 {
                            return Err(Error::PipelineTypeError(
                                "tile-major resize must be the first stage: the sender serializes its input".into(),
                            ));
                        }
                        let map = build_tile_map((h, w), out)?;
                        input_bytes = Some(serialize_tile_major(adu, &map)?);
                        Box::new(TileResizeKernel::new(&map, c, unit, bus, meta)?)
                    }
                }
            }
            (StageSpec::TextNormalize, Shape::Text) => {
                let overlap = match spec.stages.get(i + 1) {
                    Some(StageSpec::Tokenize { vocab, splice, .. }) if *splice != SpliceMode::None => {
                        cache.vocab(cfg, vocab)?.max_token_len()
                    }
                    _ => 0,
                };
                Box::new(TextNormalizeKernel::new(bus, meta, overlap)?)
            }
            (StageSpec::Tokenize { vocab, stages: n, splice }, Shape::Text) => {
                let v = cache.vocab(cfg, vocab)?;
                if i == 0 && *splice != SpliceMode::None {
                    input_overlap = v.max_token_len();
                }
                shape = Shape::Tokens;
                vocab_out = Some(v.clone());
                Box::new(ChunkedTokenizerKernel::new(v, *n, *splice, bus, meta)?)
            }
            (stage, shape) => return Err(stage_error(i, stage, shape)),
        };
        stages.push(kernel);
    }

    let framer = Framer::new(bus)?.with_meta_width(meta)?.with_overlap(input_overlap)?;
    let input = match input_bytes {
        Some(bytes) => framer.frame_bytes(&bytes)?,
        None => framer.frame(adu)?,
    };
    Ok(BuiltPipeline { name: spec.name.clone(), stages, input, out_shape: shape, vocab: vocab_out })
}

/// The whole-sample reference composition for `spec`.
pub fn reference_output(cfg: &PipelineConfig, spec: &PipelineSpec, adu: &Adu, cache: &TableCache) -> Result<Output> {
    let mut cur = match adu.kind() {
        AduKind::ImageU8 => Output::Image(adu.clone()),
        AduKind::TensorF32 => Output::Tensor(adu.clone()),
        AduKind::Text => Output::Text(adu.payload().to_vec()),
    };
    for (i, stage) in spec.stages.iter().enumerate() {
        cur = match (stage, cur) {
            (StageSpec::Identity, Output::Image(a)) => Output::Image(a),
            (StageSpec::ToTensor { .. }, Output::Image(a)) => Output::Tensor(spec_to_tensor(&a)?),
            (StageSpec::Normalize { mode: NormalizeMode::FusedLut, mean, std, .. }, Output::Image(a)) => {
                let params = norm_params(mean, std, a.image_dims()?.2)?;
                Output::Tensor(spec_normalize(&spec_to_tensor(&a)?, &params)?)
            }
            (StageSpec::Normalize { mean, std, .. }, Output::Tensor(a)) => {
                let params = norm_params(mean, std, a.tensor_dims()?.0)?;
                Output::Tensor(spec_normalize(&a, &params)?)
            }
            (StageSpec::Resize { out, .. }, Output::Image(a)) => {
                Output::Image(spec_resize_bilinear(&a, (out[0], out[1]))?)
            }
            (StageSpec::TextNormalize, Output::Text(t)) => Output::Text(spec_text_normalize(&t)),
            (StageSpec::Tokenize { vocab, .. }, Output::Text(t)) => {
                Output::Tokens(spec_tokenize(&t, cache.vocab(cfg, vocab)?.as_ref())?)
            }
            (stage, other) => {
                return Err(Error::PipelineTypeError(format!(
                    "stage {i} ({}) cannot take {}",
                    stage.input_kind(),
                    other.kind_name()
                )))
            }
        };
    }
    Ok(cur)
}

/// The input a comparison group runs on.
pub fn comparison_input(cfg: &PipelineConfig, input: &ComparisonInput) -> Result<Adu> {
    match input {
        ComparisonInput::Image { height, width, channels, distribution } => {
            generate_image(*height, *width, *channels, distribution, cfg.corpus.zipf_exponent, cfg.seed)
        }
        ComparisonInput::Text { text } => Adu::text(text.as_bytes()),
    }
}

/// Builds every variant of a comparison group under a fast-tier budget.
pub fn build_variants(
    cfg: &PipelineConfig,
    group: &ComparisonSpec,
    adu: &Adu,
    cache: &TableCache,
    budget: u64,
) -> Result<Vec<Variant>> {
    group
        .variants
        .iter()
        .map(|name| {
            let built = build_with_budget(cfg, cfg.pipeline(name)?, adu, cache, budget)?;
            Ok(Variant { name: built.name, stages: built.stages, input: built.input })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    #[serde(flatten)]
    pub comparison: Comparison,
}

/// Simulates and ranks one comparison group.
pub fn run_comparison(cfg: &PipelineConfig, group: &ComparisonSpec, cache: &TableCache) -> Result<GroupReport> {
    let adu = comparison_input(cfg, &group.input)?;
    let variants = build_variants(cfg, group, &adu, cache, cfg.fast_budget())?;
    let comparison = compare_impls(variants, &cfg.objective, &cfg.costs, cfg.queue_depth)?;
    Ok(GroupReport { group: group.name.clone(), comparison })
}
