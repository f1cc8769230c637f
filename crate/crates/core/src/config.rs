//! Declarative experiment configuration (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::{CycleCostTable, Objective, DEFAULT_QUEUE_DEPTH};
use crate::error::{Error, Result};
use crate::kernels::{NormalizeMode, SpliceMode, StreamKind};
use crate::lut::{PixelDomain, PlacementConfig};
use crate::stream::{DEFAULT_BUS_WIDTH, DEFAULT_META_WIDTH};

/// Schema version this build reads.
pub const CONFIG_VERSION: u32 = 1;

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

/// The example prompt used as a tokenizer fixture.
pub const EXAMPLE_PROMPT: &str = "This is an example of an input prompt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default = "default_bus_width")]
    pub bus_width: usize,
    #[serde(default = "default_meta_width")]
    pub meta_width: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_queue_depth")]
    pub queue_depth: usize,
    /// Fast-tier budget for table placement; defaults to the objective's bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_budget_bytes: Option<u64>,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub costs: CycleCostTable,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub pipelines: Vec<PipelineSpec>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_bus_width() -> usize {
    DEFAULT_BUS_WIDTH
}

fn default_meta_width() -> usize {
    DEFAULT_META_WIDTH
}

fn default_queue_depth() -> usize {
    DEFAULT_QUEUE_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub images: usize,
    pub min_side: usize,
    pub max_side: usize,
    pub channels: usize,
    /// `uniform` or `zipf`.
    pub distribution: String,
    pub zipf_exponent: f64,
    pub prompts: usize,
    pub prompt_min_len: usize,
    pub prompt_max_len: usize,
    /// Probability that a prompt reuses an earlier prompt's prefix.
    pub shared_prefix: f64,
    /// Extra substrings added to a generated vocabulary.
    pub vocab_size: usize,
    pub fixtures: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            images: 100,
            min_side: 1,
            max_side: 64,
            channels: 3,
            distribution: "uniform".into(),
            zipf_exponent: 0.7,
            prompts: 200,
            prompt_min_len: 1,
            prompt_max_len: 120,
            shared_prefix: 0.5,
            vocab_size: 200,
            fixtures: vec![EXAMPLE_PROMPT.into()],
        }
    }
}

/// What a pipeline is verified on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Image,
    /// Generated prompts followed by the fixtures.
    Text,
    /// The fixture prompts only.
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub name: String,
    pub input: InputKind,
    /// Largest accepted absolute error; defaults by the last stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Per-pipeline bus width (the tokenizer's chunk size).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus_width: Option<usize>,
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeOrder {
    RowBuffer,
    TileMajor,
    FullBuffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StageSpec {
    Identity,
    ToTensor {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fifo_capacity: Option<usize>,
    },
    Normalize {
        mode: NormalizeMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<f32>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<Vec<f32>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fifo_capacity: Option<usize>,
    },
    Resize {
        /// `[height, width]`
        out: [usize; 2],
        order: ResizeOrder,
        #[serde(default = "default_depth_rows")]
        depth_rows: usize,
        #[serde(default = "default_domain")]
        domain: PixelDomain,
    },
    TextNormalize,
    Tokenize {
        /// `demo`, `demo-max5`, `generated` or a vocabulary file path.
        vocab: String,
        #[serde(default = "default_tokenizer_stages")]
        stages: u64,
        #[serde(default)]
        splice: SpliceMode,
    },
}

fn default_depth_rows() -> usize {
    2
}

fn default_domain() -> PixelDomain {
    PixelDomain::Full
}

fn default_tokenizer_stages() -> u64 {
    1
}

impl StageSpec {
    pub fn input_kind(&self) -> StreamKind {
        match self {
            StageSpec::Identity | StageSpec::ToTensor { .. } => StreamKind::ImageU8,
            StageSpec::Normalize { mode: NormalizeMode::FusedLut, .. } => StreamKind::ImageU8,
            StageSpec::Normalize { .. } => StreamKind::TensorF32,
            StageSpec::Resize { order: ResizeOrder::TileMajor, .. } => StreamKind::TileStream,
            StageSpec::Resize { .. } => StreamKind::ImageU8,
            StageSpec::TextNormalize | StageSpec::Tokenize { .. } => StreamKind::Text,
        }
    }

    pub fn output_kind(&self) -> StreamKind {
        match self {
            StageSpec::Identity | StageSpec::Resize { .. } => StreamKind::ImageU8,
            StageSpec::ToTensor { .. } | StageSpec::Normalize { .. } => StreamKind::TensorF32,
            StageSpec::TextNormalize => StreamKind::Text,
            StageSpec::Tokenize { .. } => StreamKind::Tokens,
        }
    }
}

impl PipelineSpec {
    /// Configured tolerance, else 2 intensity levels after a resize and 0
    /// everywhere else.
    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or_else(|| match self.stages.last() {
            Some(StageSpec::Resize { .. }) => 2.0,
            _ => 0.0,
        })
    }

    pub fn input_stream_kind(&self) -> Option<StreamKind> {
        self.stages.first().map(StageSpec::input_kind)
    }

    pub fn output_stream_kind(&self) -> Option<StreamKind> {
        self.stages.last().map(StageSpec::output_kind)
    }

    fn validate(&self) -> Result<()> {
        let first = self.stages.first().ok_or_else(|| Error::Config(format!("pipeline {}: no stages", self.name)))?;
        let expected = match self.input {
            InputKind::Image => [StreamKind::ImageU8, StreamKind::TileStream],
            InputKind::Text | InputKind::Fixture => [StreamKind::Text, StreamKind::Text],
        };
        if !expected.contains(&first.input_kind()) {
            return Err(Error::Config(format!(
                "pipeline {}: {:?} input cannot feed a stage expecting {}",
                self.name,
                self.input,
                first.input_kind()
            )));
        }
        for w in self.stages.windows(2) {
            if w[0].output_kind() != w[1].input_kind() {
                return Err(Error::Config(format!(
                    "pipeline {}: {} output cannot feed a stage expecting {}",
                    self.name,
                    w[0].output_kind(),
                    w[1].input_kind()
                )));
            }
        }
        if self.bus_width == Some(0) {
            return Err(Error::Config(format!("pipeline {}: bus_width must be positive", self.name)));
        }
        if let Some(t) = self.tolerance {
            if t.is_nan() || t < 0.0 {
                return Err(Error::Config(format!("pipeline {}: negative tolerance", self.name)));
            }
        }
        Ok(())
    }
}

/// A group of pipelines ranked against each other on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub name: String,
    pub variants: Vec<String>,
    pub input: ComparisonInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComparisonInput {
    Image {
        height: usize,
        width: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_distribution")]
        distribution: String,
    },
    Text {
        text: String,
    },
}

fn default_channels() -> usize {
    3
}

fn default_distribution() -> String {
    "uniform".into()
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_value(text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?)
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_value(table)
    }

    fn from_value(table: toml::Table) -> Result<Self> {
        match table.get("version") {
            Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
            Some(v) => return Err(Error::Config(format!("unsupported config version {v}, expected {CONFIG_VERSION}"))),
            None => return Err(Error::Config("missing `version`".into())),
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse_with_overrides(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn default_config(overrides: &[String]) -> Result<Self> {
        Self::parse_with_overrides(DEFAULT_CONFIG, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.bus_width == 0 {
            return Err(Error::Config("bus_width must be positive".into()));
        }
        if self.queue_depth == 0 {
            return Err(Error::Config("queue_depth must be positive".into()));
        }
        self.objective.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.costs.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.placement.hybrid_ratio) {
            return Err(Error::Config("placement.hybrid_ratio must lie in [0, 1]".into()));
        }
        if self.placement.slow_hit_cycles == 0 {
            return Err(Error::Config("placement.slow_hit_cycles must be positive".into()));
        }
        let c = &self.corpus;
        if c.min_side == 0 || c.min_side > c.max_side || c.channels == 0 {
            return Err(Error::Config("corpus image sides and channels must be positive and ordered".into()));
        }
        if c.prompt_min_len == 0 || c.prompt_min_len > c.prompt_max_len {
            return Err(Error::Config("corpus prompt lengths must be positive and ordered".into()));
        }
        let mut names = std::collections::HashSet::new();
        for p in &self.pipelines {
            if !names.insert(p.name.as_str()) {
                return Err(Error::Config(format!("duplicate pipeline name {}", p.name)));
            }
            p.validate()?;
        }
        for c in &self.comparisons {
            if c.variants.is_empty() {
                return Err(Error::Config(format!("comparison {} has no variants", c.name)));
            }
            for v in &c.variants {
                if !names.contains(v.as_str()) {
                    return Err(Error::Config(format!("comparison {}: unknown pipeline {v}", c.name)));
                }
            }
        }
        Ok(())
    }

    pub fn pipeline(&self, name: &str) -> Result<&PipelineSpec> {
        self.pipelines.iter().find(|p| p.name == name).ok_or_else(|| Error::Config(format!("no pipeline named {name}")))
    }

    pub fn fast_budget(&self) -> u64 {
        self.fast_budget_bytes.unwrap_or(self.objective.budget_bytes)
    }

    pub fn placement_config(&self) -> PlacementConfig {
        PlacementConfig { fast_hit_cycles: self.costs.table_lookup, ..self.placement.clone() }
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Applies `a.b.c=value`. Array elements are addressed by index or, for
/// tables with a `name`, by that name. Values parse as TOML, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("non-empty split");
    let mut cur = table;
    let mut i = 0;
    while i < path.len() {
        let next = cur.entry(path[i].to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        i += 1;
        let next = match next {
            toml::Value::Array(items) => {
                let sel = path
                    .get(i)
                    .ok_or_else(|| Error::Config(format!("override `{key}`: `{}` needs an element", path[i - 1])))?;
                i += 1;
                let idx =
                    sel.parse::<usize>().ok().filter(|&n| n < items.len()).or_else(|| {
                        items.iter().position(|it| it.get("name").and_then(toml::Value::as_str) == Some(*sel))
                    });
                let idx = idx.ok_or_else(|| Error::Config(format!("override `{key}`: no element `{sel}`")))?;
                &mut items[idx]
            }
            other => other,
        };
        cur = match next {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{key}`: `{}` is not a table", path[i - 1]))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
