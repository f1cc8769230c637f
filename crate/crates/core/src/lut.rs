//! Memoization tables and the two-tier (fast on-chip / slow off-chip) memory
//! they live in.
//!
//! Tables are dense arrays indexed by a mixed-radix key. Only the value is
//! stored, but sizes are also reported at the wider hardware entry width
//! that embeds the key fields (`entry_bits`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::{NormParams, TENSOR_SCALE};
use crate::stream::tile::axis_neighbors;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyField {
    pub name: String,
    pub range: u64,
}

/// Mixed-radix key layout; the last field varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySchema {
    fields: Vec<KeyField>,
}

impl KeySchema {
    pub fn new(fields: &[(&str, u64)]) -> Self {
        Self { fields: fields.iter().map(|(n, r)| KeyField { name: (*n).into(), range: *r }).collect() }
    }

    pub fn fields(&self) -> &[KeyField] {
        &self.fields
    }

    pub fn domain_size(&self) -> u64 {
        self.fields.iter().map(|f| f.range).product()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Number of consecutive keys sharing one value of field `idx`.
    pub fn stride(&self, idx: usize) -> u64 {
        self.fields[idx + 1..].iter().map(|f| f.range).product()
    }

    pub fn pack(&self, parts: &[u64]) -> Option<u64> {
        if parts.len() != self.fields.len() {
            return None;
        }
        let mut key = 0u64;
        for (p, f) in parts.iter().zip(&self.fields) {
            if *p >= f.range {
                return None;
            }
            key = key * f.range + p;
        }
        Some(key)
    }

    pub fn field_of(&self, key: u64, idx: usize) -> u64 {
        (key / self.stride(idx)) % self.fields[idx].range
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableStore {
    U8(Vec<u8>),
    U32(Vec<u32>),
    Sparse(BTreeMap<u64, u32>),
}

/// A precomputed mapping from keys to results.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    name: String,
    schema: KeySchema,
    entry_bits: u32,
    value_bits: u32,
    store: TableStore,
}

/// Entry count and both byte sizes of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSizing {
    pub name: String,
    pub entries: u64,
    pub entry_bits: u32,
    /// `ceil(entries × entry_bits / 8)`
    pub bytes: u64,
    pub stored_bits: u32,
    pub stored_bytes: u64,
}

pub fn ceil_bytes(entries: u64, bits: u32) -> u64 {
    (entries * bits as u64).div_ceil(8)
}

impl LookupTable {
    pub fn new(name: impl Into<String>, schema: KeySchema, entry_bits: u32, store: TableStore) -> Result<Self> {
        let value_bits = match &store {
            TableStore::U8(v) => {
                check_dense(&schema, v.len())?;
                8
            }
            TableStore::U32(v) => {
                check_dense(&schema, v.len())?;
                32
            }
            TableStore::Sparse(m) => {
                if m.keys().next_back().is_some_and(|&k| k >= schema.domain_size()) {
                    return Err(Error::BadParams("sparse key outside schema".into()));
                }
                32
            }
        };
        Ok(Self { name: name.into(), schema, entry_bits, value_bits, store })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &KeySchema {
        &self.schema
    }

    pub fn entry_bits(&self) -> u32 {
        self.entry_bits
    }

    pub fn store(&self) -> &TableStore {
        &self.store
    }

    pub fn entry_count(&self) -> u64 {
        match &self.store {
            TableStore::U8(v) => v.len() as u64,
            TableStore::U32(v) => v.len() as u64,
            TableStore::Sparse(m) => m.len() as u64,
        }
    }

    pub fn byte_size(&self) -> u64 {
        ceil_bytes(self.entry_count(), self.entry_bits)
    }

    pub fn sizing(&self) -> TableSizing {
        TableSizing {
            name: self.name.clone(),
            entries: self.entry_count(),
            entry_bits: self.entry_bits,
            bytes: self.byte_size(),
            stored_bits: self.value_bits,
            stored_bytes: ceil_bytes(self.entry_count(), self.value_bits),
        }
    }

    pub fn get(&self, key: u64) -> Result<u32> {
        let miss = || Error::TableMiss { table: self.name.clone(), key };
        match &self.store {
            TableStore::U8(v) => v.get(key as usize).map(|&b| b as u32).ok_or_else(miss),
            TableStore::U32(v) => v.get(key as usize).copied().ok_or_else(miss),
            TableStore::Sparse(m) => m.get(&key).copied().ok_or_else(miss),
        }
    }

    pub fn get_f32(&self, key: u64) -> Result<f32> {
        self.get(key).map(f32::from_bits)
    }

    /// Little-endian binary form: magic `NLUT`, version, name, key schema,
    /// entry/value widths, entry count, then the values.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"NLUT")?;
        w.write_all(&1u16.to_le_bytes())?;
        write_str(w, &self.name)?;
        w.write_all(&(self.schema.fields.len() as u16).to_le_bytes())?;
        for f in &self.schema.fields {
            write_str(w, &f.name)?;
            w.write_all(&f.range.to_le_bytes())?;
        }
        w.write_all(&self.entry_bits.to_le_bytes())?;
        let tag: u8 = match self.store {
            TableStore::U8(_) => 0,
            TableStore::U32(_) => 1,
            TableStore::Sparse(_) => 2,
        };
        w.write_all(&[tag])?;
        w.write_all(&self.entry_count().to_le_bytes())?;
        match &self.store {
            TableStore::U8(v) => w.write_all(v)?,
            TableStore::U32(v) => {
                let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
                w.write_all(&bytes)?;
            }
            TableStore::Sparse(m) => {
                for (k, v) in m {
                    w.write_all(&k.to_le_bytes())?;
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"NLUT" {
            return Err(Error::Format("not a lookup table file".into()));
        }
        let version = read_u16(r)?;
        if version != 1 {
            return Err(Error::Format(format!("unsupported table version {version}")));
        }
        let name = read_str(r)?;
        let nfields = read_u16(r)?;
        let mut fields = Vec::with_capacity(nfields as usize);
        for _ in 0..nfields {
            let name = read_str(r)?;
            let range = read_u64(r)?;
            fields.push(KeyField { name, range });
        }
        let schema = KeySchema { fields };
        let entry_bits = read_u32(r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let count = read_u64(r)? as usize;
        let store = match tag[0] {
            0 => {
                let mut v = vec![0u8; count];
                r.read_exact(&mut v)?;
                TableStore::U8(v)
            }
            1 => {
                let mut raw = vec![0u8; count * 4];
                r.read_exact(&mut raw)?;
                TableStore::U32(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            2 => {
                let mut m = BTreeMap::new();
                for _ in 0..count {
                    let k = read_u64(r)?;
                    m.insert(k, read_u32(r)?);
                }
                TableStore::Sparse(m)
            }
            t => return Err(Error::Format(format!("unknown store tag {t}"))),
        };
        Self::new(name, schema, entry_bits, store)
    }
}

fn check_dense(schema: &KeySchema, len: usize) -> Result<()> {
    if schema.domain_size() != len as u64 {
        return Err(Error::BadParams(format!(
            "dense store holds {len} values, schema domain is {}",
            schema.domain_size()
        )));
    }
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u16).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u16(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
}

/// Intensity values covered by a pixel-keyed table.
pub const PIXEL_VALUES: u64 = 256;
pub const PIXEL_FIELD: &str = "pixel";
pub const ROW_FIELD: &str = "y";

/// One table per channel mapping intensity `i` to `((i/256) - mean) / std`.
///
/// Fused tables are keyed by the raw u8 intensity; unfused tables are keyed
/// by the same index but consumed from the float `i/256` a ToTensor stage
/// produced. The stored f32 values are identical.
pub fn build_normalize_tables(params: &NormParams, fused: bool) -> Result<Vec<LookupTable>> {
    params.validate()?;
    let prefix = if fused { "normalize_fused" } else { "normalize" };
    (0..params.channels())
        .map(|c| {
            let values = (0..PIXEL_VALUES).map(|i| params.apply(c, i as f32 / TENSOR_SCALE).to_bits()).collect();
            LookupTable::new(
                format!("{prefix}_c{c}"),
                KeySchema::new(&[(PIXEL_FIELD, PIXEL_VALUES)]),
                32,
                TableStore::U32(values),
            )
        })
        .collect()
}

/// 256-entry table mapping `i` to the f32 `i/256`.
pub fn build_scaler_table() -> LookupTable {
    let values = (0..PIXEL_VALUES).map(|i| (i as f32 / TENSOR_SCALE).to_bits()).collect();
    LookupTable::new("scaler", KeySchema::new(&[(PIXEL_FIELD, PIXEL_VALUES)]), 32, TableStore::U32(values))
        .expect("static schema")
}

/// Pixel values an interpolation table is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelDomain {
    /// 0..=255
    Full,
    /// 0..=254, the 255-value count behind the 51M-entry sizing at 224x224
    Values255,
}

impl PixelDomain {
    pub fn size(self) -> u64 {
        match self {
            PixelDomain::Full => 256,
            PixelDomain::Values255 => 255,
        }
    }
}

/// Entry width reported for interpolation terms: 2 bits term index, 16 bits
/// output coordinate, 8 bits input pixel, 8 bits value.
pub const INTERP_ENTRY_BITS: u32 = 34;

/// Analytic sizing of the term table, without materializing it.
pub fn interp_table_sizing(out_dims: (usize, usize), domain: PixelDomain) -> TableSizing {
    let entries = out_dims.0 as u64 * out_dims.1 as u64 * 4 * domain.size();
    TableSizing {
        name: "interp_terms".into(),
        entries,
        entry_bits: INTERP_ENTRY_BITS,
        bytes: ceil_bytes(entries, INTERP_ENTRY_BITS),
        stored_bits: 8,
        stored_bytes: entries,
    }
}

/// Bilinear weight of term `t` (0..4) in `(x1,y1), (x2,y1), (x1,y2), (x2,y2)` order.
pub fn term_weight(term: usize, dx: f64, dy: f64) -> f64 {
    match term {
        0 => (1.0 - dx) * (1.0 - dy),
        1 => dx * (1.0 - dy),
        2 => (1.0 - dx) * dy,
        _ => dx * dy,
    }
}

/// Precomputed interpolation terms plus the output-to-input coordinate table.
#[derive(Debug, Clone)]
pub struct InterpTables {
    /// key `(y, x, term, pixel)` → `round(weight_term(Δx, Δy) · pixel)`
    pub terms: Arc<LookupTable>,
    /// key `(y, x, corner)` → `row · in_width + col`
    pub coords: Arc<LookupTable>,
    pub in_dims: (usize, usize),
    pub out_dims: (usize, usize),
    pub domain: PixelDomain,
}

impl InterpTables {
    /// Key of one term entry; pixels outside the table's domain miss.
    pub fn term_key(&self, y: usize, x: usize, term: usize, pixel: u8) -> Result<u64> {
        let d = self.domain.size();
        if pixel as u64 >= d {
            return Err(Error::TableMiss { table: self.terms.name().into(), key: pixel as u64 });
        }
        Ok(((y as u64 * self.out_dims.1 as u64 + x as u64) * 4 + term as u64) * d + pixel as u64)
    }

    pub fn coord_key(&self, y: usize, x: usize, corner: usize) -> u64 {
        (y as u64 * self.out_dims.1 as u64 + x as u64) * 4 + corner as u64
    }
}

/// Builds both interpolation tables for a fixed input/output geometry.
pub fn build_interp_tables(
    in_dims: (usize, usize),
    out_dims: (usize, usize),
    domain: PixelDomain,
) -> Result<InterpTables> {
    let (in_h, in_w) = in_dims;
    let (out_h, out_w) = out_dims;
    if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::BadDims(format!("interp tables {in_dims:?} -> {out_dims:?}")));
    }
    let d = domain.size();
    let cols: Vec<_> = (0..out_w).map(|x| axis_neighbors(in_w, out_w, x)).collect();
    let mut terms = Vec::with_capacity(out_h * out_w * 4 * d as usize);
    let mut coords = Vec::with_capacity(out_h * out_w * 4);
    for y in 0..out_h {
        let (y1, y2, dy) = axis_neighbors(in_h, out_h, y);
        for &(x1, x2, dx) in &cols {
            for (r, c) in [(y1, x1), (y1, x2), (y2, x1), (y2, x2)] {
                coords.push((r * in_w + c) as u32);
            }
            for t in 0..4 {
                let w = term_weight(t, dx, dy);
                terms.extend((0..d).map(|v| (w * v as f64).round() as u8));
            }
        }
    }
    let terms = LookupTable::new(
        "interp_terms",
        KeySchema::new(&[(ROW_FIELD, out_h as u64), ("x", out_w as u64), ("term", 4), (PIXEL_FIELD, d)]),
        INTERP_ENTRY_BITS,
        TableStore::U8(terms),
    )?;
    let coords = LookupTable::new(
        "interp_coords",
        KeySchema::new(&[(ROW_FIELD, out_h as u64), ("x", out_w as u64), ("corner", 4)]),
        32,
        TableStore::U32(coords),
    )?;
    Ok(InterpTables { terms: Arc::new(terms), coords: Arc::new(coords), in_dims, out_dims, domain })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementPolicy {
    /// Entries for the next few output rows, advancing with the output cursor.
    SlidingWindow,
    /// Entries for the most frequently seen pixel values.
    FrequencyHot,
    /// Budget split between a sliding window and hot values.
    Hybrid,
    /// Randomly chosen pixel values; a baseline for `FrequencyHot`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub policy: PlacementPolicy,
    pub window_rows: usize,
    pub hybrid_ratio: f64,
    /// Taken from the cost table's `table_lookup` when built from a config.
    #[serde(skip)]
    pub fast_hit_cycles: u64,
    pub slow_hit_cycles: u64,
    pub seed: u64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            policy: PlacementPolicy::SlidingWindow,
            window_rows: 2,
            hybrid_ratio: 0.5,
            fast_hit_cycles: 1,
            slow_hit_cycles: 20,
            seed: 0,
        }
    }
}

/// Observed access frequencies used to pick hot entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccessHint {
    /// Histogram over the table's `pixel` field.
    pub pixel_counts: Option<Vec<u64>>,
}

impl AccessHint {
    pub fn from_pixels(pixels: &[u8]) -> Self {
        let mut counts = vec![0u64; PIXEL_VALUES as usize];
        for &p in pixels {
            counts[p as usize] += 1;
        }
        Self { pixel_counts: Some(counts) }
    }
}

/// Which entries of one table sit in the fast tier, and the access counters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementMap {
    pub policy: PlacementPolicy,
    pub budget_bytes: u64,
    pub fast_hit_cycles: u64,
    pub slow_hit_cycles: u64,
    entry_bits: u32,
    entry_count: u64,
    all_fast: bool,
    // contiguous key window [start, start + len)
    window_start: u64,
    window_len: u64,
    row_stride: Option<u64>,
    // pixel-value residency
    value_field: Option<(u64, u64)>,
    hot: Vec<bool>,
    hot_entries: u64,
    pub fast_hits: u64,
    pub slow_hits: u64,
    pub swaps: u64,
}

/// Decides which entries of `table` live in the fast tier under `budget_bytes`.
pub fn plan_placement(
    table: &LookupTable,
    config: &PlacementConfig,
    budget_bytes: u64,
    hint: &AccessHint,
) -> PlacementMap {
    let bits = table.entry_bits();
    let entry_count = table.entry_count();
    let schema = table.schema();
    let row_stride = schema.position(ROW_FIELD).map(|i| schema.stride(i));
    let value_field = schema.position(PIXEL_FIELD).map(|i| (schema.stride(i), schema.fields()[i].range));
    let mut map = PlacementMap {
        policy: config.policy,
        budget_bytes,
        fast_hit_cycles: config.fast_hit_cycles,
        slow_hit_cycles: config.slow_hit_cycles,
        entry_bits: bits,
        entry_count,
        all_fast: false,
        window_start: 0,
        window_len: 0,
        row_stride,
        value_field,
        hot: Vec::new(),
        hot_entries: 0,
        fast_hits: 0,
        slow_hits: 0,
        swaps: 0,
    };
    if table.byte_size() <= budget_bytes {
        map.all_fast = true;
        return map;
    }
    let budget_entries = budget_bytes * 8 / bits as u64;
    let (window_budget, hot_budget) = match config.policy {
        PlacementPolicy::SlidingWindow => (budget_entries, 0),
        PlacementPolicy::FrequencyHot | PlacementPolicy::Random => (0, budget_entries),
        PlacementPolicy::Hybrid => {
            let w = (budget_entries as f64 * config.hybrid_ratio.clamp(0.0, 1.0)).floor() as u64;
            (w, budget_entries - w)
        }
    };
    map.window_len = match row_stride {
        Some(stride) => window_budget.min(stride * config.window_rows.max(1) as u64),
        None => window_budget,
    };
    let Some((_, range)) = value_field else {
        // nothing to rank by: hot budget falls back to a static key prefix
        map.window_len = (map.window_len + hot_budget).min(entry_count);
        return map;
    };
    let per_value = entry_count / range;
    let n_hot = hot_budget.checked_div(per_value).map_or(0, |n| n.min(range) as usize);
    let mut ranked: Vec<u64> = (0..range).collect();
    match config.policy {
        PlacementPolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            ranked.shuffle(&mut rng);
        }
        _ => {
            if let Some(counts) = &hint.pixel_counts {
                ranked.sort_by_key(|&v| (std::cmp::Reverse(counts.get(v as usize).copied().unwrap_or(0)), v));
            }
        }
    }
    map.hot = vec![false; range as usize];
    for &v in &ranked[..n_hot] {
        map.hot[v as usize] = true;
    }
    map.hot_entries = n_hot as u64 * per_value;
    map
}

impl PlacementMap {
    /// Every entry resident in the fast tier.
    pub fn all_fast(entry_bits: u32, entry_count: u64) -> Self {
        Self {
            policy: PlacementPolicy::SlidingWindow,
            budget_bytes: ceil_bytes(entry_count, entry_bits),
            fast_hit_cycles: 1,
            slow_hit_cycles: 20,
            entry_bits,
            entry_count,
            all_fast: true,
            window_start: 0,
            window_len: 0,
            row_stride: None,
            value_field: None,
            hot: Vec::new(),
            hot_entries: 0,
            fast_hits: 0,
            slow_hits: 0,
            swaps: 0,
        }
    }

    pub fn is_fast(&self, key: u64) -> bool {
        if self.all_fast {
            return true;
        }
        if key >= self.window_start && key - self.window_start < self.window_len {
            return true;
        }
        match self.value_field {
            Some((stride, range)) if !self.hot.is_empty() => self.hot[((key / stride) % range) as usize],
            _ => false,
        }
    }

    pub fn fast_entries(&self) -> u64 {
        if self.all_fast {
            self.entry_count
        } else {
            (self.window_len + self.hot_entries).min(self.entry_count)
        }
    }

    pub fn fast_bytes(&self) -> u64 {
        ceil_bytes(self.fast_entries(), self.entry_bits)
    }

    pub fn slow_bytes(&self) -> u64 {
        ceil_bytes(self.entry_count, self.entry_bits) - self.fast_bytes()
    }

    /// Moves the window so it starts at output row `row`.
    pub fn advance_to_row(&mut self, row: usize) {
        if self.all_fast || self.window_len == 0 {
            return;
        }
        if let Some(stride) = self.row_stride {
            let start = row as u64 * stride;
            if start != self.window_start {
                self.window_start = start;
                self.swaps += 1;
            }
        }
        debug_assert!(self.fast_bytes() <= self.budget_bytes);
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.fast_hits + self.slow_hits;
        if total == 0 {
            0.0
        } else {
            self.fast_hits as f64 / total as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.fast_hits = 0;
        self.slow_hits = 0;
        self.swaps = 0;
    }

    fn charge(&mut self, key: u64) -> u64 {
        if self.is_fast(key) {
            self.fast_hits += 1;
            self.fast_hit_cycles
        } else {
            self.slow_hits += 1;
            self.slow_hit_cycles
        }
    }
}

/// Cycle counter threaded through lookups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Clock {
    pub cycles: u64,
}

/// Reads one entry, charging the tier's access latency to `clock`.
pub fn lookup(table: &LookupTable, key: u64, placement: &mut PlacementMap, clock: &mut Clock) -> Result<(u32, u64)> {
    let value = table.get(key)?;
    let cycles = placement.charge(key);
    clock.cycles += cycles;
    Ok((value, cycles))
}

/// A shared table together with the placement owned by one kernel.
#[derive(Debug, Clone)]
pub struct TieredTable {
    pub table: Arc<LookupTable>,
    pub placement: PlacementMap,
    pub clock: Clock,
}

impl TieredTable {
    pub fn new(table: Arc<LookupTable>, placement: PlacementMap) -> Self {
        Self { table, placement, clock: Clock::default() }
    }

    pub fn resident(table: Arc<LookupTable>) -> Self {
        let placement = PlacementMap::all_fast(table.entry_bits(), table.entry_count());
        Self::new(table, placement)
    }

    pub fn get(&mut self, key: u64) -> Result<u32> {
        lookup(&self.table, key, &mut self.placement, &mut self.clock).map(|(v, _)| v)
    }

    pub fn get_f32(&mut self, key: u64) -> Result<f32> {
        self.get(key).map(f32::from_bits)
    }
}
