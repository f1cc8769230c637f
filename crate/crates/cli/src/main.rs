use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nicflow::config::{PipelineConfig, StageSpec};
use nicflow::cost::{simulate_pipeline, Comparison, VariantReport};
use nicflow::harness::verify_config;
use nicflow::kernels::NormalizeMode;
use nicflow::lut::{interp_table_sizing, LookupTable, PixelDomain, TableSizing};
use nicflow::pipeline::{build_pipeline, norm_params, run_comparison, GroupReport, Output, TableCache};
use nicflow::stream::{load_input, save_adu};

#[derive(Parser)]
#[command(name = "nicflow", version, about = "Simulate streaming preprocessing offload on a NIC datapath")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; the built-in default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dotted `key=value` override, applied before validation. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the lookup tables used by the configured pipelines.
    BuildLuts {
        /// Directory for table files; sizes are only reported when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Input geometry `HxW` for interpolation tables.
        #[arg(long, default_value = "720x1280", value_parser = parse_dims)]
        input_dims: (usize, usize),
        #[arg(long)]
        pipeline: Option<String>,
    },
    /// Check every pipeline against its reference over the generated corpus.
    Verify {
        #[arg(long)]
        pipeline: Option<String>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and rank the configured comparison groups.
    Cost {
        /// Only this comparison group.
        #[arg(long)]
        group: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Push one input file through a pipeline.
    Run {
        #[arg(long)]
        pipeline: String,
        /// `.ppm`/`.pgm` image, `.json` ADU descriptor, or UTF-8 text.
        #[arg(long)]
        input: PathBuf,
        /// Output path: an ADU descriptor for images and tensors, JSON for tokens, raw bytes for text.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    Ok((h, w))
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match dispatch(&cfg, cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error =
                e.chain().any(|c| matches!(c.downcast_ref::<nicflow::Error>(), Some(nicflow::Error::Config(_))));
            ExitCode::from(if config_error { EXIT_CONFIG } else { EXIT_FAIL })
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p, &common.overrides)?,
        None => PipelineConfig::default_config(&common.overrides)?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// `Ok(false)` means the command ran but its check failed.
fn dispatch(cfg: &PipelineConfig, command: Command) -> Result<bool> {
    let cache = TableCache::new();
    match command {
        Command::BuildLuts { out, input_dims, pipeline } => {
            build_luts(cfg, &cache, out.as_deref(), input_dims, pipeline.as_deref())
        }
        Command::Verify { pipeline, out } => {
            let report = verify_config(cfg, pipeline.as_deref(), &cache)?;
            for p in &report.pipelines {
                eprintln!(
                    "{:<24} {:>4}/{:<4} exact {:>4}  max_abs_error {}",
                    p.pipeline, p.passed, p.samples, p.exact, p.max_abs_error
                );
            }
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            Ok(report.all_passed())
        }
        Command::Cost { group, format, out } => {
            let groups: Vec<_> =
                cfg.comparisons.iter().filter(|g| group.as_deref().is_none_or(|n| n == g.name)).collect();
            if let Some(n) = &group {
                if groups.is_empty() {
                    return Err(nicflow::Error::Config(format!("no comparison group named {n}")).into());
                }
            }
            let reports =
                groups.into_iter().map(|g| run_comparison(cfg, g, &cache)).collect::<nicflow::Result<Vec<_>>>()?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&reports)?,
                Format::Csv => cost_csv(&reports)?,
            };
            emit(out.as_deref(), &text)?;
            Ok(reports.iter().all(|r| !r.comparison.ranked.is_empty()))
        }
        Command::Run { pipeline, input, out } => run(cfg, &cache, &pipeline, &input, &out),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CostRow<'a> {
    group: &'a str,
    variant: &'a str,
    rank: Option<usize>,
    feasible: bool,
    e: f64,
    memory_term: f64,
    perf_term: f64,
    fast_bytes: u64,
    slow_bytes: u64,
    total_table_entries: u64,
    table_bytes: u64,
    buffer_bytes: u64,
    meta_bytes: u64,
    total_cycles: u64,
    stall_cycles: u64,
    first_output_latency_cycles: u64,
    throughput: f64,
    compute_cycles: u64,
    output_bytes: u64,
}

fn rows<'a>(group: &'a str, c: &'a Comparison) -> impl Iterator<Item = CostRow<'a>> {
    c.ranked.iter().chain(&c.infeasible).map(move |v: &VariantReport| CostRow {
        group,
        variant: &v.name,
        rank: v.rank,
        feasible: v.evaluation.feasible,
        e: v.evaluation.e,
        memory_term: v.evaluation.memory_term,
        perf_term: v.evaluation.perf_term,
        fast_bytes: v.resources.fast_bytes,
        slow_bytes: v.resources.slow_bytes,
        total_table_entries: v.resources.total_table_entries,
        table_bytes: v.resources.table_bytes,
        buffer_bytes: v.resources.buffer_bytes,
        meta_bytes: v.resources.meta_bytes,
        total_cycles: v.perf.total_cycles,
        stall_cycles: v.perf.stall_cycles,
        first_output_latency_cycles: v.perf.first_output_latency_cycles,
        throughput: v.perf.throughput,
        compute_cycles: v.perf.compute_cycles,
        output_bytes: v.perf.output_bytes,
    })
}

fn cost_csv(reports: &[GroupReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        for row in rows(&r.group, &r.comparison) {
            w.serialize(row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
    Ok(String::from_utf8(bytes)?.trim_end().to_owned())
}

#[derive(Serialize)]
struct TableLine {
    #[serde(flatten)]
    sizing: TableSizing,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

fn build_luts(
    cfg: &PipelineConfig,
    cache: &TableCache,
    out: Option<&Path>,
    input_dims: (usize, usize),
    only: Option<&str>,
) -> Result<bool> {
    if only.is_some_and(|n| cfg.pipelines.iter().all(|p| p.name != n)) {
        return Err(nicflow::Error::Config(format!("no pipeline named {}", only.unwrap_or_default())).into());
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let channels = cfg.corpus.channels;
    let mut tables = Vec::new();
    for spec in cfg.pipelines.iter().filter(|p| only.is_none_or(|n| n == p.name)) {
        for stage in &spec.stages {
            match stage {
                StageSpec::ToTensor { .. } => tables.push(cache.scaler()),
                StageSpec::Normalize {
                    mode: mode @ (NormalizeMode::Lut | NormalizeMode::FusedLut), mean, std, ..
                } => {
                    let params = norm_params(mean, std, channels)?;
                    tables.extend(cache.normalize(&params, *mode == NormalizeMode::FusedLut)?);
                }
                StageSpec::Resize { out: [h, w], domain, .. } => {
                    let t = cache.interp(input_dims, (*h, *w), *domain)?;
                    tables.push(t.terms.clone());
                    tables.push(t.coords.clone());
                }
                StageSpec::Tokenize { vocab, .. } => {
                    let v = cache.vocab(cfg, vocab)?;
                    eprintln!("vocabulary {vocab}: {} tokens, max length {}", v.len(), v.max_token_len());
                }
                _ => {}
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut lines = Vec::new();
    for t in tables {
        let sizing = t.sizing();
        let file_name = format!("{}_{}.lut", t.name(), t.schema().domain_size());
        if !seen.insert(file_name.clone()) {
            continue;
        }
        let file = match out {
            Some(dir) => Some(write_table(&t, &dir.join(&file_name))?),
            None => None,
        };
        lines.push(TableLine { sizing, file });
    }
    // Analytic sizing at a 224x224 output over 255 intensities, without
    // materializing ~51M entries.
    lines.push(TableLine { sizing: interp_table_sizing((224, 224), PixelDomain::Values255), file: None });
    for l in &lines {
        eprintln!(
            "{:<20} {:>12} entries  {:>12} B at {} bits  {:>12} B stored",
            l.sizing.name, l.sizing.entries, l.sizing.bytes, l.sizing.entry_bits, l.sizing.stored_bytes
        );
    }
    // per-channel tables also reported as one family total
    let mut families = std::collections::BTreeMap::<&str, u64>::new();
    for l in &lines {
        if let Some((family, ch)) = l.sizing.name.rsplit_once("_c") {
            if ch.chars().all(|c| c.is_ascii_digit()) {
                *families.entry(family).or_default() += l.sizing.entries;
            }
        }
    }
    for (family, entries) in families {
        eprintln!("{family:<20} {entries:>12} entries over all channels");
    }
    println!("{}", serde_json::to_string_pretty(&lines)?);
    Ok(true)
}

fn write_table(t: &LookupTable, path: &Path) -> Result<String> {
    let mut f =
        std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    t.write_to(&mut f)?;
    f.flush()?;
    Ok(path.display().to_string())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    pipeline: &'a str,
    output_kind: &'static str,
    output: String,
    total_cycles: u64,
    first_output_latency_cycles: u64,
    stall_cycles: u64,
}

fn run(cfg: &PipelineConfig, cache: &TableCache, name: &str, input: &Path, out: &Path) -> Result<bool> {
    let spec = cfg.pipeline(name)?;
    let adu = load_input(input).with_context(|| format!("reading {}", input.display()))?;
    let output = build_pipeline(cfg, spec, &adu, cache)?.run()?;
    let mut sim = build_pipeline(cfg, spec, &adu, cache)?;
    let perf = simulate_pipeline(&mut sim.stages, &sim.input, &cfg.costs, cfg.queue_depth)?;

    let written = match &output {
        Output::Image(a) | Output::Tensor(a) => {
            save_adu(a, out)?;
            out.display().to_string()
        }
        Output::Text(bytes) => {
            fs::write(out, bytes)?;
            out.display().to_string()
        }
        Output::Tokens(tokens) => {
            let Some(vocab) = sim.vocab.as_ref() else { bail!("token output without a vocabulary") };
            let list: Vec<_> = tokens
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "id": t.id,
                        "start": t.start,
                        "len": t.len,
                        "text": String::from_utf8_lossy(vocab.token(t.id)),
                    })
                })
                .collect();
            fs::write(out, serde_json::to_string_pretty(&list)?)?;
            out.display().to_string()
        }
    };
    let summary = RunSummary {
        pipeline: name,
        output_kind: output.kind_name(),
        output: written,
        total_cycles: perf.total_cycles,
        first_output_latency_cycles: perf.first_output_latency_cycles,
        stall_cycles: perf.stall_cycles,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse_either_separator() {
        assert_eq!(parse_dims("720x1280"), Ok((720, 1280)));
        assert_eq!(parse_dims(" 4 X 5 "), Ok((4, 5)));
        assert!(parse_dims("720").is_err());
        assert!(parse_dims("ax3").is_err());
    }

    #[test]
    fn csv_rows_follow_rank_then_infeasible() {
        let cfg =
            PipelineConfig::default_config(&["fast_budget_bytes=100000".into(), "objective.budget_bytes=3500".into()])
                .unwrap();
        let g = cfg.comparisons.iter().find(|g| g.name == "normalize").unwrap();
        let report = run_comparison(&cfg, g, &TableCache::new()).unwrap();
        let text = cost_csv(&[report]).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with("group,variant,rank,feasible,e,"));
        assert_eq!(lines.len(), 4);
        // the unfused LUT variant holds 4 KiB of tables, over the 3500-byte budget
        assert!(lines[3].starts_with("normalize,normalize-lut,,false,"));
    }
}
