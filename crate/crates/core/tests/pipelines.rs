use proptest::prelude::*;

use nicflow::config::{InputKind, PipelineConfig, StageSpec};
use nicflow::cost::{measure_resources, simulate_pipeline};
use nicflow::harness::{generate_image, trace_access_locality};
use nicflow::pipeline::{build_pipeline, build_with_budget, TableCache};
use nicflow::stream::Adu;

fn cfg() -> PipelineConfig {
    PipelineConfig::default_config(&[]).unwrap()
}

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = cfg();
    let text = cfg.to_toml().unwrap();
    assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
}

#[test]
fn overrides_reach_nested_arrays() {
    let cfg = PipelineConfig::default_config(&[
        "pipelines.resize-row.stages.0.depth_rows=3".into(),
        "costs.float_div=12".into(),
    ])
    .unwrap();
    assert_eq!(cfg.costs.float_div, 12);
    assert!(matches!(cfg.pipeline("resize-row").unwrap().stages[0], StageSpec::Resize { depth_rows: 3, .. }));
}

#[test]
fn fused_normalize_holds_three_float_tables() {
    let cfg = cfg();
    let img = generate_image(8, 8, 3, "uniform", 0.7, 0).unwrap();
    let built = build_pipeline(&cfg, cfg.pipeline("normalize-fused").unwrap(), &img, &TableCache::new()).unwrap();
    let r = measure_resources(&built.stages);
    assert_eq!(r.total_table_entries, 3 * 256);
    assert_eq!(r.table_bytes, 3 * 256 * 4);
    assert_eq!(r.fast_bytes, 3072);
}

#[test]
fn to_tensor_buffers_two_planes() {
    let cfg = cfg();
    let img = Adu::image(224, 224, 3, vec![7; 224 * 224 * 3]).unwrap();
    let built = build_pipeline(&cfg, cfg.pipeline("totensor").unwrap(), &img, &TableCache::new()).unwrap();
    // channel FIFOs hold two of the three planes before the arbiter reaches them
    assert!(measure_resources(&built.stages).buffer_bytes >= 2 * 224 * 224);
}

fn image() -> impl Strategy<Value = Adu> {
    (2usize..20, 2usize..20, any::<u64>()).prop_map(|(h, w, seed)| generate_image(h, w, 3, "zipf", 0.7, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn more_fast_memory_never_costs_cycles(img in image(), step in 1u64..50_000) {
        let cfg = cfg();
        let cache = TableCache::new();
        for name in ["normalize-lut", "normalize-fused", "resize-row", "resize-tile", "resize-full"] {
            let spec = cfg.pipeline(name).unwrap();
            let mut last = u64::MAX;
            for k in 0..5 {
                let mut b = build_with_budget(&cfg, spec, &img, &cache, k * step).unwrap();
                let perf = simulate_pipeline(&mut b.stages, &b.input, &cfg.costs, cfg.queue_depth).unwrap();
                prop_assert!(perf.total_cycles <= last, "{name}: {} > {last} at budget {}", perf.total_cycles, k * step);
                last = perf.total_cycles;
            }
        }
    }

    #[test]
    fn stages_read_only_a_bounded_window(img in image(), text in "[a-z ]{1,80}") {
        let cfg = cfg();
        let (_, w, c) = img.image_dims().unwrap();
        let prompt = Adu::text(text.into_bytes()).unwrap();
        for spec in &cfg.pipelines {
            let input = if spec.input == InputKind::Image { &img } else { &prompt };
            // the demo vocabulary only covers the fixture prompt
            if spec.name == "example-tokenize" {
                continue;
            }
            let report = trace_access_locality(&cfg, spec, input, &TableCache::new()).unwrap();
            for s in &report.stages {
                prop_assert_eq!(s.out_of_window_reads, 0, "{} {}", spec.name, s.stage);
                let bound = match s.stage.as_str() {
                    "to-tensor" | "normalize-fused" | "text-normalize" => 1,
                    "normalize-lut" | "normalize-arith" => 4,
                    "resize-row-buffer" => 2 * (w * c) as u64,
                    "resize-tile-major" => 4 * c as u64,
                    "tokenizer" => 5,
                    _ => u64::MAX,
                };
                prop_assert!(s.max_span <= bound, "{} {}: span {} > {bound}", spec.name, s.stage, s.max_span);
            }
        }
    }
}
