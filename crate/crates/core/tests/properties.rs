use std::collections::BTreeSet;

use proptest::prelude::*;

use nicflow::config::{PipelineConfig, PipelineSpec};
use nicflow::harness::{compare_outputs, generate_image};
use nicflow::lut::{build_interp_tables, plan_placement, AccessHint, PixelDomain, PlacementConfig, PlacementPolicy};
use nicflow::pipeline::{build_with_budget, reference_output, Output, TableCache};
use nicflow::reference::{spec_normalize, spec_to_tensor, spec_tokenize, NormParams, Vocabulary};
use nicflow::stream::{build_tile_map, deframe, referenced_coords, Adu, Coord, Framer};

fn cfg() -> PipelineConfig {
    PipelineConfig::default_config(&[]).unwrap()
}

fn spec(cfg: &PipelineConfig, name: &str) -> PipelineSpec {
    cfg.pipeline(name).unwrap().clone()
}

fn image() -> impl Strategy<Value = Adu> {
    (1usize..24, 1usize..24, prop_oneof![Just(1usize), Just(3)], any::<u64>(), prop::bool::ANY).prop_map(
        |(h, w, c, seed, zipf)| generate_image(h, w, c, if zipf { "zipf" } else { "uniform" }, 0.7, seed).unwrap(),
    )
}

fn demo_text() -> impl Strategy<Value = Vec<u8>> {
    let vocab = Vocabulary::demo();
    let pieces: Vec<Vec<u8>> = vocab.tokens().map(<[u8]>::to_vec).collect();
    prop::collection::vec(prop::sample::select(pieces), 1..40).prop_map(|p| p.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn framing_round_trips(bytes in prop::collection::vec(any::<u8>(), 1..3000), bus in 1usize..80) {
        let txns = Framer::new(bus).unwrap().frame_bytes(&bytes).unwrap();
        prop_assert_eq!(txns.len(), bytes.len().div_ceil(bus));
        prop_assert!(txns.iter().enumerate().all(|(i, t)| t.seq == i as u64));
        prop_assert_eq!(deframe(&txns), bytes);
    }

    #[test]
    fn skip_set_complements_referenced_pixels(ih in 1usize..40, iw in 1usize..40, oh in 1usize..40, ow in 1usize..40) {
        let map = build_tile_map((ih, iw), (oh, ow)).unwrap();
        let used = referenced_coords(&map);
        let skipped: BTreeSet<Coord> = map.skip_set.iter().copied().collect();
        prop_assert_eq!(skipped.len(), map.skip_set.len());
        prop_assert!(used.is_disjoint(&skipped));
        prop_assert_eq!(used.len() + skipped.len(), ih * iw);
    }

    #[test]
    fn tokens_concatenate_to_prompt(text in demo_text(), bus in 6usize..40) {
        let vocab = Vocabulary::demo();
        let tokens = spec_tokenize(&text, &vocab).unwrap();
        prop_assert_eq!(vocab.render(&tokens).concat().into_bytes(), text.clone());
        let cfg = cfg();
        let mut s = spec(&cfg, "example-tokenize");
        s.bus_width = Some(bus);
        let adu = Adu::text(text).unwrap();
        let got = build_with_budget(&cfg, &s, &adu, &TableCache::new(), 0).unwrap().run().unwrap();
        prop_assert_eq!(got, reference_output(&cfg, &s, &adu, &TableCache::new()).unwrap());
    }

    #[test]
    fn resize_stays_within_input_range(img in image()) {
        let cfg = cfg();
        let (lo, hi) = (*img.payload().iter().min().unwrap(), *img.payload().iter().max().unwrap());
        for name in ["resize-row", "resize-tile", "resize-full"] {
            let s = spec(&cfg, name);
            let got = build_with_budget(&cfg, &s, &img, &TableCache::new(), cfg.fast_budget()).unwrap().run().unwrap();
            let Output::Image(out) = &got else { panic!("{name}: not an image") };
            // each term rounds on its own, so the sum may leave the range by up to 2
            prop_assert!(out.payload().iter().all(|&p| p as i32 >= lo as i32 - 2 && p as i32 <= hi as i32 + 2));
            let want = reference_output(&cfg, &s, &img, &TableCache::new()).unwrap();
            prop_assert!(compare_outputs(&got, &want, 2.0, None).unwrap().passed);
        }
    }

    #[test]
    fn normalize_inverts_to_scaled_pixels(img in image()) {
        let c = img.image_dims().unwrap().2;
        let params = if c == 3 { NormParams::imagenet() } else { NormParams::new(vec![0.5], vec![0.5]).unwrap() };
        let t = spec_to_tensor(&img).unwrap();
        let n = spec_normalize(&t, &params).unwrap();
        let (_, h, w) = n.tensor_dims().unwrap();
        for (i, (&x, &y)) in t.f32_values().iter().zip(&n.f32_values()).enumerate() {
            let ch = i / (h * w);
            prop_assert!((y * params.std[ch] + params.mean[ch] - x).abs() < 1e-5);
        }
    }

    #[test]
    fn to_tensor_values_lie_in_unit_interval(img in image()) {
        let t = spec_to_tensor(&img).unwrap();
        prop_assert!(t.f32_values().iter().all(|v| (0.0..1.0).contains(v)));
        let cfg = cfg();
        let got = build_with_budget(&cfg, &spec(&cfg, "totensor"), &img, &TableCache::new(), 0).unwrap().run().unwrap();
        prop_assert_eq!(got, Output::Tensor(t));
    }

    #[test]
    fn placement_never_changes_values(img in image(), budget in 0u64..400_000, policy in 0usize..4) {
        let mut cfg = cfg();
        cfg.placement.policy =
            [PlacementPolicy::SlidingWindow, PlacementPolicy::FrequencyHot, PlacementPolicy::Hybrid, PlacementPolicy::Random][policy];
        for name in ["normalize-lut", "normalize-fused", "resize-row", "resize-tile"] {
            let s = spec(&cfg, name);
            let cache = TableCache::new();
            let a = build_with_budget(&cfg, &s, &img, &cache, budget).unwrap().run().unwrap();
            let b = build_with_budget(&cfg, &s, &img, &cache, u64::MAX).unwrap().run().unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn placement_respects_budget(budget in 0u64..2_000_000, policy in 0usize..4, oh in 1usize..40, ow in 1usize..40) {
        let tables = build_interp_tables((48, 48), (oh, ow), PixelDomain::Full).unwrap();
        let config = PlacementConfig {
            policy: [PlacementPolicy::SlidingWindow, PlacementPolicy::FrequencyHot, PlacementPolicy::Hybrid, PlacementPolicy::Random][policy],
            ..Default::default()
        };
        let pixels: Vec<u8> = (0..=255).collect();
        let p = plan_placement(&tables.terms, &config, budget, &AccessHint::from_pixels(&pixels));
        prop_assert!(p.fast_bytes() <= budget);
        prop_assert_eq!(p.fast_bytes() + p.slow_bytes(), tables.terms.byte_size());
    }
}
