use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn nicflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nicflow")).args(args).output().expect("spawn nicflow")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn ppm(h: usize, w: usize) -> Vec<u8> {
    let mut b = format!("P6\n{w} {h}\n255\n").into_bytes();
    b.extend((0..h * w * 3).map(|i| (i * 7 % 256) as u8));
    b
}

#[test]
fn build_luts_reports_224_interp_sizing() {
    let dir = tempfile::tempdir().unwrap();
    let out = nicflow(&["build-luts", "--out", dir.path().to_str().unwrap(), "--input-dims", "64x64"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = stdout_json(&out);
    let lines = lines.as_array().unwrap();
    let analytic = lines.iter().find(|l| l["file"].is_null()).unwrap();
    assert_eq!(analytic["entries"], 224 * 224 * 4 * 255);
    assert_eq!(analytic["bytes"], (224u64 * 224 * 4 * 255 * 34).div_ceil(8));
    let norm = lines.iter().filter(|l| l["name"].as_str().unwrap().starts_with("normalize_fused")).count();
    assert_eq!(norm, 3);
    let files = fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, lines.len() - 1);
}

#[test]
fn verify_single_pipeline_passes() {
    let out = nicflow(&["verify", "--pipeline", "example-tokenize"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["pipelines"][0]["passed"], 1);
}

#[test]
fn verify_honours_seed_and_overrides() {
    let out = nicflow(&["--seed", "9", "--override", "corpus.images=3", "verify", "--pipeline", "normalize-lut"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["pipelines"][0]["samples"], 3);
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(nicflow(&["--override", "version=7", "verify"]).status.code(), Some(2));
    assert_eq!(nicflow(&["verify", "--pipeline", "missing"]).status.code(), Some(2));
    assert_eq!(nicflow(&["--config", "/nonexistent.toml", "cost"]).status.code(), Some(2));
    assert_eq!(nicflow(&["cost", "--group", "missing"]).status.code(), Some(2));
}

#[test]
fn cost_csv_has_one_row_per_variant() {
    let out = nicflow(&["cost", "--group", "normalize", "--format", "csv"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "first_output_latency_cycles"));
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][1], "normalize-fused");
    assert_eq!(&rows[0][2], "1");
}

#[test]
fn cost_json_ranks_tile_resize_first() {
    let out = nicflow(&["cost", "--group", "resize"]);
    assert!(out.status.success());
    let groups = stdout_json(&out);
    assert_eq!(groups[0]["group"], "resize");
    assert_eq!(groups[0]["ranked"][0]["name"], "resize-tile");
}

#[test]
fn infeasible_budget_exits_with_one() {
    // Tables are placed in fast memory up to 1 MB but the objective allows 10 bytes.
    let out = nicflow(&[
        "--override",
        "fast_budget_bytes=1000000",
        "--override",
        "objective.budget_bytes=10",
        "cost",
        "--group",
        "normalize",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_tokenizes_prompt_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("prompt.txt");
    let out_path = dir.path().join("tokens.json");
    fs::write(&input, "This is an example of an input prompt").unwrap();
    let out = nicflow(&[
        "run",
        "--pipeline",
        "example-tokenize",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tokens: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let text: String = tokens.as_array().unwrap().iter().map(|t| t["text"].as_str().unwrap()).collect();
    assert_eq!(text, "This is an example of an input prompt");
    assert!(tokens.as_array().unwrap().iter().any(|t| t["text"] == " exam"));
}

#[test]
fn run_writes_resized_image_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    let out_path = dir.path().join("out.json");
    fs::write(&input, ppm(40, 48)).unwrap();
    let out = nicflow(&[
        "run",
        "--pipeline",
        "resize-row",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let desc: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(desc["dims"], serde_json::json!([32, 32, 3]));
    assert_eq!(fs::metadata(dir.path().join("out.bin")).unwrap().len(), 32 * 32 * 3);
    assert!(stdout_json(&out)["total_cycles"].as_u64().unwrap() > 0);
}

#[test]
fn run_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.txt");
    fs::write(&input, "").unwrap();
    let out = nicflow(&[
        "run",
        "--pipeline",
        "tokenize",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("t.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn zero_resize_tolerance_fails_with_report() {
    let out = nicflow(&[
        "--override",
        "pipelines.resize-row.tolerance=0",
        "--override",
        "corpus.images=10",
        "verify",
        "--pipeline",
        "resize-row",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report = stdout_json(&out);
    let cx = report["pipelines"][0]["counterexamples"].as_array().unwrap();
    assert!(!cx.is_empty());
    assert!(cx[0]["verdict"]["mismatch_count"].as_u64().unwrap() > 0);
}

#[test]
fn missing_vocabulary_is_a_config_error() {
    let out = nicflow(&[
        "--override",
        "pipelines.tokenize.stages.0.vocab=/no/such/vocab.txt",
        "verify",
        "--pipeline",
        "tokenize",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tiny_budget_spills_but_stays_feasible() {
    let cycles = |args: &[&str]| -> Vec<(String, u64, bool)> {
        let out = nicflow(args);
        assert!(out.status.success());
        let groups = stdout_json(&out);
        let mut v: Vec<_> = groups[0]["ranked"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                (
                    r["name"].as_str().unwrap().to_owned(),
                    r["perf"]["total_cycles"].as_u64().unwrap(),
                    r["evaluation"]["feasible"].as_bool().unwrap(),
                )
            })
            .collect();
        v.sort();
        v
    };
    let roomy = cycles(&["cost", "--group", "normalize"]);
    let tight = cycles(&["--override", "objective.budget_bytes=1", "cost", "--group", "normalize"]);
    let none = cycles(&["--override", "fast_budget_bytes=0", "cost", "--group", "normalize"]);
    for spilled in [tight, none] {
        assert_eq!(spilled.len(), 3);
        for ((name, fast, _), (_, slow, feasible)) in roomy.iter().zip(&spilled) {
            assert!(feasible, "{name}");
            assert!(slow > fast, "{name}: {slow} <= {fast}");
        }
    }
}

#[test]
fn run_normalizes_ppm_to_float_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    let out_path = dir.path().join("tensor.json");
    fs::write(&input, ppm(5, 7)).unwrap();
    let out = nicflow(&[
        "run",
        "--pipeline",
        "normalize-fused",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let desc: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(desc["kind"], "tensor_f32");
    assert_eq!(desc["dims"], serde_json::json!([3, 5, 7]));
    let raw = fs::read(dir.path().join("tensor.bin")).unwrap();
    assert_eq!(raw.len(), 3 * 5 * 7 * 4);
    // first pixel's red value is 0: (0 - 0.485) / 0.229
    let first = f32::from_le_bytes(raw[..4].try_into().unwrap());
    assert!((first - (0.0 - 0.485) / 0.229).abs() < 1e-5);
}
