use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twoway"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn rd_at_max_distortion_is_zero_rate() {
    let out = run(&["rd", "--source", fixture("ber50.json").to_str().unwrap(), "--D", "0.5"]);
    let v = stdout_json(&out);
    assert_eq!(v["rate"].as_f64().unwrap(), 0.0);
    assert_eq!(v["converged"], serde_json::Value::Bool(true));
}

#[test]
fn capacity_csv_reports_the_additive_corner() {
    let out = run(&[
        "capacity",
        "--channel",
        fixture("additive_05.json").to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let corner = 0.7136;
    let hit = rdr.records().any(|r| {
        let r = r.unwrap();
        let r1: f64 = r[1].parse().unwrap();
        let r2: f64 = r[2].parse().unwrap();
        (r1 - corner).abs() < 2e-3 && (r2 - corner).abs() < 2e-3
    });
    assert!(hit, "no frontier row near the corner:\n{text}");
}

#[test]
fn sscc_lossless_on_multiplying_channel_is_infeasible() {
    let out = run(&[
        "region",
        "--source",
        fixture("triangle_source_00.json").to_str().unwrap(),
        "--channel",
        fixture("multiplying.json").to_str().unwrap(),
        "--check",
        "cor4_sscc_shannon",
        "--d1",
        "0",
        "--d2",
        "0",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["verdict"], "Infeasible");
}

#[test]
fn simulate_example4_has_zero_block_errors() {
    let out = run(&["simulate", "--input", fixture("example4_sim.json").to_str().unwrap()]);
    let v = stdout_json(&out);
    assert_eq!(v["block_error_rate"].as_f64().unwrap(), 0.0);
    assert_eq!(v["trials"].as_u64().unwrap(), 10_000);
}

#[test]
fn missing_input_exits_with_validation_code() {
    let out = run(&["rd", "--source", "/no/such/file.json", "--D", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_pmf_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"alphabet":{"size":2},"probs":[0.9,0.9]}"#).unwrap();
    let out = run(&["rd", "--source", p.to_str().unwrap(), "--D", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_channel_builder_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ch.json");
    std::fs::write(&p, r#"{"name":"quantum"}"#).unwrap();
    let out = run(&["capacity", "--channel", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_flag_writes_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rd.json");
    let out = run(&[
        "rd",
        "--source",
        fixture("ber50.json").to_str().unwrap(),
        "--D",
        "0.5",
        "--output",
        p.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(v["rate"].as_f64().unwrap(), 0.0);
}

#[test]
fn examples_summary_is_seed_pinned_and_idempotent() {
    let args = ["examples", "--only", "example2", "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "stderr: {}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.ends_with("true"), "failed row: {line}");
    }
}

#[test]
fn fixtures_round_trip_bit_exactly() {
    for name in ["triangle_source_00.json", "triangle_source_10.json", "z_source_51.json"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let a: twoway::Joint = serde_json::from_str(&text).unwrap();
        let b: twoway::Joint = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let text = std::fs::read_to_string(fixture("ber50.json")).unwrap();
    let a: twoway::Pmf = serde_json::from_str(&text).unwrap();
    let b: twoway::Pmf = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(a, b);
    let text = std::fs::read_to_string(fixture("additive_05.json")).unwrap();
    let a: twoway::twc::TwcChannel = serde_json::from_str(&text).unwrap();
    let b: twoway::twc::TwcChannel = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(a, b);
}
