use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn mutable(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mutable")).args(args).env_remove("MUTABLE_CONFIG").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = mutable(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gen_trace_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let report = dir.path().join("r.json");
    let wav = dir.path().join("o.wav");
    let csv = dir.path().join("l.csv");
    ok(&["gen-trace", "--preset", "moving", "--taps", "6", "--seed", "3", "--out", s(&trace)]);
    ok(&["replay", "--trace", s(&trace), "--report", s(&report), "--wav", s(&wav), "--csv", s(&csv)]);
    let r = json(&report);
    assert_eq!(r["taps_detected"], 6);
    assert_eq!(r["evaluation"]["fn"], 0);
    assert!(std::fs::metadata(&wav).unwrap().len() > 44);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 7);

    // same inputs, same report
    let again = dir.path().join("r2.json");
    ok(&["replay", "--trace", s(&trace), "--report", s(&again)]);
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn gen_trace_from_spec_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"duration_s": 3.0, "seed": 1, "taps": [
            {"t_s": 0.5, "drum": 1, "class": "hard"},
            {"t_s": 1.5, "drum": 3, "class": "hard", "height_m": 0.2}]}"#,
    )
    .unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"policy": "continuous", "payload": "raw"}"#).unwrap();
    let trace = dir.path().join("t.jsonl");
    let report = dir.path().join("r.json");
    ok(&["gen-trace", "--spec", s(&spec), "--out", s(&trace)]);
    ok(&["replay", "--trace", s(&trace), "--config", s(&cfg), "--report", s(&report)]);
    let r = json(&report);
    assert_eq!(r["policy"], "continuous");
    assert_eq!(r["payload"], "raw");
    assert_eq!(r["hits"].as_array().unwrap().len(), 1);
    assert_eq!(r["drops"][0]["reason"], "depth-gate");
}

#[test]
fn calibrate_from_generated_training() {
    let dir = tempfile::tempdir().unwrap();
    let training = dir.path().join("training");
    let profile = dir.path().join("profile.json");
    ok(&["gen-training", "--out", s(&training), "--taps", "5", "--seed", "2"]);
    ok(&["calibrate", "--training", s(&training), "--out", s(&profile)]);
    let p = json(&profile);
    let thr = p["tap_threshold"].as_f64().unwrap();
    assert!(thr < -0.45 && thr > -0.6, "{thr}");
    assert_eq!(p["homography"].as_array().unwrap().len(), 9);
    assert_eq!(p["marker_confidence"], 4);

    let trace = dir.path().join("t.jsonl");
    let report = dir.path().join("r.json");
    ok(&["gen-trace", "--preset", "same-spot", "--taps", "5", "--out", s(&trace)]);
    ok(&["replay", "--trace", s(&trace), "--profile", s(&profile), "--report", s(&report)]);
    assert_eq!(json(&report)["taps_detected"], 5);

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = mutable(&["calibrate", "--training", s(&empty), "--out", s(&profile)]);
    assert!(!out.status.success());
}

#[test]
fn bench_reports_policy_gap() {
    let mean = |policy: &str| {
        let out = ok(&["bench", "--policy", policy, "--payload", "24", "--taps", "300"]);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["payload_bytes"], 24);
        v["latency"]["total"]["mean"].as_f64().unwrap()
    };
    let cont = mean("continuous");
    let adapt = mean("adaptive");
    assert!((cont - 124.3).abs() < 4.0, "{cont}");
    assert!((adapt - 100.3).abs() < 4.0, "{adapt}");
    let out = ok(&["bench", "--policy", "adaptive", "--payload", "62", "--taps", "300"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["latency"]["comm"]["mean"].as_f64().unwrap() - 110.87).abs() < 4.0);
    assert!(!mutable(&["bench", "--policy", "adaptive", "--payload", "30"]).status.success());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = mutable(&["replay", "--trace", s(&missing), "--report", s(&dir.path().join("r.json"))]);
    assert!(!out.status.success());
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"type\":\"imu\",\"t\":0,\"ax\":0,\"ay\":0,\"az\":1}\nnot json\n").unwrap();
    let out = mutable(&["replay", "--trace", s(&bad), "--report", s(&dir.path().join("r.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).unwrap();
    buf
}

#[test]
fn serve_uses_env_config() {
    let dir = tempfile::tempdir().unwrap();
    let flag_cfg = dir.path().join("flag.json");
    std::fs::write(&flag_cfg, "{}").unwrap();
    let env_cfg = dir.path().join("env.json");
    std::fs::write(
        &env_cfg,
        r#"{"layout": {"width": 1.2, "height": 0.8,
            "drums": [{"id": 7, "center": [0.6, 0.4], "radius": 0.2, "fundamental_hz": 200.0}]}}"#,
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_mutable"))
        .args(["serve", "--addr", "127.0.0.1:0", "--config", s(&flag_cfg)])
        .env("MUTABLE_CONFIG", &env_cfg)
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server output").unwrap();
        if let Some(rest) = line.split("listening on http://").nth(1) {
            break rest.split_whitespace().next().unwrap().to_string();
        }
    };
    let health = http_get(&addr, "/health");
    let layout = http_get(&addr, "/layout");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(health.starts_with("HTTP/1.1 200") && health.contains("ok"));
    assert!(layout.contains("\"id\":7"), "{layout}");
}
