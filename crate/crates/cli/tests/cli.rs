use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ricnet_core::config::RunConfig;
use ricnet_core::dpcnet::ModelConfig;
use tempfile::TempDir;

fn ricnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ricnet(args);
    assert!(
        out.status.success(),
        "ricnet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn synth(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("data{seed}"));
    ok(&[
        "synth", "--kind", "all", "--count", &count.to_string(), "--points", "256", "--seed",
        &seed.to_string(), "--out", s(&out),
    ]);
    out.join("manifest.csv")
}

fn toy_config(dir: &Path, epochs: usize) -> PathBuf {
    let cfg = RunConfig {
        model: ModelConfig::toy(),
        epochs,
        ..RunConfig::default()
    };
    let p = dir.join("config.json");
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn csv_values(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn synth_writes_pairs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let m = synth(dir.path(), 4, 7);
    let manifest = read(&m);
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines[0], "category,complete_path,partial_path");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("sphere,") && lines[2].starts_with("box,"));
    let complete = m.parent().unwrap().join("0000_sphere_complete.xyz");
    let partial = m.parent().unwrap().join("0000_sphere_partial.xyz");
    assert_eq!(read(&complete).lines().count(), 256);
    assert_eq!(read(&partial).lines().count(), 128);

    let again = dir.path().join("again");
    ok(&[
        "synth", "--kind", "all", "--count", "4", "--points", "256", "--seed", "7", "--out", s(&again),
    ]);
    assert_eq!(read(&complete), read(&again.join("0000_sphere_complete.xyz")));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = ricnet(&[
        "transform", "--in", s(&dir.path().join("nope.xyz")), "--out", s(&dir.path().join("o.xyz")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(ricnet(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn malformed_xyz_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "1 2 3\n4 five 6\n").unwrap();
    let out = ricnet(&["transform", "--in", s(&bad), "--out", s(&dir.path().join("o.xyz"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.xyz:2:"));
}

#[test]
fn transform_round_trips_through_saved_json() {
    let dir = TempDir::new().unwrap();
    let m = synth(dir.path(), 1, 3);
    let src = m.parent().unwrap().join("0000_sphere_complete.xyz");
    let (moved, t) = (dir.path().join("moved.xyz"), dir.path().join("t.json"));
    ok(&[
        "transform", "--in", s(&src), "--out", s(&moved), "--seed", "9", "--save-transform", s(&t),
    ]);
    let replay = dir.path().join("replay.xyz");
    ok(&["transform", "--in", s(&src), "--out", s(&replay), "--transform", s(&t)]);
    assert_eq!(read(&moved), read(&replay));
    assert_ne!(read(&moved), read(&src));
}

#[test]
fn features_are_invariant_under_transform() {
    let dir = TempDir::new().unwrap();
    let m = synth(dir.path(), 2, 5);
    let src = m.parent().unwrap().join("0001_box_complete.xyz");
    let moved = dir.path().join("moved.xyz");
    ok(&["transform", "--in", s(&src), "--out", s(&moved), "--seed", "11"]);
    let cfg = toy_config(dir.path(), 1);
    let (fa, fb) = (dir.path().join("fa"), dir.path().join("fb"));
    for (cloud, out) in [(&src, &fa), (&moved, &fb)] {
        ok(&[
            "features", "--in", s(cloud), "--out", s(out), "--refs", "32", "--k", "8",
            "--dump-features", "--config", s(&cfg),
        ]);
    }
    let irif = read(&fa.join("irif.csv"));
    assert_eq!(irif.lines().next().unwrap(), "ref_idx,nbr_rank,s,delta,a1,a2,a3,b1,b2,b3");
    assert_eq!(irif.lines().count(), 1 + 32 * 8);
    let (a, b) = (csv_values(&irif), csv_values(&read(&fb.join("irif.csv"))));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra[..2], rb[..2]);
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-6);
        }
    }
    let (ga, gb) = (
        csv_values(&read(&fa.join("g_ri.csv"))),
        csv_values(&read(&fb.join("g_ri.csv"))),
    );
    assert_eq!(ga[0].len(), ModelConfig::toy().encoder.g_dim);
    for (x, y) in ga[0].iter().zip(&gb[0]) {
        assert!((x - y).abs() < 1e-4);
    }
    assert!(fa.join("features.csv").exists() && fa.join("v.csv").exists());
}

#[test]
fn identity_model_scores_perfectly() {
    let dir = TempDir::new().unwrap();
    let m = synth(dir.path(), 3, 2);
    let out = dir.path().join("eval.csv");
    ok(&[
        "eval", "--identity-model", "--data", s(&m), "--original", "--transformed", "--out", s(&out),
    ]);
    let text = read(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("category,n,cd_x1e4,f1,transformed"));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 8);
    for l in body {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[2], "0", "{l}");
        assert_eq!(f[3], "1", "{l}");
    }
}

#[test]
fn train_complete_and_eval_a_toy_model() {
    let dir = TempDir::new().unwrap();
    let m = synth(dir.path(), 3, 4);
    let cfg = toy_config(dir.path(), 0);
    let ck = dir.path().join("model.json");
    ok(&["train", "--config", s(&cfg), "--data", s(&m), "--out-checkpoint", s(&ck)]);
    let log = read(&ck.with_extension("log.csv"));
    assert_eq!(log.lines().count(), 1);
    assert!(log.starts_with("epoch,"));

    ok(&["train", "--resume", s(&ck), "--epochs", "1", "--out-checkpoint", s(&ck), "--data", s(&m)]);
    assert_eq!(read(&ck.with_extension("log.csv")).lines().count(), 2);

    let partial = m.parent().unwrap().join("0002_cylinder_partial.xyz");
    let (fine, coarse) = (dir.path().join("fine.xyz"), dir.path().join("coarse.xyz"));
    ok(&[
        "complete", "--checkpoint", s(&ck), "--in", s(&partial), "--out", s(&fine), "--coarse", s(&coarse),
    ]);
    let again = dir.path().join("again.xyz");
    ok(&["complete", "--checkpoint", s(&ck), "--in", s(&partial), "--out", s(&again)]);
    assert_eq!(read(&fine), read(&again));
    let toy = ModelConfig::toy();
    assert_eq!(read(&fine).lines().count(), toy.refiner.n_fine);
    assert_eq!(read(&coarse).lines().count(), toy.coarse_points);

    let report = dir.path().join("eval.csv");
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&m), "--transformed", "--out", s(&report)]);
    let text = read(&report);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn invalid_config_value_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let m = synth(dir.path(), 1, 1);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"epochs": 1, "fscore_tau": -1.0}"#).unwrap();
    let out = ricnet(&[
        "train", "--config", s(&cfg), "--data", s(&m), "--out-checkpoint", s(&dir.path().join("c.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"epochs": 1, "unknown": 3}"#).unwrap();
    let out = ricnet(&[
        "train", "--config", s(&cfg), "--data", s(&m), "--out-checkpoint", s(&dir.path().join("c.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
