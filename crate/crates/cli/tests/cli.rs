use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edcnet::binfmt::ArrayFile;
use edcnet::edc::{decay_params, DEFAULT_EPSILON};
use serde_json::Value;

fn edcnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edcnet"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("spawn edcnet")
}

fn ok(args: &[&str]) -> Output {
    let out = edcnet(args);
    assert!(
        out.status.success(),
        "edcnet {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn gen(dir: &Path, count: &str, len: &str) {
    ok(&["gen", "--count", count, "--seed", "3", "--edc-len", len, "--out", s(dir)]);
}

#[test]
fn gen_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "5", "40");
    gen(&b, "5", "40");
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn train_then_predict_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    gen(&data, "8", "40");
    ok(&["train", "--data", s(&data), "--out", s(&run), "--preset", "tiny", "--epochs", "3", "--batch-size", "4"]);
    let ckpt = run.join("best.ckpt");
    assert!(ckpt.exists());

    let rooms = read_json(&data.join("rooms.json"));
    let room = tmp.path().join("room.json");
    fs::write(&room, rooms[0].to_string()).unwrap();
    let pred = tmp.path().join("pred.bin");
    ok(&["predict", "--ckpt", s(&ckpt), "--features", s(&room), "--out", s(&pred)]);
    let file = ArrayFile::read(&pred).unwrap();
    assert_eq!(file.dims, [1, 24, 40]);
    assert!(file.data.iter().all(|&v| v > 0.0 && v < 1.0));
    let side = read_json(&tmp.path().join("pred.bin.stamp.json"));
    assert!(side["frame_dt"].as_f64().unwrap() > 0.0);

    let report = tmp.path().join("eval.json");
    ok(&["eval", "--data", s(&data), "--ckpt", s(&ckpt), "--out", s(&report)]);
    let md = ok(&["report", "--in", s(&report)]);
    assert!(!md.stdout.is_empty());
}

#[test]
fn self_check_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "10", "200");
    let report = tmp.path().join("self.json");
    ok(&["eval", "--data", s(&data), "--self-check", "--out", s(&report)]);
    let r = read_json(&report);
    for p in ["edt", "t20", "t30"] {
        assert_eq!(r["headline"][p]["rmse"].as_f64(), Some(0.0), "{p}");
    }
}

#[test]
fn reconstruction_keeps_band_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--seed", "5", "--edc-len", "1000", "--out", s(&sim)]);
    let file = ArrayFile::read(&sim.join("edc.bin")).unwrap();
    let frame_dt = read_json(&sim.join("edc.bin.stamp.json"))["frame_dt"].as_f64().unwrap();
    let len = file.dims[2] as usize;
    let row: Vec<f32> = file.data.chunks(len).nth(10).unwrap().to_vec();
    let want = decay_params(&row, frame_dt, DEFAULT_EPSILON).unwrap().t30_s.unwrap();

    // a single band, so the waveform energy is exactly the curve energy
    let one = tmp.path().join("one.bin");
    ArrayFile::new([1, 1, row.len() as u64], row).unwrap().write(&one).unwrap();
    let wav = tmp.path().join("rec.wav");
    let dt = frame_dt.to_string();
    ok(&["reconstruct", "--edc", s(&one), "--frame-dt", &dt, "--out", s(&wav), "--seed", "2"]);
    let params = tmp.path().join("params.json");
    ok(&["analyze", "--wav", s(&wav), "--out", s(&params)]);
    let got = read_json(&params)["params"]["t30_s"].as_f64().unwrap();
    assert!((got - want).abs() <= 0.1 * want, "{got} vs {want}");
}

#[test]
fn exit_codes() {
    assert_eq!(edcnet(&["bogus"]).status.code(), Some(1));
    assert_eq!(edcnet(&["--help"]).status.code(), Some(0));
    assert_eq!(edcnet(&["analyze"]).status.code(), Some(1));
    let missing = edcnet(&["analyze", "--edc", "/nonexistent/x.bin", "--frame-dt", "0.01"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/x.bin"));
}
