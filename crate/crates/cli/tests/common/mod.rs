#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn cband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cband"))
        .args(args)
        .env_remove("CBAND_CACHE_DIR")
        .output()
        .expect("spawn cband")
}

/// Runs `cband` and returns its stdout parsed as JSON; panics on failure.
pub fn cband_json(args: &[&str]) -> serde_json::Value {
    let out = cband(args);
    assert!(
        out.status.success(),
        "cband {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("cband {args:?}: stdout is not JSON: {e}"))
}

/// The JSON error object printed on stderr by a failing run.
pub fn error_of(out: &Output) -> serde_json::Value {
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| {
        panic!(
            "stderr is not JSON: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    });
    err["error"].clone()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Seeded-weight VGG16 stage-2 graph and manifest in `dir`.
pub fn vgg16(dir: &Path) -> PathBuf {
    let path = dir.join("vgg16.onnx");
    if !path.exists() {
        cband_json(&["export-backbone", "--arch", "vgg16", "--out", s(&path)]);
    }
    path
}

/// A horizontal-ramp bit-depth ladder of Y4M clips; returns one path per depth.
pub fn ladder(dir: &Path, size: usize, bits: &[u8], frames: usize) -> Vec<PathBuf> {
    let spec = dir.join("spec.json");
    std::fs::write(&spec, format!(r#"{{"width":{size},"height":{size}}}"#)).unwrap();
    let list: Vec<String> = bits.iter().map(|b| b.to_string()).collect();
    let out = dir.join("stimuli");
    cband_json(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&out),
        "--bits",
        &list.join(","),
        "--frames",
        &frames.to_string(),
    ]);
    bits.iter()
        .map(|b| out.join(format!("bits{b}.y4m")))
        .collect()
}
