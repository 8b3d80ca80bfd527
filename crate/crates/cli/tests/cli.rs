mod common;

use cband_core::nss::cache::FeatureCache;
use cband_core::nss::{FeatureMode, NssFeatureVector};
use cband_core::regressor::{layer_dims, save_model, Layer, Mlp};
use common::{cband, cband_json, error_of, ladder, s, vgg16};

const SUBCOMMANDS: [&str; 7] = [
    "extract",
    "score",
    "train",
    "benchmark",
    "sureal",
    "synth",
    "export-backbone",
];

#[test]
fn every_subcommand_has_help() {
    for sub in SUBCOMMANDS {
        let out = cband(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn unknown_flags_and_missing_arguments_exit_two() {
    for args in [
        &["extract", "--bogus"][..],
        &["score"],
        &["train", "--mos", "x.csv"],
        &["frobnicate"],
    ] {
        assert_eq!(cband(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn missing_inputs_are_usage_errors_with_json_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = cband(&["sureal", "--ratings", s(&dir.path().join("none.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "FileNotFound");
}

#[test]
fn missing_manifest_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let backbone = vgg16(dir.path());
    let clip = &ladder(dir.path(), 32, &[8], 2)[0];
    std::fs::remove_file(dir.path().join("vgg16.json")).unwrap();
    let out = cband(&[
        "extract",
        "--input",
        s(clip),
        "--backbone",
        s(&backbone),
        "--out",
        s(&dir.path().join("x.cbnd")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_of(&out);
    assert_eq!(err["kind"], "ManifestMissing");
    assert!(err["message"].as_str().unwrap().contains("vgg16.json"));
}

#[test]
fn stage_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let backbone = vgg16(dir.path());
    let clip = &ladder(dir.path(), 32, &[8], 1)[0];
    let out = cband(&[
        "extract",
        "--input",
        s(clip),
        "--backbone",
        s(&backbone),
        "--stage",
        "3",
        "--out",
        s(&dir.path().join("x.cbnd")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "ManifestMismatch");
}

#[test]
fn per_second_sampling_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let backbone = vgg16(dir.path());
    let clip = &ladder(dir.path(), 32, &[6], 210)[0];
    let run = |name: &str| {
        let out = dir.path().join(name);
        let summary = cband_json(&[
            "extract",
            "--input",
            s(clip),
            "--backbone",
            s(&backbone),
            "--out",
            s(&out),
        ]);
        assert_eq!(summary["frames"], 7);
        assert_eq!(summary["dimension"], 256);
        out
    };
    let (a, b) = (run("a.cbnd"), run("b.cbnd"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.cbnd.json")).unwrap()).unwrap();
    assert_eq!(
        meta["frame_indices"],
        serde_json::json!([0, 30, 60, 90, 120, 150, 180])
    );

    let every = dir.path().join("every.cbnd");
    let summary = cband_json(&[
        "extract",
        "--input",
        s(clip),
        "--backbone",
        s(&backbone),
        "--sampling",
        "every-n:70",
        "--jobs",
        "1",
        "--out",
        s(&every),
    ]);
    assert_eq!(summary["frames"], 3);
}

#[test]
fn zero_weight_model_scores_its_output_bias() {
    let dir = tempfile::tempdir().unwrap();
    let dims = layer_dims(8);
    let mut layers: Vec<Layer<f32>> = dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect();
    layers[2].biases[0] = 42.5;
    let model = Mlp::from_layers(layers)
        .unwrap()
        .with_features(FeatureMode::Ggd, "unknown");
    let model_path = dir.path().join("zero.bin");
    save_model(&model, &model_path).unwrap();

    let frames = (0..3)
        .map(|i| NssFeatureVector {
            values: vec![1.0 + i as f32; 8],
            mode: FeatureMode::Ggd,
            frame_index: i,
            diagnostics: Vec::new(),
        })
        .collect();
    let cache_path = dir.path().join("clip.cbnd");
    FeatureCache::new(4, FeatureMode::Ggd, frames)
        .unwrap()
        .save(&cache_path)
        .unwrap();

    let report = cband_json(&[
        "score",
        "--features",
        s(&cache_path),
        "--model",
        s(&model_path),
    ]);
    assert_eq!(report["video_score"], 42.5);
    assert_eq!(
        report["frame_scores"],
        serde_json::json!([42.5, 42.5, 42.5])
    );
    assert_eq!(report["video_id"], "clip");

    let wrong = dir.path().join("wrong.cbnd");
    FeatureCache::new(
        4,
        FeatureMode::MeanStd,
        vec![NssFeatureVector {
            values: vec![0.0; 8],
            mode: FeatureMode::MeanStd,
            frame_index: 0,
            diagnostics: Vec::new(),
        }],
    )
    .unwrap()
    .save(&wrong)
    .unwrap();
    let out = cband(&["score", "--features", s(&wrong), "--model", s(&model_path)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_model_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.bin");
    std::fs::write(&model, b"not a model").unwrap();
    let cache = dir.path().join("c.cbnd");
    FeatureCache::new(
        1,
        FeatureMode::Ggd,
        vec![NssFeatureVector {
            values: vec![0.0; 2],
            mode: FeatureMode::Ggd,
            frame_index: 0,
            diagnostics: Vec::new(),
        }],
    )
    .unwrap()
    .save(&cache)
    .unwrap();
    let out = cband(&["score", "--features", s(&cache), "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "ModelFormatError");
}

#[test]
fn synth_writes_png_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("png");
    let summary = cband_json(&[
        "synth",
        "--out",
        s(&out),
        "--bits",
        "8,3",
        "--frames",
        "2",
        "--format",
        "png",
    ]);
    assert_eq!(summary["clips"][1]["bits"], 3);
    assert_eq!(summary["clips"][0]["unique_levels"], 256);
    assert_eq!(std::fs::read_dir(out.join("bits3")).unwrap().count(), 2);
    assert!(!out.join("bits3.y4m").exists());
    let bad = cband(&["synth", "--out", s(&out), "--bits", "3,8"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sureal_reports_estimates_with_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let mut csv = String::from("subject_id,stimulus_id,content_id,score\n");
    for subj in 0..4 {
        for stim in 0..6 {
            let score =
                20 + 10 * stim as i32 + [-3, 1, 0, 2][subj] + ((subj * 7 + stim * 3) % 5) as i32
                    - 2;
            csv.push_str(&format!("s{subj},e{stim},c{},{score}\n", stim % 2));
        }
    }
    std::fs::write(&ratings, csv).unwrap();
    let out = dir.path().join("est.json");
    let code = cband(&[
        "sureal",
        "--ratings",
        s(&ratings),
        "--no-ambiguity",
        "--out",
        s(&out),
    ]);
    assert!(code.status.success());
    let est: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(est["schema_version"], 1);
    assert_eq!(est["quality"].as_array().unwrap().len(), 6);
    assert_eq!(est["bias"].as_array().unwrap().len(), 4);
    assert!(est["ambiguity"]
        .as_array()
        .unwrap()
        .iter()
        .all(|a| a["value"] == 0.0));
    let q0 = &est["quality"][0];
    assert!(q0["ci95"][0].as_f64().unwrap() < q0["value"].as_f64().unwrap());
    assert_eq!(est["config"]["objective"], "reml");
}

/// synth -> extract -> train -> score on a small ladder, plus a benchmark
/// over five contents.
#[test]
fn pipeline_smoke() {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let backbone = vgg16(dir.path());
    let bits = [8u8, 6, 4, 3];
    let clips = ladder(dir.path(), 64, &bits, 31);
    let feats = dir.path().join("features");
    let mut mos = String::from("video_id,content_id,crf,mos\n");
    for c in 0..5 {
        for (clip, &b) in clips.iter().zip(&bits) {
            let id = format!("c{c}_b{b}");
            // Same stimulus per content; contents differ only by label noise.
            cband_json(&[
                "extract",
                "--input",
                s(clip),
                "--backbone",
                s(&backbone),
                "--out",
                s(&feats.join(format!("{id}.cbnd"))),
            ]);
            mos.push_str(&format!("{id},c{c},{b},{}\n", 10.0 * b as f64 + c as f64));
        }
    }
    let mos_path = dir.path().join("mos.csv");
    std::fs::write(&mos_path, mos).unwrap();

    let model = dir.path().join("model.bin");
    let summary = cband_json(&[
        "train",
        "--features-dir",
        s(&feats),
        "--mos",
        s(&mos_path),
        "--epochs",
        "5",
        "--out",
        s(&model),
    ]);
    assert_eq!(summary["videos"], 20);
    assert_eq!(summary["frames"], 40);
    let log = std::fs::read_to_string(dir.path().join("model.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 6);

    let score_out = dir.path().join("score.json");
    let timing = cband_json(&[
        "score",
        "--input",
        s(&clips[0]),
        "--backbone",
        s(&backbone),
        "--model",
        s(&model),
        "--out",
        s(&score_out),
    ]);
    assert!(timing["timings"]["inference"].as_f64().unwrap() >= 0.0);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&score_out).unwrap()).unwrap();
    assert_eq!(report["frame_scores"].as_array().unwrap().len(), 2);
    assert_eq!(report["backbone"], "vgg16-stage2");

    let from_cache = cband_json(&[
        "score",
        "--features",
        s(&feats.join("c0_b8.cbnd")),
        "--model",
        s(&model),
    ]);
    assert_eq!(from_cache["frame_scores"], report["frame_scores"]);

    let rep = dir.path().join("bench.json");
    cband_json(&[
        "benchmark",
        "--features-dir",
        s(&feats),
        "--mos",
        s(&mos_path),
        "--epochs",
        "2",
        "--repeats",
        "2",
        "--out",
        s(&rep),
        "--csv",
        s(&dir.path().join("bench.csv")),
    ]);
    let bench: serde_json::Value = serde_json::from_slice(&std::fs::read(&rep).unwrap()).unwrap();
    assert_eq!(bench["splits"].as_array().unwrap().len(), 2);
    assert_eq!(bench["splits"][0]["test"].as_array().unwrap().len(), 1);
    assert!(
        start.elapsed().as_secs() < 60,
        "pipeline took {:?}",
        start.elapsed()
    );
}

#[test]
fn score_cache_dir_reuses_features() {
    let dir = tempfile::tempdir().unwrap();
    let backbone = vgg16(dir.path());
    let clip = &ladder(dir.path(), 32, &[5], 1)[0];
    let dims = layer_dims(256);
    let layers: Vec<Layer<f32>> = dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect();
    let model = dir.path().join("m.bin");
    save_model(
        &Mlp::from_layers(layers)
            .unwrap()
            .with_features(FeatureMode::Ggd, "vgg16-stage2"),
        &model,
    )
    .unwrap();
    let cache_dir = dir.path().join("cache");
    let run = || {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_cband"))
            .args([
                "score",
                "--input",
                s(clip),
                "--backbone",
                s(&backbone),
                "--model",
                s(&model),
            ])
            .env("CBAND_CACHE_DIR", &cache_dir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let first = run();
    assert_eq!(std::fs::read_dir(&cache_dir).unwrap().count(), 2);
    assert_eq!(run(), first);
}
