use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use spikekit::codec;
use spikekit::imageio;
use spikekit::niqe::{self, NiqeModel};
use spikekit::recon;
use spikekit::scene::natural_scene;
use spikekit::sim::{simulate_constant, SimConfig};
use spikekit::IntensityImage;

fn spikekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikekit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "expected one summary line: {text}");
    serde_json::from_str(&text).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "expected one error line: {text}");
    serde_json::from_str(&text).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_constant_clip(path: &Path, value: f64, k: usize) {
    let img = IntensityImage::constant(6, 10, value).unwrap();
    let s = simulate_constant(&img, k, &SimConfig::default()).unwrap();
    codec::write_spk(path, &s, 1.0).unwrap();
}

#[test]
fn inspect_reports_header_fields() {
    let dir = tempfile::tempdir().unwrap();
    let spk = dir.path().join("a.spk");
    let s = simulate_constant(
        &IntensityImage::constant(3, 13, 0.25).unwrap(),
        40,
        &SimConfig::default(),
    )
    .unwrap();
    codec::write_spk(&spk, &s, 1.5).unwrap();
    let v = stdout_json(&spikekit(&["inspect", "-i", p(&spk)]));
    assert_eq!(v["k"], 40);
    assert_eq!(v["h"], 3);
    assert_eq!(v["w"], 13);
    assert_eq!(v["theta"], 1.5);
    assert_eq!(v["spikes"], s.count_spikes());
}

#[test]
fn tfi_reconstruction_is_exact_fifth_gray() {
    let dir = tempfile::tempdir().unwrap();
    let spk = dir.path().join("c.spk");
    write_constant_clip(&spk, 0.2, 200);
    let png = dir.path().join("c.png");
    let v = stdout_json(&spikekit(&[
        "reconstruct",
        "--method",
        "tfi",
        "-i",
        p(&spk),
        "-o",
        p(&png),
    ]));
    assert_eq!(v["method"], "tfi");
    let gray = imageio::to_gray8(&imageio::read_png(&png).unwrap());
    assert!(gray.pixels().all(|px| px.0[0] == 51));
}

#[test]
fn tfp_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let spk = dir.path().join("c.spk");
    write_constant_clip(&spk, 0.3, 100);
    let png = dir.path().join("c.png");
    stdout_json(&spikekit(&[
        "reconstruct",
        "--method",
        "tfp",
        "--window",
        "40",
        "-i",
        p(&spk),
        "-o",
        p(&png),
    ]));
    let (stream, theta) = codec::read_spk(&spk).unwrap();
    let direct = imageio::to_gray8(&recon::tfp(&stream, 40, theta).unwrap());
    let via_cli = imageio::to_gray8(&imageio::read_png(&png).unwrap());
    assert_eq!(direct, via_cli);
}

#[test]
fn voxelize_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let spk = dir.path().join("c.spk");
    write_constant_clip(&spk, 0.45, 200);
    let vox = dir.path().join("c.vox");
    let v = stdout_json(&spikekit(&[
        "voxelize",
        "--bins",
        "50",
        "-i",
        p(&spk),
        "-o",
        p(&vox),
    ]));
    assert_eq!(v["c"], 50);
    let (header, values) = recon::read_voxels(&vox).unwrap();
    let (stream, _) = codec::read_spk(&spk).unwrap();
    let direct = recon::voxelize(&stream, 50).unwrap();
    assert_eq!(header, direct.header());
    assert_eq!(
        values,
        direct
            .values()
            .iter()
            .map(|&c| c as f32)
            .collect::<Vec<_>>()
    );

    let out = spikekit(&["voxelize", "--bins", "7", "-i", p(&spk), "-o", p(&vox)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "parameter");
}

#[test]
fn simulate_from_frame_directory() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for i in 0..2 {
        let img = IntensityImage::constant(4, 9, 0.2).unwrap();
        imageio::write_png(frames.join(format!("f{i:03}.png")), &img).unwrap();
    }
    let spk = dir.path().join("s.spk");
    let v = stdout_json(&spikekit(&[
        "simulate",
        "--frames",
        p(&frames),
        "--repeat",
        "100",
        "--seed",
        "3",
        "-o",
        p(&spk),
    ]));
    assert_eq!(v["k"], 200);
    let (stream, theta) = codec::read_spk(&spk).unwrap();
    assert_eq!(theta, 1.0);
    assert!(recon::tfi(&stream, 1.0)
        .unwrap()
        .values()
        .iter()
        .all(|&x| x == 0.2));
}

#[test]
fn usage_errors_exit_two() {
    let out = spikekit(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = spikekit(&["inspect", "-i", "x.spk", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    let out = spikekit(&[
        "reconstruct",
        "--method",
        "tfi",
        "--window",
        "5",
        "-i",
        "x.spk",
        "-o",
        "y.png",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("--window"));
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.spk");
    std::fs::write(&bad, b"XXXX0000000000000000000000000000000000").unwrap();
    let out = spikekit(&["inspect", "-i", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "format");

    let out = spikekit(&["inspect", "-i", p(&dir.path().join("missing.spk"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    imageio::write_png(
        frames.join("a.png"),
        &IntensityImage::constant(3, 3, 0.5).unwrap(),
    )
    .unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"repeat": 8, "theta": 2.0}"#).unwrap();
    let spk = dir.path().join("s.spk");
    let v = stdout_json(&spikekit(&[
        "simulate",
        "--config",
        p(&cfg),
        "--frames",
        p(&frames),
        "--theta",
        "0.5",
        "-o",
        p(&spk),
    ]));
    assert_eq!(v["k"], 8);
    let (stream, theta) = codec::read_spk(&spk).unwrap();
    // explicit theta wins over the config value
    assert_eq!(theta, 0.5);
    assert_eq!(stream.count_spikes(), 8 * 9);

    std::fs::write(&cfg, r#"{"nonsense": 1}"#).unwrap();
    let out = spikekit(&["inspect", "--config", p(&cfg), "-i", p(&spk)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn import_dat_wraps_raw_payload() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulate_constant(
        &IntensityImage::constant(5, 16, 0.5).unwrap(),
        10,
        &SimConfig::default(),
    )
    .unwrap();
    let dat = dir.path().join("raw.dat");
    std::fs::write(&dat, s.payload()).unwrap();
    let spk = dir.path().join("raw.spk");
    let v = stdout_json(&spikekit(&[
        "import-dat",
        "--height",
        "5",
        "--width",
        "16",
        "-i",
        p(&dat),
        "-o",
        p(&spk),
    ]));
    assert_eq!(v["k"], 10);
    assert_eq!(codec::read_spk(&spk).unwrap().0, s);
}

fn fit_model(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("pristine");
    std::fs::create_dir(&corpus).unwrap();
    for s in 0..10 {
        imageio::write_png(
            corpus.join(format!("{s:02}.png")),
            &natural_scene(96, 96, 300 + s).unwrap(),
        )
        .unwrap();
    }
    let model = dir.join("m.niqe");
    let v = stdout_json(&spikekit(&[
        "niqe",
        "fit",
        "--images",
        p(&corpus),
        "--patch-size",
        "48",
        "-o",
        p(&model),
    ]));
    assert_eq!(v["features"], niqe::FEATURE_LEN);
    model
}

#[test]
fn niqe_fit_and_score_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = fit_model(dir.path());
    let img_path = dir.path().join("t.png");
    imageio::write_png(&img_path, &natural_scene(96, 96, 999).unwrap()).unwrap();
    let v = stdout_json(&spikekit(&[
        "niqe",
        "score",
        "--model",
        p(&model_path),
        "-i",
        p(&img_path),
    ]));
    let model = NiqeModel::load(&model_path).unwrap();
    let direct = niqe::niqe_score(&imageio::read_png(&img_path).unwrap(), &model).unwrap();
    assert_eq!(v["niqe"].as_f64().unwrap(), direct);
}

#[test]
fn select_hq_and_build_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_model(dir.path());

    let clips = dir.path().join("clips");
    for (class, seed) in [("cat", 1u64), ("cat", 2), ("dog", 3)] {
        let class_dir = clips.join(class);
        std::fs::create_dir_all(&class_dir).unwrap();
        let s = simulate_constant(
            &natural_scene(96, 96, seed).unwrap(),
            50,
            &SimConfig::default(),
        )
        .unwrap();
        codec::write_spk(class_dir.join(format!("s{seed}.spk")), &s, 1.0).unwrap();
    }

    let hq = dir.path().join("hq.png");
    let v = stdout_json(&spikekit(&[
        "select-hq",
        "--model",
        p(&model),
        "-i",
        p(&clips.join("cat/s1.spk")),
        "-o",
        p(&hq),
    ]));
    let chosen = v["chosen"].as_str().unwrap();
    let scores = v["scores"].as_object().unwrap();
    let min = scores
        .values()
        .map(|s| s.as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(scores[chosen].as_f64().unwrap(), min);
    assert!(hq.exists());

    let out = dir.path().join("out");
    let v = stdout_json(&spikekit(&[
        "build-dataset",
        "--clips",
        p(&clips),
        "--model",
        p(&model),
        "--out",
        p(&out),
        "--bins",
        "10",
        "--threads",
        "2",
    ]));
    assert_eq!(v["items"], 3);
    let manifest = spikekit::pipeline::DatasetManifest::load(out.join("manifest.json")).unwrap();
    manifest.validate().unwrap();
    let labels: Vec<_> = manifest
        .items
        .iter()
        .map(|i| i.class_label.as_str())
        .collect();
    assert_eq!(labels, ["cat", "cat", "dog"]);
    assert_eq!(manifest.items[2].clip_id, "clip_0002");
}
