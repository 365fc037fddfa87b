//! End-to-end tests of the command line against the real binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use demea::hierarchy::io::{build_supports, save_hierarchy};
use demea::hierarchy::{build_hierarchy, extract_graph};
use demea::latent::LatentSequence;
use demea::model::{basic_config, ConvType, ModelSession, TrainingVariant};
use demea::shapes::icosphere;
use demea::{load_mesh, save_mesh};
use tempfile::TempDir;

fn demea(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demea"));
    cmd.args(args);
    cmd.env("DEMEA_THREADS", "1");
    cmd.output().expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn s(path: &Path) -> &str {
    path.to_str().expect("utf8 path")
}

fn write_template(dir: &Path) -> PathBuf {
    let path = dir.join("template.obj");
    save_mesh(&icosphere(2), &path).unwrap();
    path
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut tree = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            tree.insert(name, std::fs::read(&path).unwrap());
        }
    }
    tree
}

const CONFIG_JSON: &str = r#"{
  "latent_dim": 5,
  "conv_type": "spiral",
  "training_variant": "edl",
  "widths": [4, 6, 8],
  "graph_level": 2,
  "batch_size": 2,
  "epochs": 2,
  "learning_rate": 1e-3,
  "max_steps": 4,
  "seed": 1
}"#;

/// Builds a dataset (hierarchy + 4 synthetic samples) and trains for a few
/// steps; returns (dataset dir, checkpoint path).
fn trained_model(root: &Path) -> (PathBuf, PathBuf) {
    let template = write_template(root);
    let data = root.join("data");
    let hierarchy_dir = data.join("hierarchy");
    let out = demea(&[
        "build-hierarchy",
        s(&template),
        "--graph-nodes",
        "20",
        "--levels",
        "162,60,20,8",
        "--out",
        s(&hierarchy_dir),
    ]);
    assert_eq!(exit_code(&out), 0, "build-hierarchy: {}", stderr(&out));

    let out = demea(&["synth", "--data", s(&data), "--samples", "4", "--seed", "9"]);
    assert_eq!(exit_code(&out), 0, "synth: {}", stderr(&out));

    let config = root.join("config.json");
    std::fs::write(&config, CONFIG_JSON).unwrap();
    let model = root.join("model");
    let out = demea(&[
        "train",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--out",
        s(&model),
    ]);
    assert_eq!(exit_code(&out), 0, "train: {}", stderr(&out));
    (data, model.join("checkpoint.ckpt"))
}

/// Writes a self-contained model directory with untrained (zero output
/// layer) parameters, bypassing `train`.
fn zero_init_model(root: &Path, template: &Path) -> PathBuf {
    let mesh = load_mesh(template).unwrap();
    let graph = extract_graph(&mesh, 20).unwrap();
    let hierarchy = build_hierarchy(&mesh, &graph, &[162, 60, 20, 8]).unwrap();
    let supports = build_supports(&hierarchy, None);
    let dir = root.join("zero_model");
    std::fs::create_dir_all(&dir).unwrap();
    save_hierarchy(&dir.join("hierarchy"), &hierarchy, &graph, &supports).unwrap();
    let config = basic_config(5, ConvType::Spiral, TrainingVariant::Edl, vec![4, 6, 8], 2);
    config.to_json_file(dir.join("config.json")).unwrap();
    let session = ModelSession::new(config, hierarchy, graph, supports).unwrap();
    session.save_params(dir.join("checkpoint.ckpt")).unwrap();
    dir.join("checkpoint.ckpt")
}

#[test]
fn build_hierarchy_prints_level_table_and_rebuilds_byte_identically() {
    let tmp = TempDir::new().unwrap();
    let template = write_template(tmp.path());
    let out_dir = tmp.path().join("hier");
    let args = [
        "build-hierarchy",
        s(&template),
        "--graph-nodes",
        "42",
        "--levels",
        "162,42,12",
        "--out",
        s(&out_dir),
    ];

    let out = demea(&args);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("level"), "missing header: {table}");
    for count in ["162", "42", "12"] {
        assert!(table.contains(count), "missing level count {count}: {table}");
    }
    assert!(table.contains("graph level 1: 42 nodes"), "{table}");
    assert!(out_dir.join("run_manifest.json").is_file());

    let first = read_tree(&out_dir);
    assert!(first.len() > 3, "artifact set looks too small: {:?}", first.keys());
    let again = demea(&args);
    assert_eq!(exit_code(&again), 0);
    assert_eq!(stdout(&again), table, "level table must be reproducible");
    let second = read_tree(&out_dir);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &first {
        assert_eq!(bytes, &second[name], "{name} changed across identical reruns");
    }
}

#[test]
fn build_hierarchy_rejects_infeasible_requests() {
    let tmp = TempDir::new().unwrap();
    let template = write_template(tmp.path());

    let out = demea(&[
        "build-hierarchy",
        s(&template),
        "--graph-nodes",
        "42",
        "--levels",
        "162,42,60",
        "--out",
        s(&tmp.path().join("a")),
    ]);
    assert_eq!(exit_code(&out), 2, "non-decreasing counts must exit 2");
    assert!(!stderr(&out).is_empty(), "an explanation is expected on stderr");

    let out = demea(&[
        "build-hierarchy",
        s(&template),
        "--graph-nodes",
        "33",
        "--levels",
        "162,42,12",
        "--out",
        s(&tmp.path().join("b")),
    ]);
    assert_eq!(exit_code(&out), 2, "graph nodes must match a level count");
}

#[test]
fn pipeline_trains_and_roundtrip_report_matches_external_recomputation() {
    let tmp = TempDir::new().unwrap();
    let (data, ckpt) = trained_model(tmp.path());

    let model_dir = ckpt.parent().unwrap();
    assert!(model_dir.join("loss.csv").is_file());
    assert!(model_dir.join("config.json").is_file());
    assert!(model_dir.join("hierarchy").is_dir());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(model_dir.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 1);
    let loss_lines = std::fs::read_to_string(model_dir.join("loss.csv")).unwrap();
    assert_eq!(loss_lines.lines().count(), 1 + 4, "header plus one row per step");

    let sample = data.join("sample_000.obj");
    let recon = tmp.path().join("recon.obj");
    let out = demea(&[
        "roundtrip",
        s(&sample),
        "--ckpt",
        s(&ckpt),
        "--out",
        s(&recon),
    ]);
    assert_eq!(exit_code(&out), 0, "roundtrip: {}", stderr(&out));
    assert!(recon.is_file());

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("recon.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["vertex_count"], 162);
    assert_eq!(report["manifest"]["command"], "roundtrip");
    let reported = report["mean_per_vertex_error"].as_f64().unwrap();
    assert!(reported.is_finite() && reported >= 0.0);

    let input = load_mesh(&sample).unwrap();
    let output = load_mesh(&recon).unwrap();
    let external: f64 = input
        .vertices()
        .iter()
        .zip(output.vertices())
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / input.vertex_count() as f64;
    assert!(
        (reported - external).abs() <= 1e-9 + 1e-6 * external,
        "report {reported} vs external {external}"
    );
}

#[test]
fn roundtrip_of_template_through_untrained_model_is_exact() {
    let tmp = TempDir::new().unwrap();
    let template = write_template(tmp.path());
    let ckpt = zero_init_model(tmp.path(), &template);

    let recon = tmp.path().join("recon.obj");
    let latent = tmp.path().join("z.csv");
    let out = demea(&[
        "roundtrip",
        s(&template),
        "--ckpt",
        s(&ckpt),
        "--out",
        s(&recon),
        "--latent-out",
        s(&latent),
    ]);
    assert_eq!(exit_code(&out), 0, "roundtrip: {}", stderr(&out));

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("recon.report.json")).unwrap(),
    )
    .unwrap();
    let mean = report["mean_per_vertex_error"].as_f64().unwrap();
    assert!(mean < 1e-12, "untrained decoder must reproduce the template, got {mean}");

    let codes = LatentSequence::from_csv_file(&latent).unwrap();
    assert_eq!(codes.len(), 1);
    assert_eq!(codes.dim(), Some(5));
}

#[test]
fn latent_interpolate_endpoints_decode_to_direct_reconstructions() {
    let tmp = TempDir::new().unwrap();
    let (data, ckpt) = trained_model(tmp.path());

    let mut recon = Vec::new();
    let mut codes = Vec::new();
    for i in 0..2 {
        let sample = data.join(format!("sample_00{i}.obj"));
        let r = tmp.path().join(format!("recon{i}.obj"));
        let z = tmp.path().join(format!("z{i}.csv"));
        let out = demea(&[
            "roundtrip",
            s(&sample),
            "--ckpt",
            s(&ckpt),
            "--out",
            s(&r),
            "--latent-out",
            s(&z),
        ]);
        assert_eq!(exit_code(&out), 0, "roundtrip: {}", stderr(&out));
        recon.push(r);
        codes.push(z);
    }

    let interp = tmp.path().join("interp.csv");
    let prefix = tmp.path().join("frames").join("f");
    let out = demea(&[
        "latent",
        "interpolate",
        "--source",
        s(&codes[0]),
        "--target",
        s(&codes[1]),
        "--alphas",
        "0,0.25,0.5,0.75,1",
        "--out",
        s(&interp),
        "--ckpt",
        s(&ckpt),
        "--decode-prefix",
        s(&prefix),
    ]);
    assert_eq!(exit_code(&out), 0, "interpolate: {}", stderr(&out));

    let rows = LatentSequence::from_csv_file(&interp).unwrap();
    assert_eq!(rows.len(), 5);
    for i in 0..5 {
        assert!(tmp.path().join("frames").join(format!("f00{i}.obj")).is_file());
    }
    let frame0 = std::fs::read(tmp.path().join("frames/f000.obj")).unwrap();
    let frame4 = std::fs::read(tmp.path().join("frames/f004.obj")).unwrap();
    assert_eq!(frame0, std::fs::read(&recon[0]).unwrap(), "alpha 0 must equal the source decode");
    assert_eq!(frame4, std::fs::read(&recon[1]).unwrap(), "alpha 1 must equal the target decode");
}

#[test]
fn latent_transfer_and_smooth_honor_their_identities() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = trained_model(tmp.path());
    let session_dir = ckpt.parent().unwrap();
    assert!(session_dir.join("config.json").is_file());

    let seq_path = tmp.path().join("seq.csv");
    let sequence = LatentSequence::new(vec![
        vec![0.3, -0.1, 0.7, 0.05, -0.4],
        vec![0.1, 0.2, -0.3, 0.4, 0.5],
        vec![-0.2, 0.8, 0.0, -0.6, 0.25],
    ])
    .unwrap();
    sequence.to_csv_file(&seq_path).unwrap();
    let anchor_path = tmp.path().join("anchor.csv");
    LatentSequence::new(vec![vec![1.0, -1.0, 0.5, 0.25, 2.0]])
        .unwrap()
        .to_csv_file(&anchor_path)
        .unwrap();

    let transferred = tmp.path().join("transferred.csv");
    let out = demea(&[
        "latent",
        "transfer",
        "--sequence",
        s(&seq_path),
        "--target-first",
        s(&anchor_path),
        "--out",
        s(&transferred),
    ]);
    assert_eq!(exit_code(&out), 0, "transfer: {}", stderr(&out));
    let result = LatentSequence::from_csv_file(&transferred).unwrap();
    assert_eq!(result.len(), 3);
    assert_eq!(result.codes()[0], vec![1.0, -1.0, 0.5, 0.25, 2.0]);

    let smoothed = tmp.path().join("smoothed.csv");
    let out = demea(&[
        "latent",
        "smooth",
        "--sequence",
        s(&seq_path),
        "--alpha",
        "1",
        "--out",
        s(&smoothed),
    ]);
    assert_eq!(exit_code(&out), 0, "smooth: {}", stderr(&out));
    assert_eq!(
        std::fs::read(&smoothed).unwrap(),
        std::fs::read(&seq_path).unwrap(),
        "alpha 1 smoothing must be the identity"
    );
}

#[test]
fn gradcheck_cli_passes_and_detects_corruption() {
    let out = demea(&["gradcheck", "--scope", "fc", "--seeds", "4"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    for scope in ["fc", "elu", "losses"] {
        assert!(text.contains(scope), "missing {scope} line: {text}");
    }
    assert_eq!(text.matches("PASS").count(), 3, "{text}");
    assert!(!text.contains("FAIL"));

    let out = demea(&["gradcheck", "--scope", "fc", "--seeds", "2", "--corrupt"]);
    assert_eq!(exit_code(&out), 1, "corrupted gradients must exit 1");
    assert!(stdout(&out).contains("FAIL"));

    let out = demea(&["gradcheck", "--scope", "edl", "--seeds", "2", "--seed", "5"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("edl"));

    let out = demea(&["gradcheck", "--scope", "bogus"]);
    assert_eq!(exit_code(&out), 2, "unknown scope is a usage error");
}

#[test]
fn missing_inputs_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(&config, CONFIG_JSON).unwrap();

    let out = demea(&[
        "train",
        "--config",
        s(&config),
        "--data",
        s(&tmp.path().join("nowhere")),
        "--out",
        s(&tmp.path().join("run")),
    ]);
    assert_eq!(exit_code(&out), 2, "missing dataset dir: {}", stderr(&out));

    let out = demea(&[
        "train",
        "--config",
        s(&tmp.path().join("absent.json")),
        "--data",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("run")),
    ]);
    assert_eq!(exit_code(&out), 2, "missing config file");

    let out = demea(&["synth", "--data", s(tmp.path())]);
    assert_eq!(exit_code(&out), 2, "synth without a hierarchy");

    let out = demea(&[
        "roundtrip",
        s(&tmp.path().join("mesh.obj")),
        "--ckpt",
        s(&tmp.path().join("absent.ckpt")),
        "--out",
        s(&tmp.path().join("recon.obj")),
    ]);
    assert_eq!(exit_code(&out), 2, "missing checkpoint");
}
