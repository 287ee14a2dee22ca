use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmanon_core::eval::{write_pairs, PairRecord};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lmanon");

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/faces")
}

fn lmanon(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = lmanon(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary JSON on stdout")
}

/// Exit code and the parsed error report from stderr.
fn failure(args: &[&str]) -> (i32, Value) {
    let out = lmanon(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error line on stderr");
    let report: Value = serde_json::from_str(line).expect("error JSON");
    (out.status.code().expect("exit code"), report)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(snapshot(&path));
        } else {
            files.insert(path.clone(), fs::read(&path).unwrap());
        }
    }
    files
}

fn tiny_gan_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "image_size = 32\n[gan]\nbase_channels = 4\nepochs = 2\nbatch_size = 4\n[train]\nsynthetic = 6\n",
    )
    .unwrap();
    path
}

#[test]
fn prepare_counts_fixture_and_repeats_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let before = snapshot(&fixture_dir());
    let out = tmp.path().join("prep");
    let summary = ok(&["prepare", "--input", s(&fixture_dir()), "--face-size", "64", "--out", s(&out)]);
    assert_eq!(summary["prepared"], 8);
    assert_eq!(summary["discarded"], 2);
    let first = snapshot(&out);
    ok(&["prepare", "--input", s(&fixture_dir()), "--face-size", "64", "--out", s(&out)]);
    let second = snapshot(&out);
    let key = out.join("manifest.json");
    assert_eq!(first[&key], second[&key]);
    for (path, bytes) in &first {
        if !path.ends_with("run.json") {
            assert_eq!(bytes, &second[path], "{} changed on rerun", path.display());
        }
    }
    assert_eq!(before, snapshot(&fixture_dir()), "inputs were modified");
    let record: Value = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["config_hash"], summary["config_hash"]);
    assert_eq!(record["seed"], 0);
}

#[test]
fn training_with_equal_seed_gives_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_gan_config(tmp.path());
    let run = |name: &str, seed: &str| {
        ok(&["train", "--config", s(&config), "--seed", seed, "--out", s(&tmp.path().join(name))])
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a["checkpoint_sha256"], b["checkpoint_sha256"]);
    assert_ne!(a["checkpoint_sha256"], c["checkpoint_sha256"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    for name in ["epoch_001.lmck", "epoch_002.lmck", "train_log.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a/checkpoints").join(name)).unwrap(),
            fs::read(tmp.path().join("b/checkpoints").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn identity_anonymizer_has_zero_distance_and_reports_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let mut pairs = Vec::new();
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let src = entry.unwrap().path();
        let copy = tmp.path().join(src.file_name().unwrap());
        fs::copy(&src, &copy).unwrap();
        pairs.push(PairRecord {
            id: src.file_stem().unwrap().to_string_lossy().into_owned(),
            original_path: src,
            anonymized_path: copy,
            method: "original".into(),
            label: None,
        });
    }
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    let pairs_csv = tmp.path().join("pairs.csv");
    write_pairs(&pairs_csv, &pairs).unwrap();

    let out = tmp.path().join("eval");
    let summary = ok(&["eval", "anonymity", "--pairs", s(&pairs_csv), "--out", s(&out)]);
    assert_eq!(summary["result"][0]["mean_distance"], 0.0);
    assert_eq!(summary["result"][0]["evaluated"], 10);
    let report = fs::read(out.join("anonymity_report.json")).unwrap();
    assert!(out.join("anonymity.png").exists());

    let quiet = tmp.path().join("quiet");
    ok(&["eval", "anonymity", "--pairs", s(&pairs_csv), "--no-plots", "--out", s(&quiet)]);
    assert_eq!(report, fs::read(quiet.join("anonymity_report.json")).unwrap());
    assert!(!quiet.join("anonymity.png").exists());

    for kind in ["emotion", "traits"] {
        let a = tmp.path().join(format!("{kind}_a"));
        let b = tmp.path().join(format!("{kind}_b"));
        ok(&["eval", kind, "--pairs", s(&pairs_csv), "--seed", "3", "--out", s(&a)]);
        ok(&["eval", kind, "--pairs", s(&pairs_csv), "--seed", "3", "--out", s(&b)]);
        let file = format!("{kind}_report.json");
        assert_eq!(fs::read(a.join(&file)).unwrap(), fs::read(b.join(&file)).unwrap());
    }
}

#[test]
fn anonymize_and_baselines_write_pairs_for_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_gan_config(tmp.path());
    let train = tmp.path().join("train");
    ok(&["train", "--config", s(&config), "--seed", "7", "--out", s(&train)]);
    let ckpt = train.join("checkpoints/final.lmck");
    let before = snapshot(&fixture_dir());

    let anon = tmp.path().join("anon");
    let summary = ok(&["anonymize", "--input", s(&fixture_dir()), "--checkpoint", s(&ckpt), "--out", s(&anon)]);
    assert_eq!(summary["written"], 10);
    assert_eq!(summary["average_face_fallbacks"], 2);
    // Both blank images fall back to the same average face.
    assert_eq!(
        fs::read(anon.join("images/empty_black.png")).unwrap(),
        fs::read(anon.join("images/empty_gray.png")).unwrap()
    );
    let pixelated = tmp.path().join("pix");
    ok(&["baseline", "pixelate", "--input", s(&fixture_dir()), "--k", "4", "--out", s(&pixelated)]);
    assert!(fs::read_to_string(pixelated.join("pairs.csv")).unwrap().contains("pixelate-4"));

    let eval = tmp.path().join("eval");
    let summary = ok(&["eval", "anonymity", "--pairs", s(&anon.join("pairs.csv")), "--out", s(&eval)]);
    assert_eq!(summary["result"][0]["method"], "ours");
    assert_eq!(before, snapshot(&fixture_dir()), "inputs were modified");
}

#[test]
fn failures_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    let (code, report) = failure(&["baseline", "blur", "--input", s(&tmp.path().join("absent")), "--out", s(&out)]);
    assert_eq!((code, report["error"]["kind"].as_str()), (3, Some("missing-input")));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "sed = 4\n").unwrap();
    let (code, report) = failure(&["baseline", "blur", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!((code, report["error"]["kind"].as_str()), (2, Some("invalid-config")));

    // A built-in adapter served over the wire, answering with the wrong protocol version.
    let spec = format!("embedder=cmd:{BIN} adapter-serve --role embedder --protocol-version 9");
    let pairs = tmp.path().join("pairs.csv");
    let img = fixture_dir().join("face_00.png");
    write_pairs(
        &pairs,
        &[PairRecord {
            id: "a".into(),
            original_path: img.clone(),
            anonymized_path: img,
            method: "ours".into(),
            label: None,
        }],
    )
    .unwrap();
    let (code, report) = failure(&["eval", "anonymity", "--pairs", s(&pairs), "--adapter", &spec, "--out", s(&out)]);
    assert_eq!((code, report["error"]["kind"].as_str()), (4, Some("adapter-protocol")));

    // The same adapter at the right version works.
    let spec = format!("embedder=cmd:{BIN} adapter-serve --role embedder");
    let summary = ok(&["eval", "anonymity", "--pairs", s(&pairs), "--adapter", &spec, "--out", s(&out)]);
    assert_eq!(summary["result"][0]["mean_distance"], 0.0);

    let config = tiny_gan_config(tmp.path());
    let train = tmp.path().join("train");
    ok(&["train", "--config", s(&config), "--seed", "1", "--out", s(&train)]);
    let mut bytes = fs::read(train.join("checkpoints/final.lmck")).unwrap();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    let future = tmp.path().join("future.lmck");
    fs::write(&future, bytes).unwrap();
    let (code, report) = failure(&[
        "anonymize",
        "--input",
        s(&fixture_dir()),
        "--checkpoint",
        s(&future),
        "--out",
        s(&out),
    ]);
    assert_eq!((code, report["error"]["kind"].as_str()), (5, Some("checkpoint")));

    let (code, _) = failure(&["train", "--synthetic", "2", "--image-size", "48", "--out", s(&out)]);
    assert_eq!(code, 2);
    let (code, _) = failure(&["nonsense"]);
    assert_eq!(code, 2);
}

#[test]
fn served_adapters_match_in_process_results() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture_dir();
    let faces = |name: &str, adapters: &[String]| {
        let out = tmp.path().join(name);
        let mut args = vec!["prepare", "--input", s(&input), "--face-size", "64", "--out", s(&out)];
        for spec in adapters {
            args.extend(["--adapter", spec.as_str()]);
        }
        let summary = ok(&args);
        assert_eq!(summary["prepared"], 8);
        snapshot(&out.join("faces"))
            .into_iter()
            .map(|(p, b)| (p.file_name().unwrap().to_owned(), b))
            .collect::<Vec<_>>()
    };
    let served: Vec<String> = ["detector", "segmenter", "landmarker"]
        .iter()
        .map(|role| format!("{role}=cmd:{BIN} adapter-serve --role {{role}}"))
        .collect();
    assert_eq!(faces("inproc", &[]), faces("served", &served));
}
