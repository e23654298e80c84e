//! Running the `ctxlens` binary from tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn ctxlens(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxlens"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawning ctxlens")
}

/// Runs and panics with stderr on a non-zero exit.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ctxlens(dir, args);
    assert!(
        out.status.success(),
        "ctxlens {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub const TRAIN_CONFIG: &str =
    r#"{"preset": "sCL-simple-ranker", "output_dim": 32, "warmup_steps": 1000, "max_steps": 40, "eval_every": 20}"#;

/// Generates data, trains, encodes, matches, mines, binarizes and probes,
/// all inside `dir` with relative paths and one thread.
pub fn full_pipeline(dir: &Path) {
    ok(dir, &["gen-synth", "--seed", "7", "--out", "syn"]);
    std::fs::write(dir.join("train.json"), TRAIN_CONFIG).unwrap();
    ok(
        dir,
        &[
            "train",
            "--corpus",
            "syn/syn0.clem",
            "--corpus",
            "syn/syn1.clem",
            "--corpus",
            "syn/syn2.clem",
            "--pairs",
            "syn/train.tsv",
            "--validation",
            "syn/val.tsv",
            "--config",
            "train.json",
            "--seed",
            "3",
            "--out",
            "run",
        ],
    );
    for l in 0..3 {
        let corpus = format!("syn/syn{l}.clem");
        let out = format!("v{l}.clve");
        ok(
            dir,
            &[
                "encode",
                "--corpus",
                &corpus,
                "--checkpoint",
                "run/lens.cllp",
                "--out",
                &out,
            ],
        );
        let out = format!("m{l}.clve");
        ok(dir, &["encode", "--corpus", &corpus, "--meanpool", "--out", &out]);
    }
    ok(
        dir,
        &[
            "match",
            "--src",
            "v0.clve",
            "--tgt",
            "v1.clve",
            "--gold",
            "syn/gold-0-1.tsv",
            "--out",
            "match.json",
        ],
    );
    ok(
        dir,
        &[
            "mine",
            "--src",
            "v0.clve",
            "--tgt",
            "v2.clve",
            "--calibrate",
            "--gold",
            "syn/gold-0-2.tsv",
            "--sweep-out",
            "sweep.tsv",
            "--out",
            "mined.tsv",
        ],
    );
    ok(
        dir,
        &[
            "binarize",
            "--src",
            "v0.clve",
            "--tgt",
            "v1.clve",
            "--gold",
            "syn/gold-0-1.tsv",
            "--out",
            "binary.json",
        ],
    );
    ok(
        dir,
        &[
            "probe",
            "--vectors",
            "l0=v0.clve",
            "--vectors",
            "l1=v1.clve",
            "--vectors",
            "l2=v2.clve",
            "--out",
            "probe.json",
        ],
    );
    ok(
        dir,
        &[
            "langvec",
            "--vectors",
            "l0=m0.clve",
            "--vectors",
            "l1=m1.clve",
            "--vectors",
            "l2=m2.clve",
            "--out",
            "langvec.tsv",
        ],
    );
}

fn walk(root: &Path, rel: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(root.join(rel)).unwrap() {
        let entry = entry.unwrap();
        let path = rel.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            walk(root, &path, out);
        } else {
            out.insert(path.clone(), std::fs::read(root.join(&path)).unwrap());
        }
    }
}

/// Every file under `root` by relative path. Manifests have their timing
/// fields removed, since wall-clock time is the one thing allowed to vary.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    walk(root, Path::new(""), &mut files);
    for (path, bytes) in files.iter_mut() {
        if path.to_string_lossy().ends_with("manifest.json") {
            let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
            let obj = v.as_object_mut().unwrap();
            obj.remove("started_unix");
            obj.remove("wall_clock_seconds");
            *bytes = serde_json::to_vec(&v).unwrap();
        }
    }
    files
}

/// Paths whose contents differ, or that exist on one side only.
pub fn differences(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    let mut keys: Vec<&PathBuf> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
