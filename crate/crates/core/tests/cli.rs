use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geognn::graphstore::read_cache;
use geognn::trainer::read_metrics_csv;

const SEPARABLE: &str = r#"
seed = 11
[synth]
preset = "separable"
seeds_per_class = 20
[model]
architecture = "gcn"
geometry = "euclidean"
layers = 2
hidden_dim = 8
heads = 2
head_dim = 4
[train]
learning_rate = 0.01
max_epochs = 40
patience = 15
oversample_target = 20
lr_grid = [0.01]
curvature_grid = [1.0]
[grid]
replicates = 1
"#;

fn geognn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geognn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = geognn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

const STAGES: [&[&str]; 6] = [
    &["synth"],
    &["sample"],
    &["normalize"],
    &["train"],
    &["eval", "--split", "test"],
    &["report"],
];

fn pipeline(dir: &Path, extra: &[&str]) {
    for stage in STAGES {
        let mut args = vec!["--config", "run.toml"];
        args.extend_from_slice(extra);
        args.extend_from_slice(stage);
        ok(dir, &args);
    }
}

#[test]
fn separable_pipeline_reaches_perfect_f1() {
    let dir = setup(SEPARABLE);
    pipeline(dir.path(), &[]);
    let metrics = dir.path().join("out/metrics");
    for name in [
        "euclidean-gcn-2-depth2.metrics.csv",
        "euclidean-gcn-2-depth2.eval-test.metrics.csv",
    ] {
        let rows = read_metrics_csv(&std::fs::read(metrics.join(name)).unwrap()).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.macro_f1 == 1.0), "{name}");
    }
    for sub in ["manifest", "subgraphs", "stats", "checkpoints", "metrics"] {
        assert!(dir.path().join("out").join(sub).is_dir(), "{sub}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = setup(SEPARABLE);
    pipeline(a.path(), &[]);
    ok(a.path(), &["--config", "run.toml", "grid"]);
    let first = snapshot(a.path());
    pipeline(a.path(), &[]);
    ok(a.path(), &["--config", "run.toml", "grid"]);
    assert_eq!(first, snapshot(a.path()));

    // Worker count changes scheduling only.
    let b = setup(SEPARABLE);
    pipeline(b.path(), &["--workers", "3"]);
    ok(b.path(), &["--config", "run.toml", "--workers", "3", "grid"]);
    let second = snapshot(b.path());
    for (path, bytes) in &first {
        if !path.starts_with("out/manifest") {
            assert_eq!(Some(bytes), second.get(path), "{}", path.display());
        }
    }
}

#[test]
fn seed_flag_changes_outputs() {
    let a = setup(SEPARABLE);
    ok(a.path(), &["--config", "run.toml", "synth"]);
    ok(a.path(), &["--config", "run.toml", "sample"]);
    let b = setup(SEPARABLE);
    ok(b.path(), &["--config", "run.toml", "--seed", "12", "synth"]);
    ok(b.path(), &["--config", "run.toml", "--seed", "12", "sample"]);
    let split = |d: &Path| std::fs::read(d.join("out/subgraphs/split.csv")).unwrap();
    assert_ne!(split(a.path()), split(b.path()));
}

#[test]
fn normalize_refuses_non_train_fits() {
    let dir = setup(SEPARABLE);
    ok(dir.path(), &["--config", "run.toml", "synth"]);
    ok(dir.path(), &["--config", "run.toml", "sample"]);
    let out = geognn(dir.path(), &["--config", "run.toml", "normalize", "--fit-on", "validation"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let first: serde_json::Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(first["error"]["kind"], "config");

    // A train cache holding validation seeds is leakage too.
    let subgraphs = dir.path().join("out/subgraphs");
    std::fs::copy(subgraphs.join("validation.bin"), subgraphs.join("train.bin")).unwrap();
    let out = geognn(dir.path(), &["--config", "run.toml", "normalize"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a train seed"));
    assert!(!dir.path().join("out/stats/normalization.json").exists());
}

#[test]
fn sampled_subgraphs_respect_fanout_bounds() {
    let dir = setup("seed = 5\n[synth]\npreset = \"branching\"\nseeds_per_class = 12\ndepth = 3\n");
    ok(dir.path(), &["--config", "run.toml", "synth"]);
    ok(dir.path(), &["--config", "run.toml", "sample"]);
    let largest = |d: &Path| {
        ["train", "validation", "test"]
            .iter()
            .flat_map(|s| read_cache(&d.join(format!("out/subgraphs/{s}.bin"))).unwrap().subgraphs)
            .map(|s| s.len())
            .max()
            .unwrap()
    };
    let depth2 = largest(dir.path());
    assert!(depth2 <= 56 && depth2 > 6, "{depth2}");

    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 5\n[synth]\npreset = \"branching\"\nseeds_per_class = 12\ndepth = 3\n[sampling.fanouts]\n1 = 5\n2 = 10\n3 = 8\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", "run.toml", "sample"]);
    let depth3 = largest(dir.path());
    assert!(depth3 <= 456 && depth3 > depth2, "{depth3}");
}

#[test]
fn report_has_seven_class_rows_and_macro_per_run() {
    let dir = setup(SEPARABLE);
    pipeline(dir.path(), &[]);
    let text = std::fs::read_to_string(dir.path().join("out/metrics/report.md")).unwrap();
    let sections: Vec<&str> = text.split("## ").filter(|s| !s.trim().is_empty()).collect();
    assert_eq!(sections.len(), 2); // validation and test of one run
    for s in sections {
        let rows: Vec<&str> = s.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| class")).collect();
        assert_eq!(rows.len(), 8);
        assert!(rows[7].starts_with("| macro"));
    }
}

#[test]
fn errors_are_single_line_json() {
    let dir = setup("seed = 1\nbogus = 2\n");
    let out = geognn(dir.path(), &["--config", "run.toml", "sample"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "config");

    let dir = setup("");
    let out = geognn(dir.path(), &["--config", "run.toml", "sample"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "io");

    let out = geognn(dir.path(), &["train", "--nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = geognn(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(out.status.code(), Some(2), "missing caches is a usage error");
}
