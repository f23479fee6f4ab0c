use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ssa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssa"))
        .args(args)
        .output()
        .expect("run ssa")
}

fn ok(args: &[&str]) -> Output {
    let out = ssa(args);
    assert!(
        out.status.success(),
        "ssa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// generate, train and evaluate into `dir`; returns the evaluate CSV.
fn pipeline(dir: &Path, seed: &str) -> String {
    let case = fixture("case68.case");
    ok(&["generate", "--case", s(&case), "--points", "60", "--seed", seed, "--out", s(dir)]);
    let ds = dir.join("dataset.txt");
    ok(&["train", "--case", s(&case), "--dataset", s(&ds), "--epochs", "15", "--batch-size", "16", "--lr", "0.01", "--seed", seed, "--out", s(dir)]);
    ok(&["evaluate", "--case", s(&case), "--dataset", s(&ds), "--model", s(&dir.join("model.bin")), "--seed", seed, "--out", s(dir)]);
    std::fs::read_to_string(dir.join("evaluate.csv")).unwrap()
}

#[test]
fn pipeline_reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path(), "4");
    assert_eq!(first, pipeline(b.path(), "4"));
    assert!(first.starts_with("split,samples,accuracy,specificity,recall,tp,tn,fp,fn\ntest,6,"), "{first}");
    for f in ["dataset.txt", "model.bin", "history.csv", "history.json", "evaluate.json", "evaluate.txt", "generate.csv"] {
        assert!(a.path().join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(a.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 16);
    assert!(history.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n1,"));

    let dir = a.path();
    let case = fixture("case68.case");
    let model = dir.join("model.bin");
    let ds = dir.join("dataset.txt");

    // One verdict per stored point, in order, with the exact labels matching
    // the ones recorded at generation time.
    ok(&["assess", "--case", s(&case), "--model", s(&model), "--dataset", s(&ds), "--exact", "--out", s(dir)]);
    let verdicts = std::fs::read_to_string(dir.join("assess.csv")).unwrap();
    let dataset = std::fs::read_to_string(&ds).unwrap();
    let stored: Vec<&str> = dataset
        .lines()
        .filter(|l| l.starts_with("sample "))
        .map(|l| l.split(' ').nth(3).unwrap())
        .collect();
    let rows: Vec<Vec<&str>> = verdicts.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 60);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
        assert_eq!(row[3], stored[i]);
    }

    // A model trained with K = 3 refuses K = 4 before doing any work.
    let out = ssa(&["assess", "--case", s(&case), "--model", s(&model), "--k", "4", "--out", s(dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aggregation length 3"));

    ok(&["missing-data", "--case", s(&case), "--dataset", s(&ds), "--model", s(&model), "--seed", "4", "--out", s(dir)]);
    let missing = std::fs::read_to_string(dir.join("missing_data.csv")).unwrap();
    assert_eq!(missing.lines().count(), 6);

    ok(&["bench", "--case", s(&case), "--dataset", s(&ds), "--model", s(&model), "--repeats", "5", "--exact-points", "0", "--out", s(dir)]);
    let bench = std::fs::read_to_string(dir.join("bench.csv")).unwrap();
    assert!(bench.contains("batch_median,"));
    assert!(bench.contains("exact_labelling_per_point,\n"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# placement run\ncase = {}\nbudget = 0.1\nagg_count = 2\nout = {}\n",
            s(&fixture("case68.case")),
            s(dir.path())
        ),
    )
    .unwrap();
    ok(&["--config", s(&cfg), "placement", "--budget", "0.2"]);
    let json = std::fs::read_to_string(dir.path().join("placement.json")).unwrap();
    assert!(json.contains("\"budget\": \"0.2\""), "{json}");
    assert!(json.contains("\"aggregation_nodes\": \"2\""));
    let csv = std::fs::read_to_string(dir.path().join("placement.csv")).unwrap();
    assert_eq!(csv.lines().count(), 69);
    // The hub bus carries both the first sensor and the first aggregation slot.
    assert_eq!(csv.lines().nth(1).unwrap(), "0,1,11,0.005025125628140704,1,1,1");
}

#[test]
fn exit_codes() {
    assert_eq!(ssa(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ssa(&["placement"]).status.code(), Some(1));
    assert_eq!(ssa(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.case");
    assert_eq!(ssa(&["placement", "--case", s(&missing)]).status.code(), Some(2));

    let bad = dir.path().join("bad.case");
    std::fs::write(&bad, "BASE_MVA\n100\nBUS\n1 SLACK 0 0 1.0 0.9 1.1\n2 PQ x 0 - 0.9 1.1\n").unwrap();
    let out = ssa(&["placement", "--case", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));

    // Every profile overloads: the draw cap is a data error.
    let smib = std::fs::read_to_string(fixture("smib.case")).unwrap();
    let tight = dir.path().join("tight.case");
    std::fs::write(&tight, smib.replace("1 2 0 0.4 0 0\n1 2", "1 2 0 0.4 0 0.001\n1 2")).unwrap();
    let out = ssa(&["generate", "--case", s(&tight), "--points", "2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // An overloaded base case cannot be solved at all: numerical failure.
    let heavy = dir.path().join("heavy.case");
    std::fs::write(&heavy, smib.replace("1 0.8 0 5", "1 4.9 0 5").replace("0 0.4 0 0", "0 2 0 0")).unwrap();
    let out = ssa(&["generate", "--case", s(&heavy), "--points", "2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
