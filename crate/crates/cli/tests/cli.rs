use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gadscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gadscan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FLOWS: &str = r#"{"flow_id": "a", "packets": [{"size": 100, "dir": "cs"}, {"size": 40, "dir": "sc"}]}
{"flow_id": "b", "packets": [{"size": 60, "dir": "sc"}]}
{"flow_id": "c", "packets": []}
"#;

#[test]
fn featurize_writes_two_n_columns_plus_id() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flows.jsonl");
    let out = dir.path().join("flows.csv");
    fs::write(&input, FLOWS).unwrap();
    let o = gadscan(&["featurize", "--input", p(&input), "--output", p(&out), "--packets", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "p1,p2,p3,p4,p5,p6,flow_id");
    assert_eq!(lines[2], "0,60,0,0,0,0,b");
    assert!(dir.path().join("flows.csv.manifest.json").exists());
}

#[test]
fn featurize_empty_input_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    let out = dir.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let o = gadscan(&["featurize", "--input", p(&input), "--output", p(&out), "--packets", "2"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap().trim(), "p1,p2,p3,p4,flow_id");
}

#[test]
fn strict_featurize_rejects_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    fs::write(&input, format!("{FLOWS}{{\"flow_id\": \"d\", \"packets\": [{{\"size\": -3, \"dir\": \"cs\"}}]}}\n")).unwrap();
    let out = dir.path().join("bad.csv");
    let lenient = gadscan(&["featurize", "--input", p(&input), "--output", p(&out)]);
    assert!(lenient.status.success());
    let strict = gadscan(&["featurize", "--input", p(&input), "--output", p(&out), "--strict"]);
    assert_eq!(strict.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("line 4"));
}

fn write_normals(path: &Path, n: usize, dim: usize, seed: u64) {
    // Small LCG so the fixture has no dependency on the library.
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut text: String = (0..dim).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for _ in 0..n {
        let row: Vec<String> = (0..dim)
            .map(|_| {
                let u: f64 = (0..12).map(|_| next()).sum::<f64>() - 6.0;
                format!("{u:.6}")
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn train(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let input = dir.join("train.csv");
    if !input.exists() {
        write_normals(&input, 200, 3, 1);
    }
    let model = dir.join(name);
    let o = gadscan(&[
        "train", "--input", p(&input), "--output", p(&model), "--max-components", "2", "--mi-samples", "20000", "--seed", seed,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    model
}

#[test]
fn training_is_byte_identical_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a.json", "5");
    let b = train(dir.path(), "b.json", "5");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let model: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(model["univariate"].as_array().unwrap().len(), 3);
    assert_eq!(model["bivariate"].as_array().unwrap().len(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["command"], "train");
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["model_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn nan_cell_is_named_and_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nan.csv");
    let mut text = "a,b\n".to_string();
    for i in 0..30 {
        text.push_str(&format!("{i},{}\n", if i == 6 { "NaN".into() } else { i.to_string() }));
    }
    fs::write(&input, text).unwrap();
    let o = gadscan(&["train", "--input", p(&input), "--output", p(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 7") && err.contains("column b"), "{err}");
}

fn synth(dir: &Path) {
    let o = gadscan(&["synth", "--out-dir", p(dir), "--batch-size", "600", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_detect_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let train_csv = d.join("train.csv");
    let test_csv = d.join("test.csv");
    let model = d.join("model.json");
    let o = gadscan(&[
        "train", "--input", p(&train_csv), "--output", p(&model), "--max-components", "2", "--mi-samples", "20000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report = d.join("proposed.json");
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["detect", "--model", p(&model), "--input", p(&test_csv), "--output", p(out), "--k-max", "2", "--beam-width", "20"];
        args.extend_from_slice(extra);
        gadscan(&args)
    };
    assert!(run(&report, &[]).status.success());
    let again = d.join("again.json");
    assert!(run(&again, &[]).status.success());
    assert_eq!(fs::read(&report).unwrap(), fs::read(&again).unwrap());
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert!(!rep["clusters"].as_array().unwrap().is_empty());

    let no_train = run(&d.join("gmm.json"), &["--method", "gmm"]);
    assert_eq!(no_train.status.code(), Some(2));
    let gmm = d.join("gmm.json");
    assert!(run(&gmm, &["--method", "gmm", "--train", p(&train_csv)]).status.success());
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(&gmm).unwrap()).unwrap();
    assert!(rep["clusters"].as_array().unwrap().is_empty());
    assert_eq!(rep["ranked_samples"].as_array().unwrap().len(), rep["ranked_ids"].as_array().unwrap().len());

    let table = d.join("eval.csv");
    let o = gadscan(&["eval", "--report", p(&report), p(&gmm), "--labels", p(&test_csv), "--output", p(&table)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 3);

    // Replaying the detect manifest reproduces the report.
    let manifest = d.join("proposed.json.manifest.json");
    fs::remove_file(&report).unwrap();
    assert!(gadscan(&["replay", p(&manifest)]).status.success());
    assert_eq!(fs::read(&report).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn default_spec_has_design_proportions() {
    let dir = tempfile::tempdir().unwrap();
    let o = gadscan(&["synth", "--out-dir", p(dir.path())]);
    assert!(o.status.success());
    let count = |f: &str| fs::read_to_string(dir.path().join(f)).unwrap().lines().count() - 1;
    let test = fs::read_to_string(dir.path().join("test.csv")).unwrap();
    let anomalies = test.lines().skip(1).filter(|l| !l.ends_with(",normal")).count();
    let (train, n_test) = (count("train.csv"), count("test.csv"));
    let normals = n_test - anomalies;
    assert!(((train as f64) / (train + normals) as f64 - 0.2).abs() < 0.001, "{train} {normals}");
    assert!(((anomalies as f64) / n_test as f64 - 0.05).abs() < 0.001, "{anomalies}/{n_test}");
}

#[test]
fn eval_perfect_and_mismatched_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("labels.csv"), "x,id,label\n0,a,normal\n1,b,bad\n2,c,normal\n").unwrap();
    let perfect = r#"{"method":"manual","clusters":[],"ranked_samples":[1,0,2],"ranked_ids":["b","a","c"]}"#;
    fs::write(d.join("perfect.json"), perfect).unwrap();
    let out = d.join("eval.csv");
    let o = gadscan(&["eval", "--report", p(&d.join("perfect.json")), "--labels", p(&d.join("labels.csv")), "--output", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let row = fs::read_to_string(&out).unwrap().lines().nth(1).unwrap().to_string();
    assert_eq!(row.split(',').nth(2), Some("1"));

    let wrong = r#"{"method":"manual","clusters":[],"ranked_samples":[1,0,2],"ranked_ids":["b","a","zzz"]}"#;
    fs::write(d.join("wrong.json"), wrong).unwrap();
    let o = gadscan(&["eval", "--report", p(&d.join("wrong.json")), "--labels", p(&d.join("labels.csv")), "--output", p(&out)]);
    assert!(!o.status.success());
}

#[test]
fn dimension_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "m.json", "0");
    let test = dir.path().join("wide.csv");
    write_normals(&test, 20, 5, 2);
    let o = gadscan(&["detect", "--model", p(&model), "--input", p(&test), "--output", p(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(gadscan(&["detect", "--method", "bogus"]).status.code(), Some(2));
    assert_eq!(gadscan(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn tiny_sweep_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"dim": 3, "informative": [0, 2], "batch_size": 500}"#).unwrap();
    let out = dir.path().join("sweep");
    let o = gadscan(&[
        "sweep", "--spec", p(&spec), "--out-dir", p(&out), "--methods", "independence", "--k-max", "1,2", "--seeds", "2",
        "--beam-width", "10", "--max-components", "2", "--fast",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sweep.csv", "sweep.json", "auc_vs_kmax.dat", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["methods"], serde_json::json!(["independence"]));
}
