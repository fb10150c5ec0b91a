use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn relinfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relinfill")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = relinfill(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn verbalize_prints_expected_words() {
    assert_eq!(ok(&["verbalize", "--label", "org:founded_by"]).trim(), "founded by");
    let table = ok(&["verbalize", "--all"]);
    assert_eq!(table.lines().count(), 42);
}

#[test]
fn sampling_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth");
    ok(&["synth", "--out", p(&synth)]);
    let corpus = synth.join("corpus.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["sample", "--corpus", p(&corpus), "--k", "8", "--seed", "42", "--out", p(out)]);
    }
    for name in ["train.json", "dev.json", "test.json", "schema.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn synth_train_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(
        &cfg,
        r#"{"model": {"d": 16, "layers": 1, "heads": 2, "ffn": 32}, "synth": {"num_relations": 4, "instances_per_relation": 20}, "kshot": {"k": 4}}"#,
    )
    .unwrap();
    let (data, model, eval) = (dir.path().join("data"), dir.path().join("model"), dir.path().join("eval"));
    ok(&["synth", "--config", p(&cfg), "--out", p(&data)]);
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--epochs", "2", "--out", p(&model)]);
    for name in ["checkpoint.json", "vocab.txt", "compat.json", "train_stats.json", "manifest.json"] {
        assert!(model.join(name).exists(), "{name}");
    }
    ok(&["eval", "--config", p(&cfg), "--data", p(&data), "--model", p(&model), "--out", p(&eval)]);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("metrics.json")).unwrap()).unwrap();
    let f1 = metrics["mean"]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    let lines = fs::read_to_string(eval.join("predictions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), fs::read_to_string(data.join("test.json")).unwrap().matches("\"relation\"").count());
    let report = ok(&["report", p(&eval.join("metrics.json")), "--out", p(&dir.path().join("report"))]);
    assert!(report.starts_with("run,seed,precision,recall,f1"), "{report}");
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"model": {"depth": 2}}"#).unwrap();
    let out = relinfill(&["synth", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model") && err.contains("depth"), "{err}");

    fs::write(&cfg, r#"{"model": {"d": 30}}"#).unwrap();
    let out = relinfill(&["synth", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.d"));
}
