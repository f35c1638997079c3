use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "corpora": [
    {"lang": "be", "n_train": 4, "n_dev": 3, "n_test": 3, "mean_length": 6},
    {"lang": "uk", "n_train": 9, "n_dev": 3, "n_test": 3, "mean_length": 6}
  ],
  "merged": {"slavic": ["be", "uk"]},
  "grids": {"k": [4], "lambda": [0.5], "temperature": [10.0]}
}"#;

fn knnmt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knnmt"))
        .current_dir(dir)
        .env_remove("KNNMT_OUT")
        .args(["--config", "run.json", "--out", "out"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = knnmt(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn count(info: &str) -> u64 {
    serde_json::from_str::<serde_json::Value>(info).unwrap()["count"].as_u64().unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    ok(dir.path(), &["synth-gen"]);
    ok(dir.path(), &["build", "--lang", "be"]);
    ok(dir.path(), &["build", "--lang", "uk"]);
    dir
}

#[test]
fn merged_store_counts_add_up() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["merge", "out/stores/be.kds", "out/stores/uk.kds", "-o", "stores/ab.kds"]);
    let (a, b, ab) = (
        count(&ok(d, &["info", "stores/be.kds"])),
        count(&ok(d, &["info", "stores/uk.kds"])),
        count(&ok(d, &["info", "stores/ab.kds"])),
    );
    assert!(a > 0 && b > 0);
    assert_eq!(ab, a + b);
    ok(d, &["merge", "--group", "slavic"]);
    assert_eq!(count(&ok(d, &["info", "stores/slavic.kds"])), ab);
}

#[test]
fn query_commands_write_artifacts() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["tune", "--lang", "be", "--store", "stores/uk.kds"]);
    ok(d, &["eval", "--lang", "be", "--store", "stores/uk.kds", "--params", "tune/be.uk.best.json"]);
    ok(d, &["decode", "--lang", "be", "--store", "stores/uk.kds", "--params", "tune/be.uk.best.json"]);
    let out = d.join("out");
    assert!(out.join("tune/be.uk.grid.csv").exists());
    assert!(fs::read_dir(&out).unwrap().count() >= 4);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bin = env!("CARGO_BIN_EXE_knnmt");
    let run = |args: &[&str]| Command::new(bin).current_dir(d).args(args).output().unwrap();
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--out", "o", "synth-gen"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["info"])), 1);
}

#[test]
fn tampered_store_exits_two() {
    let dir = workspace();
    let d = dir.path();
    let meta = d.join("out/stores/be.meta.json");
    let text = fs::read_to_string(&meta).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let hash = v["sha256"].as_str().unwrap();
    let flipped = if hash.starts_with('0') { "1" } else { "0" };
    fs::write(&meta, text.replacen(hash, &format!("{flipped}{}", &hash[1..]), 1)).unwrap();
    assert_eq!(code(&knnmt(d, &["info", "stores/be.kds"])), 2);
}

#[test]
fn corrupt_store_exits_two() {
    let dir = workspace();
    let d = dir.path();
    let p = d.join("out/stores/uk.kds");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&knnmt(d, &["info", "stores/uk.kds"])), 2);
    assert_eq!(code(&knnmt(d, &["info", "stores/missing.kds"])), 2);
}

#[test]
fn corpus_from_another_world_exits_two() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(code(&knnmt(d, &["--seed", "99", "build", "--lang", "be"])), 2);
    let p = d.join("out/corpora/uk.train.jsonl");
    let mut text = fs::read_to_string(&p).unwrap();
    text.push('\n');
    fs::write(&p, text).unwrap();
    assert_eq!(code(&knnmt(d, &["build", "--lang", "uk"])), 2);
}
