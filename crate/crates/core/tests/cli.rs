use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: [&str; 10] = ["--epochs", "2", "--d-model", "16", "--heads", "2", "--d-ff", "32", "--max-len", "24"];

fn infostat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infostat"))
        .args(args)
        .env_remove("INFOSTAT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = infostat(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path to contents of every file below `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn corpus(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.json");
    ok(&["gen-synthetic", "--seed", "3", "--docs", "6", "--sentences", "4", "--out", s(&path)]);
    path
}

#[test]
fn every_command_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let corpus = s(&corpus);
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        fs::create_dir_all(&out).unwrap();
        let o = |name: &str| out.join(name).to_str().unwrap().to_owned();

        let gen = ok(&["gen-synthetic", "--seed", "9", "--docs", "3", "--sentences", "3", "--out", &o("gen.json")]);
        ok(&["build-vocab", "--corpus", corpus, "--out", &o("vocab.txt")]);
        let train_out = o("train");
        let mut train = vec!["train", "--corpus", corpus, "--out", &train_out, "--seed", "4"];
        train.extend(SMALL);
        ok(&train);
        let ckpt = format!("{train_out}/checkpoint");
        let vocab = format!("{train_out}/vocab.txt");
        let preds = o("preds.jsonl");
        ok(&["predict", "--corpus", corpus, "--checkpoint", &ckpt, "--vocab", &vocab, "--out", &preds]);
        let mut cv = vec!["crossval", "--corpus", corpus, "--k", "3", "--jobs", "2", "--seed", "1", "--out"];
        let cv_out = o("cv");
        cv.push(&cv_out);
        cv.extend(SMALL);
        ok(&cv);
        let grad = o("grad.json");
        ok(&["grad-check", "--layers", "1", "--d-model", "8", "--heads", "2", "--d-ff", "8", "--entries-per-tensor", "4", "--out", &grad]);
        let sig = ok(&["sigtest", "--a", &preds, "--b", &format!("{cv_out}/predictions.jsonl"), "--rounds", "500", "--seed", "2"]);
        ok(&["dump-pseudo", "--corpus", corpus, "--out", &o("pseudo.jsonl")]);
        runs.push((tree(&out), gen.stdout, sig.stdout));
    }
    let (a, b) = (&runs[0], &runs[1]);
    assert_eq!(a.0.keys().collect::<Vec<_>>(), b.0.keys().collect::<Vec<_>>());
    for (path, bytes) in &a.0 {
        assert!(bytes == &b.0[path], "{} differs between reruns", path.display());
    }
    assert!(a.0.len() > 20);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn crossval_artifacts_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let mut trees = Vec::new();
    for jobs in ["1", "2", "4"] {
        let out = tmp.path().join(format!("cv{jobs}"));
        let mut args = vec!["crossval", "--corpus", s(&corpus), "--k", "3", "--jobs", jobs, "--out", s(&out)];
        args.extend(SMALL);
        ok(&args);
        let mut t = tree(&out);
        t.remove(Path::new("config.json"));
        trees.push(t);
    }
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);
    assert!(trees[0].contains_key(Path::new("report.json")));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    ok(&["gen-synthetic", "--seed", "17", "--docs", "2", "--out", s(&a)]);
    let status = Command::new(env!("CARGO_BIN_EXE_infostat"))
        .args(["gen-synthetic", "--docs", "2", "--out", s(&b)])
        .env("INFOSTAT_SEED", "17")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn exit_codes_separate_input_and_numeric_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let code = |args: &[&str]| infostat(args).status.code();

    assert_eq!(code(&["bogus"]), Some(1));
    assert_eq!(code(&["train", "--corpus", "missing.json", "--out", s(&tmp.path().join("x"))]), Some(1));
    assert_eq!(code(&["train", "--corpus", s(&corpus), "--heads", "5", "--out", s(&tmp.path().join("x"))]), Some(1));

    let run = tmp.path().join("run");
    let mut args = vec!["train", "--corpus", s(&corpus), "--out", s(&run)];
    args.extend(SMALL);
    ok(&args);
    let other = tmp.path().join("other.txt");
    fs::write(&other, "[PAD]\n[UNK]\n[IS]\n[DELIM]\n[STR+]\n[STR-]\n[HEAD+]\n[HEAD-]\nzebra\n").unwrap();
    let ckpt = run.join("checkpoint");
    let out = infostat(&["predict", "--corpus", s(&corpus), "--checkpoint", s(&ckpt), "--vocab", s(&other), "--out", s(&tmp.path().join("p.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocab mismatch"));

    let diverge = tmp.path().join("diverge");
    let mut args = vec!["train", "--corpus", s(&corpus), "--lr", "1e300", "--out", s(&diverge)];
    args.extend(SMALL);
    let out = infostat(&args);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(diverge.join("last_finite").join("manifest.json").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"train":{"epoch":3}}"#).unwrap();
    let out = infostat(&["build-vocab", "--corpus", s(&corpus), "--config", s(&cfg), "--out", s(&tmp.path().join("v.txt"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.epoch"));
}
