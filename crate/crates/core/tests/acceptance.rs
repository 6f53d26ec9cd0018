//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::check_pseudo_sentence;
use infostat::context::{build_pseudo_sentence, ContextKind, ContextMode};
use infostat::corpus::{IsLabel, N_LABELS};
use infostat::encoder::gradcheck::{gradient_check, GradCheckOptions, TOLERANCE};
use infostat::encoder::params::layout;
use infostat::encoder::{
    attention_weights, batch_loss, build_examples, forward, init_params, predict_examples, predict_probs,
    train_with_monitor, Example, ModelConfig, StepKey, TrainConfig,
};
use infostat::eval::{exact_p_value, randomization_test, run_cross_validation, score, CrossValConfig, Statistic};
use infostat::rng::SeededRng;
use infostat::synthetic::generate_synthetic;
use infostat::vocab::build_vocab;
use ndarray::Array2;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    ensure(spent < limit, || format!("took {spent:.1?}, limit {limit:?}"))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mode = ContextMode::new(ContextKind::LocalContextOverlap);
    let corpus = generate_synthetic(0, 2, 3, 2).map_err(|e| e.to_string())?;
    let vocab = build_vocab(&corpus, mode, 1);
    let model = ModelConfig {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        dropout_rate: 0.0,
        ..ModelConfig::desk(vocab.len())
    };
    let batch: Vec<Example> = build_examples(&corpus, mode, &vocab, model.max_len)
        .map_err(|e| e.to_string())?
        .into_iter()
        .take(4)
        .map(|i| i.example)
        .collect();
    let params = init_params::<f64>(&model, 0).map_err(|e| e.to_string())?;
    let report = gradient_check(&batch, &params, GradCheckOptions::default()).map_err(|e| e.to_string())?;
    ensure(report.tensors.len() == layout(&model).len(), || "not every tensor was checked".into())?;
    ensure(report.checked == params.numel(), || format!("{} of {} entries", report.checked, params.numel()))?;
    ensure(report.max_relative_error < TOLERANCE, || {
        format!("max relative error {:.3e} in {}", report.max_relative_error, report.worst_tensor)
    })?;
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{} entries, max relative error {:.2e} ({:.1?})",
        report.checked,
        report.max_relative_error,
        start.elapsed()
    ))
}

fn attention_normalization() -> Outcome {
    let mut rows = 0;
    for seed in 0..100 {
        let mut rng = SeededRng::new(seed);
        let (nq, nk, d) = (1 + rng.below(32), 1 + rng.below(32), 1 + rng.below(32));
        let q = Array2::from_shape_fn((nq, d), |_| 3.0 * rng.standard_normal());
        let k = Array2::from_shape_fn((nk, d), |_| 3.0 * rng.standard_normal());
        let mut mask: Vec<u8> = (0..nk).map(|_| u8::from(rng.bernoulli(0.6))).collect();
        mask[rng.below(nk)] = 1;
        let w = attention_weights(q.view(), k.view(), &mask).map_err(|e| e.to_string())?;
        for row in w.rows() {
            let sum: f64 = row.iter().zip(&mask).filter(|(_, &m)| m == 1).map(|(x, _)| x).sum();
            ensure((sum - 1.0).abs() <= 1e-6, || format!("seed {seed}: row sums to {sum}"))?;
            ensure(row.iter().zip(&mask).all(|(x, &m)| m == 1 || *x == 0.0), || {
                format!("seed {seed}: masked key with non-zero weight")
            })?;
            rows += 1;
        }
    }
    Ok(format!("{rows} rows over 100 shapes"))
}

fn padding_inertness() -> Outcome {
    for trial in 0..100u64 {
        let kind = ContextKind::ALL[trial as usize % 3];
        let mode = ContextMode::new(kind);
        let corpus = generate_synthetic(trial, 2, 3, 2).map_err(|e| e.to_string())?;
        let vocab = build_vocab(&corpus, mode, 1);
        let model = ModelConfig {
            max_len: 32,
            ..common::tiny_config(vocab.len())
        };
        let mut params = init_params::<f64>(&model, trial).map_err(|e| e.to_string())?;
        params.scale(10.0);
        let examples: Vec<Example> = build_examples(&corpus, mode, &vocab, model.max_len)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|i| i.example)
            .collect();
        let mut rng = SeededRng::new(trial);
        let mutated: Vec<Example> = examples
            .iter()
            .map(|ex| {
                let mut ex = ex.clone();
                for (id, &m) in ex.input.ids.iter_mut().zip(&ex.input.attention_mask) {
                    if m == 0 {
                        *id = rng.below(vocab.len()) as u32;
                    }
                }
                ex
            })
            .collect();
        for (a, b) in examples.iter().zip(&mutated) {
            let run = |e: &Example| forward(&e.input.ids, &e.input.attention_mask, &e.input.segment_ids, &params, None);
            let (ha, _) = run(a).map_err(|e| e.to_string())?;
            let (hb, _) = run(b).map_err(|e| e.to_string())?;
            let live = a.input.effective_len();
            let same = (0..live).all(|r| ha.row(r).iter().zip(hb.row(r)).all(|(x, y)| x.to_bits() == y.to_bits()));
            ensure(same, || format!("trial {trial}: unmasked hidden state changed"))?;
            let pa = predict_probs(a, &params).map_err(|e| e.to_string())?;
            let pb = predict_probs(b, &params).map_err(|e| e.to_string())?;
            ensure(pa.map(f64::to_bits) == pb.map(f64::to_bits), || format!("trial {trial}: prediction changed"))?;
        }
        for key in [None, Some(StepKey { seed: trial, step: 1 })] {
            let la = batch_loss(&examples, &params, key).map_err(|e| e.to_string())?;
            let lb = batch_loss(&mutated, &params, key).map_err(|e| e.to_string())?;
            ensure(la.to_bits() == lb.to_bits(), || format!("trial {trial}: loss changed"))?;
        }
    }
    Ok("100 trials bit-identical".into())
}

fn overfit_capacity() -> Outcome {
    let start = Instant::now();
    let mode = ContextMode::new(ContextKind::LocalContextOverlap);
    let corpus = generate_synthetic(4, 8, 8, 1).map_err(|e| e.to_string())?;
    ensure(corpus.n_mentions() == 64, || format!("{} mentions", corpus.n_mentions()))?;
    let vocab = build_vocab(&corpus, mode, 1);
    let model = ModelConfig::desk(vocab.len());
    let train = TrainConfig {
        epochs: 300,
        ..TrainConfig::desk()
    };
    let items = build_examples(&corpus, mode, &vocab, model.max_len).map_err(|e| e.to_string())?;
    let data: Vec<Example> = items.iter().map(|i| i.example.clone()).collect();
    let mut reached = None;
    train_with_monitor::<f64>(&data, &model, &train, |log, params| {
        let preds = predict_examples(&items, params).expect("valid examples");
        if preds.iter().all(|p| Some(p.label) == p.gold) {
            reached = Some(log.epoch + 1);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })
    .map_err(|e| e.to_string())?;
    let epochs = reached.ok_or("training accuracy stayed below 1.0 after 300 epochs")?;
    within(Duration::from_secs(300), start)?;
    Ok(format!("accuracy 1.0 after {epochs} epochs ({:.1?})", start.elapsed()))
}

fn old_new_accuracy(preds: &[infostat::encoder::Prediction]) -> f64 {
    let subset: Vec<_> = preds
        .iter()
        .filter(|p| matches!(p.gold, Some(IsLabel::Old | IsLabel::New)))
        .collect();
    subset.iter().filter(|p| Some(p.label) == p.gold).count() as f64 / subset.len() as f64
}

fn context_ablation() -> Outcome {
    let start = Instant::now();
    let corpus = generate_synthetic(1, 100, 20, 1).map_err(|e| e.to_string())?;
    ensure(corpus.n_mentions() >= 2000, || format!("{} mentions", corpus.n_mentions()))?;
    let mut results = BTreeMap::new();
    for kind in ContextKind::ALL {
        let cfg = CrossValConfig {
            mode: ContextMode::new(kind),
            model: ModelConfig {
                n_layers: 2,
                d_model: 32,
                n_heads: 4,
                d_ff: 64,
                max_len: 32,
                vocab_size: 0,
                n_classes: N_LABELS,
                dropout_rate: 0.1,
            },
            train: TrainConfig {
                epochs: 10,
                learning_rate: 2e-3,
                batch_size: 16,
                seed: 1,
                ..TrainConfig::desk()
            },
            k: 10,
            seed: 1,
            min_freq: 1,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let cv = run_cross_validation::<f64>(&corpus, &cfg).map_err(|e| e.to_string())?;
        results.insert(kind.flag_name(), (cv.report.accuracy, old_new_accuracy(&cv.predictions)));
    }
    let (m, c1, c2) = (results["mention-only"], results["context1"], results["context2"]);
    let summary = format!(
        "pooled accuracy mention-only {:.3}, context1 {:.3}, context2 {:.3}; old/new subset {:.3}, {:.3}, {:.3} ({:.0?})",
        m.0,
        c1.0,
        c2.0,
        m.1,
        c1.1,
        c2.1,
        start.elapsed()
    );
    ensure(c2.0 >= c1.0 && c1.0 >= m.0, || format!("ordering violated: {summary}"))?;
    ensure(c2.1 >= c1.1 && c1.1 >= m.1, || format!("old/new ordering violated: {summary}"))?;
    ensure(c2.1 >= 0.95, || format!("context2 below 0.95: {summary}"))?;
    ensure(m.1 <= 0.70, || format!("mention-only above 0.70: {summary}"))?;
    within(Duration::from_secs(30 * 60), start)?;
    Ok(summary)
}

fn pseudo_sentence_invariants() -> Outcome {
    let mut checked = 0;
    for seed in 0..5 {
        let corpus = generate_synthetic(seed, 8, 10, 2).map_err(|e| e.to_string())?;
        for kind in ContextKind::ALL {
            for window in [0, 2] {
                let mode = ContextMode::with_window(kind, window);
                for max_len in [kind.n_reserved() + 1, kind.n_reserved() + 3, 12, 64] {
                    for (doc, m) in corpus.mentions() {
                        let ps = build_pseudo_sentence(m, doc, mode, max_len).map_err(|e| e.to_string())?;
                        check_pseudo_sentence(doc, m, mode, max_len, &ps)?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} pseudo sentences"))
}

fn metrics_oracle() -> Outcome {
    use IsLabel::*;
    let hand = score(&[Old, Old, New], &[Old, New, New]).map_err(|e| e.to_string())?;
    ensure((hand.accuracy - 2.0 / 3.0).abs() < 1e-12, || "hand case accuracy".into())?;
    ensure((hand.per_class.get(Old).f - 2.0 / 3.0).abs() < 1e-12, || "hand case F1(old)".into())?;
    ensure((hand.per_class.get(New).f - 2.0 / 3.0).abs() < 1e-12, || "hand case F1(new)".into())?;
    for seed in 0..1000 {
        let mut rng = SeededRng::new(seed);
        let n = 1 + rng.below(50);
        let gold: Vec<IsLabel> = (0..n).map(|_| IsLabel::ALL[rng.below(N_LABELS)]).collect();
        let pred: Vec<IsLabel> = (0..n).map(|_| IsLabel::ALL[rng.below(N_LABELS)]).collect();
        let r = score(&pred, &gold).map_err(|e| e.to_string())?;
        for g in 0..N_LABELS {
            for p in 0..N_LABELS {
                let count = pred.iter().zip(&gold).filter(|(x, y)| x.index() == p && y.index() == g).count();
                ensure(r.confusion[g][p] == count, || format!("seed {seed}: confusion[{g}][{p}]"))?;
            }
        }
        let correct = pred.iter().zip(&gold).filter(|(x, y)| x == y).count();
        ensure(r.accuracy == correct as f64 / n as f64, || format!("seed {seed}: accuracy"))?;
        for c in IsLabel::ALL {
            let tp = pred.iter().zip(&gold).filter(|&(x, y)| *x == c && *y == c).count() as f64;
            let np = pred.iter().filter(|&&x| x == c).count() as f64;
            let ng = gold.iter().filter(|&&y| y == c).count() as f64;
            let p = if np == 0.0 { 0.0 } else { tp / np };
            let rc = if ng == 0.0 { 0.0 } else { tp / ng };
            let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
            let m = r.per_class.get(c);
            ensure((m.p, m.r, m.f, m.support) == (p, rc, f, ng as usize), || format!("seed {seed}: {c:?}"))?;
        }
    }
    Ok("hand case and 1000 random vectors exact".into())
}

fn randomization_test_oracle() -> Outcome {
    let rounds = 100_000;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = SeededRng::new(seed);
        let n = 1 + rng.below(10);
        let gold: Vec<IsLabel> = (0..n).map(|_| IsLabel::ALL[rng.below(N_LABELS)]).collect();
        let noisy = |rng: &mut SeededRng, keep: f64| -> Vec<IsLabel> {
            gold.iter().map(|&g| if rng.bernoulli(keep) { g } else { IsLabel::ALL[rng.below(N_LABELS)] }).collect()
        };
        let a = noisy(&mut rng, 0.8);
        let b = noisy(&mut rng, 0.4);
        for stat in [Statistic::Accuracy, Statistic::ClassF1(gold[0])] {
            let same = randomization_test(&a, &a, &gold, 1000, seed, stat).map_err(|e| e.to_string())?;
            ensure(same == 1.0, || format!("seed {seed}: identical systems give p = {same}"))?;
            let exact = exact_p_value(&a, &b, &gold, stat).map_err(|e| e.to_string())?;
            let mc = randomization_test(&a, &b, &gold, rounds, seed, stat).map_err(|e| e.to_string())?;
            let se = (exact * (1.0 - exact) / rounds as f64).sqrt();
            let z = if se > 0.0 { (mc - exact).abs() / se } else { 0.0 };
            ensure((mc - exact).abs() <= 3.0 * se + 1.0 / (rounds + 1) as f64, || {
                format!("seed {seed}, n {n}, {stat:?}: Monte Carlo {mc} vs exact {exact}")
            })?;
            worst = worst.max(z);
        }
    }
    Ok(format!("40 comparisons with n <= 10, largest deviation {worst:.2} standard errors"))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable output") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("below root").display().to_string();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus.json");
    let corpus = corpus.to_str().ok_or("non-UTF-8 temp path")?;
    let small = ["--epochs", "2", "--d-model", "16", "--heads", "2", "--d-ff", "32", "--max-len", "24", "--seed", "7"];
    let run = |args: &[&str]| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_infostat"))
            .args(args)
            .env_remove("INFOSTAT_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
        Ok(out.stdout)
    };
    run(&["gen-synthetic", "--seed", "5", "--docs", "8", "--sentences", "4", "--out", corpus])?;

    let mut snapshots = Vec::new();
    for name in ["first", "second"] {
        let dir = tmp.path().join(name);
        let d = |f: &str| dir.join(f).display().to_string();
        let mut stdout = Vec::new();
        stdout.extend(run(&["gen-synthetic", "--seed", "2", "--docs", "3", "--out", &d("gen.json")])?);
        stdout.extend(run(&["build-vocab", "--corpus", corpus, "--out", &d("vocab.txt")])?);
        stdout.extend(run(&[&["train", "--corpus", corpus, "--out", &d("train")][..], &small].concat())?);
        stdout.extend(run(&[
            "predict",
            "--corpus",
            corpus,
            "--checkpoint",
            &d("train/checkpoint"),
            "--vocab",
            &d("train/vocab.txt"),
            "--out",
            &d("predictions.jsonl"),
        ])?);
        stdout.extend(run(&[&["crossval", "--corpus", corpus, "--k", "4", "--jobs", "3", "--out", &d("cv")][..], &small].concat())?);
        stdout.extend(run(&[
            "sigtest",
            "--a",
            &d("predictions.jsonl"),
            "--b",
            &d("cv/predictions.jsonl"),
            "--rounds",
            "2000",
            "--seed",
            "1",
        ])?);
        stdout.extend(run(&["grad-check", "--layers", "1", "--d-model", "8", "--heads", "2", "--d-ff", "8", "--entries-per-tensor", "4", "--out", &d("grad.json")])?);
        stdout.extend(run(&["dump-pseudo", "--corpus", corpus, "--out", &d("pseudo.jsonl")])?);
        snapshots.push((tree(&dir), stdout));
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    ensure(a.0.keys().eq(b.0.keys()), || "different artifact sets".into())?;
    for (path, bytes) in &a.0 {
        ensure(bytes == &b.0[path], || format!("{path} differs between reruns"))?;
    }
    ensure(a.1 == b.1, || "stdout differs between reruns".into())?;

    let serial = tmp.path().join("serial");
    let s = serial.display().to_string();
    run(&[&["crossval", "--corpus", corpus, "--k", "4", "--jobs", "1", "--out", &s][..], &small].concat())?;
    let mut one = tree(&serial);
    let mut three = tree(&tmp.path().join("first").join("cv"));
    one.remove("config.json");
    three.remove("config.json");
    ensure(one == three, || "crossval artifacts depend on --jobs".into())?;
    Ok(format!("{} artifacts byte-identical across reruns and --jobs 1/3", a.0.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "attention normalization", attention_normalization),
        (3, "padding inertness", padding_inertness),
        (4, "overfit capacity", overfit_capacity),
        (5, "context ablation", context_ablation),
        (6, "pseudo-sentence invariants", pseudo_sentence_invariants),
        (7, "metrics oracle", metrics_oracle),
        (8, "randomization test", randomization_test_oracle),
        (9, "determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
