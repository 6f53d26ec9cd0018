use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use super::config::{Precision, RunArgs, RunConfig, SEED_ENV};
use super::CliError;
use crate::context::{build_pseudo_sentence, PseudoSentenceRecord};
use crate::corpus::{corpus_stats, load_corpus, save_corpus, Corpus, IsLabel};
use crate::encoder::gradcheck::{gradient_check, GradCheckOptions};
use crate::encoder::{
    build_examples, init_params, load_checkpoint, predict, save_checkpoint, train_with_monitor, Parameters,
    TrainError,
};
use crate::eval::{
    read_predictions, run_cross_validation, write_predictions, CrossValConfig, CrossValError, CrossValResult,
    Statistic,
};
use crate::scalar::Real;
use crate::synthetic::generate_synthetic;
use crate::vocab::{self, Vocab};

fn sibling_config(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => ensure_dir(dir),
        _ => Ok(()),
    }
}

fn seed_or_env(seed: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

fn read_corpus(path: &Path) -> anyhow::Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn resolve(run: &RunArgs, corpus: Option<&Path>) -> anyhow::Result<RunConfig> {
    let mut cfg = run.resolve()?;
    if let Some(c) = corpus {
        cfg.corpus = Some(c.to_path_buf());
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct SyntheticSnapshot {
    command: &'static str,
    seed: u64,
    docs: usize,
    sentences: usize,
    mentions_per_sentence: usize,
}

pub fn gen_synthetic(
    seed: Option<u64>,
    docs: usize,
    sentences: usize,
    mentions_per_sentence: usize,
    out: &Path,
) -> Result<(), CliError> {
    let seed = seed_or_env(seed)?;
    let corpus = generate_synthetic(seed, docs, sentences, mentions_per_sentence).map_err(anyhow::Error::from)?;
    ensure_parent(out)?;
    save_corpus(&corpus, out).with_context(|| format!("writing {}", out.display()))?;
    write_json(
        &SyntheticSnapshot {
            command: "gen-synthetic",
            seed,
            docs,
            sentences,
            mentions_per_sentence,
        },
        &sibling_config(out),
    )?;
    let stats = corpus_stats(&corpus).map_err(anyhow::Error::from)?;
    println!("{stats}");
    Ok(())
}

pub fn build_vocab(corpus_path: &Path, out: &Path, run: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve(run, Some(corpus_path))?;
    let corpus = read_corpus(corpus_path)?;
    let vocab = vocab::build_vocab(&corpus, cfg.context_mode(), cfg.min_freq);
    ensure_parent(out)?;
    vocab.save(out).with_context(|| format!("writing {}", out.display()))?;
    cfg.write_snapshot(sibling_config(out))?;
    println!("vocabulary: {} tokens, fingerprint {}", vocab.len(), vocab.fingerprint());
    Ok(())
}

fn train_typed<T: Real>(cfg: &RunConfig, corpus: &Corpus, vocab: &Vocab, out: &Path) -> Result<(), CliError> {
    let model = cfg.model_for_vocab(vocab.len());
    let items = build_examples(corpus, cfg.context_mode(), vocab, model.max_len).map_err(anyhow::Error::from)?;
    let data: Vec<_> = items.into_iter().map(|i| i.example).collect();
    let result = train_with_monitor::<T>(&data, &model, &cfg.train, |e, _| {
        eprintln!("epoch {:>4}  loss {:.6}", e.epoch + 1, e.mean_loss);
        ControlFlow::Continue(())
    });
    ensure_dir(out)?;
    vocab
        .save(out.join("vocab.txt"))
        .context("writing vocabulary")?;
    cfg.write_snapshot(out.join("config.json"))?;
    match result {
        Ok(trained) => {
            save_checkpoint(&trained.params, Some(&vocab.fingerprint()), out.join("checkpoint"))
                .context("writing checkpoint")?;
            write_json(&trained.log, &out.join("log.json"))?;
            Ok(())
        }
        Err(TrainError::Diverged {
            epoch,
            step,
            last_finite,
        }) => {
            let dir = out.join("last_finite");
            save_checkpoint(&last_finite, Some(&vocab.fingerprint()), &dir).context("writing checkpoint")?;
            Err(CliError::Numeric(anyhow!(
                "training diverged at epoch {epoch}, step {step}; last finite parameters in {}",
                dir.display()
            )))
        }
        Err(e) => Err(anyhow::Error::from(e).into()),
    }
}

pub fn train(corpus_path: &Path, vocab_path: Option<&Path>, out: &Path, run: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve(run, Some(corpus_path))?;
    let corpus = read_corpus(corpus_path)?;
    let vocab = match vocab_path {
        Some(p) => Vocab::load(p).with_context(|| format!("loading vocabulary {}", p.display()))?,
        None => vocab::build_vocab(&corpus, cfg.context_mode(), cfg.min_freq),
    };
    match cfg.precision {
        Precision::F64 => train_typed::<f64>(&cfg, &corpus, &vocab, out),
        Precision::F32 => train_typed::<f32>(&cfg, &corpus, &vocab, out),
    }
}

fn accuracy_line(preds: &[crate::encoder::Prediction]) -> Option<String> {
    let labeled: Vec<_> = preds.iter().filter_map(|p| p.gold.map(|g| (p.label, g))).collect();
    if labeled.is_empty() {
        return None;
    }
    let correct = labeled.iter().filter(|(p, g)| p == g).count();
    Some(format!(
        "accuracy {:.4} ({correct}/{})",
        correct as f64 / labeled.len() as f64,
        labeled.len()
    ))
}

pub fn predict_cmd(
    corpus_path: &Path,
    checkpoint: &Path,
    vocab_path: &Path,
    out: &Path,
    run: &RunArgs,
) -> Result<(), CliError> {
    let mut cfg = resolve(run, Some(corpus_path))?;
    let corpus = read_corpus(corpus_path)?;
    let vocab = Vocab::load(vocab_path).with_context(|| format!("loading vocabulary {}", vocab_path.display()))?;
    let ckpt = load_checkpoint(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let fingerprint = vocab.fingerprint();
    if let Some(expected) = &ckpt.vocab_fingerprint {
        if *expected != fingerprint {
            return Err(anyhow!(
                "vocab mismatch: checkpoint was trained with vocabulary {expected}, {} is {fingerprint}",
                vocab_path.display()
            )
            .into());
        }
    }
    cfg.model = *ckpt.config();
    let preds = match cfg.precision {
        Precision::F64 => predict(&corpus, cfg.context_mode(), &vocab, &ckpt.params),
        Precision::F32 => predict(&corpus, cfg.context_mode(), &vocab, &ckpt.params.cast::<f32>()),
    }
    .map_err(anyhow::Error::from)?;
    ensure_parent(out)?;
    write_predictions(&preds, out).with_context(|| format!("writing {}", out.display()))?;
    cfg.write_snapshot(sibling_config(out))?;
    if let Some(line) = accuracy_line(&preds) {
        println!("{line}");
    }
    Ok(())
}

fn write_crossval<T: Real>(result: &CrossValResult<T>, out: &Path) -> anyhow::Result<()> {
    fs::write(out.join("report.json"), result.report.to_json()).context("writing report")?;
    write_predictions(&result.predictions, out.join("predictions.jsonl"))?;
    write_json(&result.split, &out.join("folds.json"))?;
    for f in &result.folds {
        let dir = out.join("folds").join(format!("fold{:02}", f.fold));
        ensure_dir(&dir)?;
        write_predictions(&f.predictions, dir.join("predictions.jsonl"))?;
        f.vocab.save(dir.join("vocab.txt"))?;
        write_json(&f.log, &dir.join("log.json"))?;
        save_checkpoint(&f.params, Some(&f.vocab.fingerprint()), dir.join("checkpoint"))?;
    }
    Ok(())
}

fn crossval_typed<T: Real>(cfg: &RunConfig, corpus: &Corpus, out: &Path) -> Result<(), CliError> {
    let cv = CrossValConfig {
        mode: cfg.context_mode(),
        model: cfg.model,
        train: cfg.train,
        k: cfg.k,
        seed: cfg.seed,
        min_freq: cfg.min_freq,
        jobs: cfg.jobs,
    };
    let result = run_cross_validation::<T>(corpus, &cv).map_err(|e| match e {
        CrossValError::Diverged { .. } => CliError::Numeric(e.into()),
        e => CliError::Input(e.into()),
    })?;
    ensure_dir(out)?;
    write_crossval(&result, out)?;
    cfg.write_snapshot(out.join("config.json"))?;
    for f in &result.folds {
        eprintln!(
            "fold {:>2}: {} mentions, accuracy {:.4}",
            f.fold, f.report.n, f.report.accuracy
        );
    }
    println!(
        "pooled accuracy {:.4} over {} mentions ({} folds)",
        result.report.accuracy, result.report.n, cfg.k
    );
    Ok(())
}

pub fn crossval(
    corpus_path: &Path,
    out: &Path,
    k: Option<usize>,
    jobs: Option<usize>,
    run: &RunArgs,
) -> Result<(), CliError> {
    let mut cfg = resolve(run, Some(corpus_path))?;
    cfg.k = k.unwrap_or(cfg.k);
    cfg.jobs = jobs.unwrap_or(cfg.jobs).max(1);
    let corpus = read_corpus(corpus_path)?;
    match cfg.precision {
        Precision::F64 => crossval_typed::<f64>(&cfg, &corpus, out),
        Precision::F32 => crossval_typed::<f32>(&cfg, &corpus, out),
    }
}

pub fn grad_check(
    corpus_path: Option<&Path>,
    entries_per_tensor: Option<usize>,
    batch: usize,
    out: Option<&Path>,
    run: &RunArgs,
) -> Result<(), CliError> {
    let cfg = resolve(run, corpus_path)?;
    if batch == 0 {
        return Err(anyhow!("batch must be >= 1").into());
    }
    let corpus = match corpus_path {
        Some(p) => read_corpus(p)?,
        None => generate_synthetic(cfg.seed, 2, 3, 2).map_err(anyhow::Error::from)?,
    };
    let vocab = vocab::build_vocab(&corpus, cfg.context_mode(), cfg.min_freq);
    let model = cfg.model_for_vocab(vocab.len());
    let items = build_examples(&corpus, cfg.context_mode(), &vocab, model.max_len).map_err(anyhow::Error::from)?;
    let data: Vec<_> = items.into_iter().take(batch).map(|i| i.example).collect();
    if data.is_empty() {
        return Err(anyhow!("corpus has no mentions").into());
    }
    let params: Parameters<f64> = init_params(&model, cfg.seed).map_err(anyhow::Error::from)?;
    let options = GradCheckOptions {
        max_entries_per_tensor: entries_per_tensor,
        seed: cfg.seed,
        ..GradCheckOptions::default()
    };
    let report = gradient_check(&data, &params, options).map_err(anyhow::Error::from)?;
    if let Some(path) = out {
        ensure_parent(path)?;
        write_json(&report, path)?;
        cfg.write_snapshot(sibling_config(path))?;
    }
    println!(
        "checked {} entries: max relative error {:.3e} ({}), max absolute error {:.3e}",
        report.checked, report.max_relative_error, report.worst_tensor, report.max_abs_error
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numeric(anyhow!(
            "gradient check failed: max relative error {:.3e} >= {:.0e}",
            report.max_relative_error,
            crate::encoder::gradcheck::TOLERANCE
        )))
    }
}

pub fn sigtest(a: &Path, b: &Path, rounds: usize, seed: Option<u64>, statistic: Statistic) -> Result<(), CliError> {
    let seed = seed_or_env(seed)?;
    let ra = read_predictions(a).with_context(|| format!("reading {}", a.display()))?;
    let rb = read_predictions(b).with_context(|| format!("reading {}", b.display()))?;
    if ra.len() != rb.len() {
        return Err(anyhow!("{} has {} predictions, {} has {}", a.display(), ra.len(), b.display(), rb.len()).into());
    }
    let mut gold = Vec::with_capacity(ra.len());
    for (x, y) in ra.iter().zip(&rb) {
        if (&x.document_id, &x.mention_id) != (&y.document_id, &y.mention_id) {
            return Err(anyhow!(
                "prediction files disagree on mention order: {}/{} vs {}/{}",
                x.document_id,
                x.mention_id,
                y.document_id,
                y.mention_id
            )
            .into());
        }
        match (x.gold, y.gold) {
            (Some(g), Some(h)) if g == h => gold.push(g),
            _ => return Err(anyhow!("missing or conflicting gold label for mention {}", x.mention_id).into()),
        }
    }
    let pa: Vec<IsLabel> = ra.iter().map(|r| r.pred).collect();
    let pb: Vec<IsLabel> = rb.iter().map(|r| r.pred).collect();
    let p = crate::eval::randomization_test(&pa, &pb, &gold, rounds, seed, statistic).map_err(anyhow::Error::from)?;
    println!("p-value: {p}");
    Ok(())
}

pub fn dump_pseudo(corpus_path: &Path, out: &Path, run: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve(run, Some(corpus_path))?;
    let corpus = read_corpus(corpus_path)?;
    let mut text = String::new();
    for (doc, m) in corpus.mentions() {
        let ps = build_pseudo_sentence(m, doc, cfg.context_mode(), cfg.model.max_len).map_err(anyhow::Error::from)?;
        text.push_str(&serde_json::to_string(&PseudoSentenceRecord::new(&m.id, &ps)).map_err(anyhow::Error::from)?);
        text.push('\n');
    }
    ensure_parent(out)?;
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    cfg.write_snapshot(sibling_config(out))?;
    Ok(())
}
