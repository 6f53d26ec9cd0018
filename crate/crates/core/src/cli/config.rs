//! Run configuration: defaults, preset, JSON config file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::context::{ContextKind, ContextMode};
use crate::encoder::{ModelConfig, TrainConfig};

pub const SEED_ENV: &str = "INFOSTAT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Fully resolved settings of one command. `model.vocab_size` is 0 until a
/// vocabulary is known; cross-validation sets it per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub mode: ContextKind,
    pub prev_sentence_window: usize,
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub k: usize,
    pub seed: u64,
    pub min_freq: usize,
    pub jobs: usize,
    pub precision: Precision,
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Desk => (ModelConfig::desk(0), TrainConfig::desk()),
            Preset::Paper => (ModelConfig::paper(0), TrainConfig::paper()),
        };
        Self {
            corpus: None,
            mode: ContextKind::LocalContextOverlap,
            prev_sentence_window: 0,
            preset,
            model,
            train,
            k: 10,
            seed: 0,
            min_freq: 1,
            jobs: 1,
            precision: Precision::F64,
        }
    }

    pub fn context_mode(&self) -> ContextMode {
        ContextMode::with_window(self.mode, self.prev_sentence_window)
    }

    pub fn model_for_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            ..self.model
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn write_snapshot(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }
}

/// Flags shared by every command that trains or encodes.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mention-only, context1 or context2.
    #[arg(long)]
    pub mode: Option<ContextKind>,
    /// Extra preceding sentences in the context part.
    #[arg(long)]
    pub window: Option<usize>,
    /// Large preset (12 layers, 768 units, 12 heads, 128 tokens, 3 epochs at 5e-5).
    #[arg(long)]
    pub paper_scale: bool,
    /// Seed of initialization, dropout, shuffling and folds. Falls back to INFOSTAT_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

fn overlay(base: &mut Value, patch: Value, path: &str) -> anyhow::Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (key, v) in p {
                let here = format!("{path}{key}");
                match b.get_mut(&key) {
                    Some(slot) if slot.is_object() => overlay(slot, v, &format!("{here}."))?,
                    Some(slot) => *slot = v,
                    None => bail!("unknown config key {here:?}"),
                }
            }
            Ok(())
        }
        (_, _) => bail!("config {path:?} must be a JSON object"),
    }
}

fn seed_from_env() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let file: Option<Value> = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                Some(serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?)
            }
            None => None,
        };
        let file_preset = match file.as_ref().and_then(|f| f.get("preset")) {
            Some(v) => Some(serde_json::from_value::<Preset>(v.clone()).context("config key \"preset\"")?),
            None => None,
        };
        let preset = if self.paper_scale {
            Preset::Paper
        } else {
            file_preset.unwrap_or(Preset::Desk)
        };
        let file_seed = file.as_ref().and_then(|f| f.get("seed")).is_some();

        let mut cfg = RunConfig::for_preset(preset);
        if let Some(patch) = file {
            let mut base = serde_json::to_value(&cfg)?;
            overlay(&mut base, patch, "")?;
            cfg = serde_json::from_value(base).context("config file")?;
            cfg.preset = preset;
        }

        if let Some(seed) = self.seed {
            cfg.seed = seed;
        } else if !file_seed {
            if let Some(seed) = seed_from_env()? {
                cfg.seed = seed;
            }
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(w) = self.window {
            cfg.prev_sentence_window = w;
        }
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.learning_rate = self.lr.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.seed = cfg.seed;
        let m = &mut cfg.model;
        m.n_layers = self.layers.unwrap_or(m.n_layers);
        m.d_model = self.d_model.unwrap_or(m.d_model);
        m.n_heads = self.heads.unwrap_or(m.n_heads);
        m.d_ff = self.d_ff.unwrap_or(m.d_ff);
        m.max_len = self.max_len.unwrap_or(m.max_len);
        m.dropout_rate = self.dropout.unwrap_or(m.dropout_rate);
        cfg.min_freq = self.min_freq.unwrap_or(cfg.min_freq);
        cfg.precision = self.precision.unwrap_or(cfg.precision);

        cfg.train.validate()?;
        cfg.model_for_vocab(crate::context::RESERVED.len()).validate()?;
        if cfg.min_freq == 0 {
            bail!("min_freq must be >= 1");
        }
        Ok(cfg)
    }
}
