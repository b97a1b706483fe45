//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use contextsg::dynsg::DynConfig;
use contextsg::encoder::{EncoderConfig, PretrainOptions};
use contextsg::sgns::SgnsConfig;
use contextsg::Error;

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const KEYS: &[Key] = &[
    key("corpus", "", "raw text corpus, one sentence per line"),
    key("vocab", "", "vocabulary file (\"word count\" lines)"),
    key("encoder", "", "encoder checkpoint (JSON)"),
    key("context_vectors", "", "external per-token vector file"),
    key("context_dim", "768", "dimension expected in the external vector file"),
    key("embeddings", "", "word2vec text embeddings to evaluate"),
    key("dataset", "", "evaluation dataset"),
    key("pairs", "", "word pair list for export-pairs"),
    key("output", "", "output file"),
    key("log", "", "training log file (\"epoch step loss lr\" lines)"),
    key("mode", "dynamic", "train mode: baseline | dynamic"),
    key("provider", "builtin", "context source for dynamic mode: builtin | external"),
    key("task", "sim", "eval task: sim | analogy | relation"),
    key("word", "", "query word for neighbors"),
    key("k", "10", "neighbors to list"),
    key("kind", "synonym", "generated corpus: synonym | alternating"),
    key("sentences", "1000", "sentences to generate"),
    key("min_count", "5", "minimum word count for the vocabulary"),
    key("min_len", "10", "shortest sentence kept (tokens)"),
    key("max_len", "40", "longest sentence kept (tokens)"),
    key("layers", "2", "encoder layers"),
    key("heads", "4", "attention heads per layer"),
    key("enc_dim", "64", "encoder model width"),
    key("ffn_dim", "256", "encoder feed-forward width"),
    key("enc_max_len", "64", "longest sentence the encoder accepts"),
    key("mask_fraction", "0.15", "fraction of tokens masked in pretraining"),
    key("pretrain_epochs", "5", "MLM pretraining epochs"),
    key("pretrain_lr", "0.05", "MLM pretraining learning rate"),
    key("batch_size", "8", "sentences per MLM step"),
    key("dim", "300", "embedding dimension"),
    key("window", "5", "context window on each side"),
    key("negatives", "5", "negative samples"),
    key("lr", "0.08", "initial learning rate"),
    key("clip", "5", "gradient clip norm"),
    key("epochs", "5", "training epochs"),
    key("subsample", "1e-5", "baseline subsampling threshold, or none"),
    key("attention", "true", "attention aggregation in dynamic mode (false: uniform mean)"),
    key("freeze_encoder", "true", "keep built-in encoder weights fixed"),
    key("cache_context", "true", "keep frozen encoder outputs in memory across epochs"),
    key("workers", "1", "training threads (> 1 is nondeterministic)"),
    key("log_every", "0", "steps between log records (0: per epoch only)"),
    key("seed", "1", "seed for every random stream"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: Vec<String>,
}

fn index(name: &str) -> Option<usize> {
    KEYS.iter().position(|k| k.name == name)
}

fn invalid(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{} = {:?}: expected {}", key, value, expected))
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|k| k.default.to_owned()).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let name = key.replace('-', "_");
        let i = index(&name).ok_or_else(|| Error::Config(format!("unknown key {:?}", key)))?;
        self.values[i] = value.trim().to_owned();
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), Error> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                message: format!("expected \"key = value\", found {:?}", raw),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// The full configuration as a loadable file.
    pub fn render(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in KEYS.iter().zip(&self.values) {
            writeln!(out, "{} = {}", k.name, v).unwrap();
        }
        out
    }

    pub fn str(&self, key: &str) -> &str {
        &self.values[index(key).unwrap_or_else(|| panic!("undeclared key {}", key))]
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<T, Error> {
        let v = self.str(key);
        v.parse().map_err(|_| invalid(key, v, expected))
    }

    pub fn usize(&self, key: &str) -> Result<usize, Error> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64, Error> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn f64(&self, key: &str) -> Result<f64, Error> {
        let v: f64 = self.parsed(key, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(key, self.str(key), "a finite number"))
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool, Error> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(invalid(key, v, "true or false")),
        }
    }

    /// A required path.
    pub fn path(&self, key: &str) -> Result<PathBuf, Error> {
        self.opt_path(key)
            .ok_or_else(|| Error::Config(format!("{} is required (--{} <path>)", key, key)))
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn choice<'a>(&'a self, key: &str, options: &[&str]) -> Result<&'a str, Error> {
        let v = self.str(key);
        if options.contains(&v) {
            Ok(v)
        } else {
            Err(invalid(key, v, &options.join(" | ")))
        }
    }

    pub fn subsample(&self) -> Result<Option<f64>, Error> {
        match self.str("subsample") {
            "none" | "off" | "0" => Ok(None),
            _ => self.f64("subsample").map(Some),
        }
    }

    pub fn sgns(&self) -> Result<SgnsConfig, Error> {
        let c = SgnsConfig {
            dim: self.usize("dim")?,
            window: self.usize("window")?,
            negatives: self.usize("negatives")?,
            lr: self.f64("lr")?,
            clip: self.f64("clip")?,
            epochs: self.usize("epochs")?,
            subsample: self.subsample()?,
            seed: self.u64("seed")?,
            workers: self.usize("workers")?,
            log_every: self.u64("log_every")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn dynamic(&self) -> Result<DynConfig, Error> {
        let c = DynConfig {
            dim: self.usize("dim")?,
            window: self.usize("window")?,
            negatives: self.usize("negatives")?,
            lr: self.f64("lr")?,
            clip: self.f64("clip")?,
            epochs: self.usize("epochs")?,
            seed: self.u64("seed")?,
            attention: self.bool("attention")?,
            freeze_encoder: self.bool("freeze_encoder")?,
            workers: self.usize("workers")?,
            log_every: self.u64("log_every")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn encoder(&self) -> Result<EncoderConfig, Error> {
        let c = EncoderConfig {
            layers: self.usize("layers")?,
            heads: self.usize("heads")?,
            dim: self.usize("enc_dim")?,
            ffn_dim: self.usize("ffn_dim")?,
            max_len: self.usize("enc_max_len")?,
            mask_fraction: self.f64("mask_fraction")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn pretrain(&self) -> Result<PretrainOptions, Error> {
        Ok(PretrainOptions {
            epochs: self.usize("pretrain_epochs")?,
            lr: self.f64("pretrain_lr")?,
            batch_size: self.usize("batch_size")?,
            clip: self.f64("clip")?,
            seed: self.u64("seed")?,
        })
    }
}
