//! Plain-text `key=value` files: training configs and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha1::{Digest, Sha1};

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::training::{MetricsRecord, TrainConfig};

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; later keys override earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub(crate) fn parse_value<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        })
        .transpose()
}

/// Git blob object id: SHA-1 of `"blob <len>\0"` followed by the content.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha1::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hasher.finalize().iter().fold(String::with_capacity(40), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Record of one training run, written when the run finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub threads: usize,
    pub checkpoint_hash: String,
    pub best_checkpoint_path: PathBuf,
    pub best_checkpoint_hash: String,
    pub start_unix: f64,
    pub end_unix: f64,
    pub final_metrics: MetricsRecord,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let m = &self.final_metrics;
        let lines = [
            ("learning_rate", c.learning_rate.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("epochs", c.epochs.to_string()),
            ("seed", c.seed.to_string()),
            ("grid_size", c.grid_size.to_string()),
            ("layers", c.layers.to_string()),
            ("activation_shift", c.activation_shift.to_string()),
            ("checkpoint_path", c.checkpoint_path.display().to_string()),
            ("metrics_path", c.metrics_path.display().to_string()),
            ("threads", self.threads.to_string()),
            ("checkpoint_hash", self.checkpoint_hash.clone()),
            ("best_checkpoint_path", self.best_checkpoint_path.display().to_string()),
            ("best_checkpoint_hash", self.best_checkpoint_hash.clone()),
            ("start_unix", self.start_unix.to_string()),
            ("end_unix", self.end_unix.to_string()),
            ("final_epoch", m.epoch.to_string()),
            ("final_train_loss", m.train_loss.to_string()),
            ("final_train_acc", m.train_accuracy.to_string()),
            ("final_val_loss", m.val_loss.to_string()),
            ("final_val_acc", m.val_accuracy.to_string()),
            ("final_wall_seconds", m.wall_seconds.to_string()),
        ];
        lines.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        fn req<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            parse_value(map, key)?.ok_or_else(|| Error::Config(format!("manifest is missing {key}")))
        }
        Ok(RunManifest {
            config: TrainConfig {
                learning_rate: req(&map, "learning_rate")?,
                batch_size: req(&map, "batch_size")?,
                epochs: req(&map, "epochs")?,
                seed: req(&map, "seed")?,
                grid_size: req(&map, "grid_size")?,
                layers: req(&map, "layers")?,
                activation_shift: req(&map, "activation_shift")?,
                checkpoint_path: req(&map, "checkpoint_path")?,
                metrics_path: req(&map, "metrics_path")?,
            },
            threads: req(&map, "threads")?,
            checkpoint_hash: req(&map, "checkpoint_hash")?,
            best_checkpoint_path: req(&map, "best_checkpoint_path")?,
            best_checkpoint_hash: req(&map, "best_checkpoint_hash")?,
            start_unix: req(&map, "start_unix")?,
            end_unix: req(&map, "end_unix")?,
            final_metrics: MetricsRecord {
                epoch: req(&map, "final_epoch")?,
                train_loss: req(&map, "final_train_loss")?,
                train_accuracy: req(&map, "final_train_acc")?,
                val_loss: req(&map, "final_val_loss")?,
                val_accuracy: req(&map, "final_val_acc")?,
                wall_seconds: req(&map, "final_wall_seconds")?,
            },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }
}
