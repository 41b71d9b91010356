//! Flat `key = value` run configuration.
//!
//! Values are resolved from the built-in defaults, then the `--config`
//! file, then command-line flags. Every command writes the resolved set back
//! out as `config_<command>.txt`, which can be passed to `--config` to
//! replay the run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mvts_cgan::cgan::{Conditioning, TrainConfig};
use mvts_cgan::classify::{FeatureMode, SvmConfig};
use mvts_cgan::data::{ClassLabel, FeatureKind};
use mvts_cgan::metrics::{AaRepresentation, ReportOptions};

pub const ECHO_VERSION: u32 = 1;

/// Recognised keys, their defaults and a short description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for training, synthesis, metrics and toy data"),
    ("out", "out", "output directory"),
    ("ingest.dir", "", "directory of per-sample tables"),
    ("ingest.manifest", "", "sample_id,label manifest"),
    ("ingest.channels", "TOTUSJH,ABSNJZH,SAVNCPP,TOTBSQ", "channels to keep, in order"),
    ("ingest.delimiter", "tab", "field delimiter: tab, comma or a single character"),
    ("ingest.partition", "1", "partition id recorded on the dataset"),
    ("ingest.scaler", "", "scaler to apply instead of fitting one"),
    ("toy.n_pos", "40", "toy flare count"),
    ("toy.n_neg", "2000", "toy no-flare count"),
    ("toy.timesteps", "60", "toy series length"),
    ("toy.channels", "4", "toy channel count"),
    ("toy.partition", "1", "toy partition id"),
    ("toy.scaler", "", "scaler to apply instead of fitting one"),
    ("train.data", "", "preprocessed training dataset"),
    ("train.batch_size", "32", ""),
    ("train.epochs", "300", ""),
    ("train.checkpoint_every", "5", ""),
    ("train.d_learning_rate", "0.1", "discriminator gradient descent step"),
    ("train.g_learning_rate", "0.1", "generator Adam step"),
    ("train.hidden", "100", "LSTM hidden size"),
    ("train.latent_dim", "3", ""),
    ("train.d_steps", "1", "discriminator updates per batch"),
    ("train.g_steps", "1", "generator updates per batch"),
    ("train.conditioning", "all_classes", "all_classes or flare_only"),
    ("synth.checkpoint", "", "checkpoint file"),
    ("synth.class", "flare", "flare or noflare"),
    ("synth.count", "", "number of samples; empty with synth.balance_with set"),
    ("synth.balance_with", "", "dataset whose |negative| - |positive| sets the count"),
    ("eval.checkpoints", "", "directory of ckpt_epoch_N.json files"),
    ("eval.data", "", "preprocessed real dataset to compare against"),
    ("metrics.bins", "20", ""),
    ("metrics.groups", "6", ""),
    ("metrics.features", "mean,median,stddev", ""),
    ("metrics.aa_representation", "channel_vector", "channel_vector or per_channel"),
    ("metrics.label", "flare", "class synthesized and compared"),
    ("metrics.n_synth", "", "synthetic samples per checkpoint; empty = real count"),
    ("metrics.total_epochs", "", "training length for group layout; empty = from checkpoints"),
    ("metrics.svg", "false", "also write SVG box plots"),
    ("clf.train", "", "training dataset"),
    ("clf.synth", "", "synthetic flares for the augmented arm"),
    ("clf.test", "", "comma-separated test datasets"),
    ("svm.c", "0.25", ""),
    ("svm.gamma", "0.25", ""),
    ("svm.tolerance", "0.001", ""),
    ("svm.max_passes", "1000", ""),
    ("svm.cache_mb", "512", "kernel row cache"),
    ("svm.features", "flatten", "flatten or stats"),
];

/// A usage or configuration mistake; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => usage(format!("unknown configuration key '{key}'")),
        }
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    /// The informational `command` key written by [`RunConfig::echo`] is ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), UsageError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("{origin}:{}: expected 'key = value', got '{line}'", n + 1));
            };
            let k = k.trim();
            if k == "command" {
                continue;
            }
            self.set(k, v).map_err(|e| UsageError(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<(), UsageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Parses a `KEY=VALUE` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), UsageError> {
        match kv.split_once('=') {
            Some((k, v)) => self.set(k.trim(), v),
            None => usage(format!("--set expects KEY=VALUE, got '{kv}'")),
        }
    }

    /// Resolved configuration in key order, prefixed by the command name.
    pub fn echo(&self, command: &str) -> String {
        let mut s = format!("# mvts-cgan config echo, version {ECHO_VERSION}\ncommand = {command}\n");
        for (k, _, _) in KEYS {
            s.push_str(&format!("{k} = {}\n", self.values[*k]));
        }
        s
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, UsageError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.str(key);
        raw.parse()
            .map_err(|e| UsageError(format!("invalid value '{raw}' for {key}: {e}")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, UsageError>
    where
        T::Err: fmt::Display,
    {
        if self.str(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.str("out"))
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// A path that must be set and must exist.
    pub fn input(&self, key: &str) -> Result<PathBuf, UsageError> {
        let Some(p) = self.opt_path(key) else {
            return usage(format!("{key} is required"));
        };
        if !p.exists() {
            return usage(format!("{key}: {} does not exist", p.display()));
        }
        Ok(p)
    }

    pub fn opt_input(&self, key: &str) -> Result<Option<PathBuf>, UsageError> {
        if self.str(key).is_empty() {
            Ok(None)
        } else {
            self.input(key).map(Some)
        }
    }

    pub fn delimiter(&self) -> Result<u8, UsageError> {
        match self.str("ingest.delimiter") {
            "tab" | "\\t" => Ok(b'\t'),
            "comma" => Ok(b','),
            s if s.len() == 1 => Ok(s.as_bytes()[0]),
            s => usage(format!("invalid delimiter '{s}'")),
        }
    }

    pub fn label(&self, key: &str) -> Result<ClassLabel, UsageError> {
        self.str(key)
            .parse()
            .map_err(|e| UsageError(format!("{key}: {e}")))
    }

    pub fn train_config(&self) -> Result<TrainConfig, UsageError> {
        let conditioning = match self.str("train.conditioning") {
            "all_classes" => Conditioning::AllClasses,
            "flare_only" => Conditioning::FlareOnly,
            s => return usage(format!("train.conditioning must be all_classes or flare_only, got '{s}'")),
        };
        let cfg = TrainConfig {
            batch_size: self.parse("train.batch_size")?,
            epochs: self.parse("train.epochs")?,
            checkpoint_every: self.parse("train.checkpoint_every")?,
            d_learning_rate: self.parse("train.d_learning_rate")?,
            g_learning_rate: self.parse("train.g_learning_rate")?,
            hidden: self.parse("train.hidden")?,
            latent_dim: self.parse("train.latent_dim")?,
            d_steps: self.parse("train.d_steps")?,
            g_steps: self.parse("train.g_steps")?,
            conditioning,
            seed: self.parse("seed")?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn svm_config(&self) -> Result<(SvmConfig, FeatureMode), UsageError> {
        let cfg = SvmConfig {
            c: self.parse("svm.c")?,
            gamma: self.parse("svm.gamma")?,
            tolerance: self.parse("svm.tolerance")?,
            max_passes: self.parse("svm.max_passes")?,
            cache_mb: self.parse("svm.cache_mb")?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        let mode = self
            .str("svm.features")
            .parse()
            .map_err(|e: mvts_cgan::Error| UsageError(e.to_string()))?;
        Ok((cfg, mode))
    }

    pub fn report_options(&self) -> Result<ReportOptions, UsageError> {
        let features = self
            .list("metrics.features")
            .iter()
            .map(|f| f.parse::<FeatureKind>().map_err(|e| UsageError(format!("metrics.features: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if features.is_empty() {
            return usage("metrics.features is empty");
        }
        let aa_representation = match self.str("metrics.aa_representation") {
            "channel_vector" => AaRepresentation::ChannelVector,
            "per_channel" => AaRepresentation::PerChannel,
            s => return usage(format!("metrics.aa_representation must be channel_vector or per_channel, got '{s}'")),
        };
        Ok(ReportOptions {
            bins: self.parse("metrics.bins")?,
            groups: self.parse("metrics.groups")?,
            features,
            aa_representation,
            label: self.label("metrics.label")?,
            n_synth: self.parse_opt("metrics.n_synth")?,
            seed: self.parse("seed")?,
            total_epochs: self.parse_opt("metrics.total_epochs")?,
        })
    }
}
