//! Labeled multivariate time series: the sample model, ingestion of
//! per-sample delimited files, preprocessing, per-sample statistics,
//! class conditioning and a synthetic ground-truth generator.
//!
//! A sample is a `T × P` matrix stored row-major (one row per timestep,
//! one column per channel). Values are kept in physical units until a
//! [`ScalingParams`] fitted on the training set maps them to `[-1, 1]`.

mod features;
mod ingest;
mod io;
mod preprocess;
mod toy;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub use features::{extract_feature, extract_features, median, population_std};
pub use ingest::{ingest_directory, read_manifest, IngestOptions, IngestReport, Rejection};
pub use io::{read_dataset, write_dataset, DATASET_FORMAT, DATASET_SCHEMA_VERSION};
pub use preprocess::{apply_scaler, fit_scaler, impute_linear, ChannelRange, ScalingParams};
pub use toy::{make_toy_dataset, ToyChannel, TOY_CHANNELS};

/// Default number of timesteps per record.
pub const DEFAULT_TIMESTEPS: usize = 60;

/// The four magnetic-field parameters used as channels by default.
pub const DEFAULT_CHANNELS: [&str; 4] = ["TOTUSJH", "ABSNJZH", "SAVNCPP", "TOTBSQ"];

pub fn default_channels() -> Vec<String> {
    DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect()
}

/// Binary flare label. M- and X-class flares are the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassLabel {
    NoFlare,
    Flare,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::NoFlare, ClassLabel::Flare];

    /// Column of this class in the one-hot encoding.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::NoFlare => 0,
            ClassLabel::Flare => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == ClassLabel::Flare
    }

    /// `+1` for flares, `-1` otherwise.
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::NoFlare => f.write_str("NOFLARE"),
            ClassLabel::Flare => f.write_str("FLARE"),
        }
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FLARE" => Ok(ClassLabel::Flare),
            "NOFLARE" => Ok(ClassLabel::NoFlare),
            other => Err(Error::Ingest(format!(
                "unknown label '{other}' (expected FLARE or NOFLARE)"
            ))),
        }
    }
}

/// Per-sample statistic used for fidelity evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mean,
    Median,
    StdDev,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Mean, FeatureKind::Median, FeatureKind::StdDev];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mean => "mean",
            FeatureKind::Median => "median",
            FeatureKind::StdDev => "stddev",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(FeatureKind::Mean),
            "median" => Ok(FeatureKind::Median),
            "stddev" | "std" => Ok(FeatureKind::StdDev),
            other => Err(Error::Config(format!("unknown feature kind '{other}'"))),
        }
    }
}

/// One labeled multivariate time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvtsSample {
    pub id: String,
    pub label: ClassLabel,
    timesteps: usize,
    channels: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
    /// Set for generator output; such samples must never reach a test set.
    #[serde(default)]
    pub synthetic: bool,
}

impl MvtsSample {
    /// Builds a fully observed sample from row-major values.
    pub fn new(
        id: impl Into<String>,
        label: ClassLabel,
        timesteps: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::with_mask(id, label, timesteps, channels, values, missing)
    }

    pub fn with_mask(
        id: impl Into<String>,
        label: ClassLabel,
        timesteps: usize,
        channels: usize,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        if timesteps < 2 || channels < 1 {
            return shape_err(format!(
                "sample needs T >= 2 and P >= 1, got T={timesteps}, P={channels}"
            ));
        }
        if values.len() != timesteps * channels || missing.len() != values.len() {
            return shape_err(format!(
                "sample of shape [{timesteps} x {channels}] got {} values and {} mask entries",
                values.len(),
                missing.len()
            ));
        }
        Ok(Self {
            id: id.into(),
            label,
            timesteps,
            channels,
            values,
            missing,
            synthetic: false,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Row-major `T × P` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn get(&self, t: usize, p: usize) -> f64 {
        self.values[t * self.channels + p]
    }

    pub fn is_missing(&self, t: usize, p: usize) -> bool {
        self.missing[t * self.channels + p]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Values of one channel across time.
    pub fn channel(&self, p: usize) -> Vec<f64> {
        (0..self.timesteps).map(|t| self.get(t, p)).collect()
    }

    pub(crate) fn set_channel(&mut self, p: usize, column: &[f64]) {
        for (t, &v) in column.iter().enumerate() {
            self.values[t * self.channels + p] = v;
            self.missing[t * self.channels + p] = false;
        }
    }

    /// True when every value is finite, inside `[-1, 1]` and observed.
    pub fn is_preprocessed(&self) -> bool {
        !self.has_missing()
            && self
                .values
                .iter()
                .all(|v| v.is_finite() && (-1.0..=1.0).contains(v))
    }
}

/// A collection of samples sharing shape and channel layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<MvtsSample>,
    pub partition_id: u32,
    pub channel_names: Vec<String>,
    /// Present once the samples have been mapped to `[-1, 1]`.
    pub scaling_params: Option<ScalingParams>,
}

impl Dataset {
    pub fn new(partition_id: u32, channel_names: Vec<String>) -> Self {
        Self {
            samples: Vec::new(),
            partition_id,
            channel_names,
            scaling_params: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    /// Shared `T` of the samples, if any.
    pub fn timesteps(&self) -> Option<usize> {
        self.samples.first().map(MvtsSample::timesteps)
    }

    pub fn push(&mut self, sample: MvtsSample) -> Result<()> {
        if sample.channels() != self.channels() {
            return shape_err(format!(
                "sample '{}' has {} channels, dataset has {}",
                sample.id,
                sample.channels(),
                self.channels()
            ));
        }
        if let Some(t) = self.timesteps() {
            if sample.timesteps() != t {
                return shape_err(format!(
                    "sample '{}' has {} timesteps, dataset has {t}",
                    sample.id,
                    sample.timesteps()
                ));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        ClassLabel::ALL.iter().map(|&l| (l, self.count(l))).collect()
    }

    /// `|negative| / |positive|`; infinite when there are no positives.
    pub fn imbalance_ratio(&self) -> f64 {
        let pos = self.count(ClassLabel::Flare);
        let neg = self.count(ClassLabel::NoFlare);
        if pos == 0 {
            if neg == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            neg as f64 / pos as f64
        }
    }

    /// Number of synthetic positives needed to match the negatives.
    pub fn balancing_count(&self) -> usize {
        self.count(ClassLabel::NoFlare)
            .saturating_sub(self.count(ClassLabel::Flare))
    }

    /// A copy holding only samples of `label`.
    pub fn filter_label(&self, label: ClassLabel) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| s.label == label)
                .cloned()
                .collect(),
            partition_id: self.partition_id,
            channel_names: self.channel_names.clone(),
            scaling_params: self.scaling_params.clone(),
        }
    }

    /// Imputes every sample in place.
    pub fn impute(&mut self) -> Result<()> {
        for s in &mut self.samples {
            *s = impute_linear(s)?;
        }
        Ok(())
    }

    /// Fits scaling on this dataset, applies it and records the parameters.
    pub fn fit_and_scale(&mut self) -> Result<ScalingParams> {
        let params = fit_scaler(self)?;
        self.scale_with(&params)?;
        Ok(params)
    }

    /// Applies previously fitted parameters.
    pub fn scale_with(&mut self, params: &ScalingParams) -> Result<()> {
        if self.scaling_params.is_some() {
            return Err(Error::State(format!(
                "partition {} is already scaled",
                self.partition_id
            )));
        }
        for s in &mut self.samples {
            *s = apply_scaler(s, params)?;
        }
        self.scaling_params = Some(params.clone());
        Ok(())
    }
}

/// `[T × 2]` one-hot class condition, identical on every row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionVector {
    timesteps: usize,
    row: [f64; 2],
}

impl ConditionVector {
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn row(&self) -> [f64; 2] {
        self.row
    }

    /// Row-major `[T × 2]` matrix.
    pub fn to_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.timesteps * 2);
        for _ in 0..self.timesteps {
            out.extend_from_slice(&self.row);
        }
        out
    }
}

/// One-hot condition for `label` repeated over `timesteps` rows.
/// Column 0 is `NoFlare`, column 1 is `Flare`.
pub fn one_hot(label: ClassLabel, timesteps: usize) -> ConditionVector {
    let mut row = [0.0; 2];
    row[label.index()] = 1.0;
    ConditionVector { timesteps, row }
}
