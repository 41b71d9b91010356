use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scores::ConfusionMatrix;
use super::svm::{svm_predict, svm_train, SvmConfig};

use crate::data::{fit_scaler, median, population_std, ClassLabel, Dataset, MvtsSample, ScalingParams};
use crate::error::{Error, Result};

/// How a `[T × P]` sample becomes a feature vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Row-major `T·P` values.
    #[default]
    Flatten,
    /// `(mean, median, stddev)` per channel, `3·P` values.
    Stats,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flatten" => Ok(Self::Flatten),
            "stats" => Ok(Self::Stats),
            _ => Err(Error::Config(format!("unknown feature mode '{s}' (flatten|stats)"))),
        }
    }
}

pub fn featurize(sample: &MvtsSample, mode: FeatureMode) -> Vec<f64> {
    match mode {
        FeatureMode::Flatten => sample.values().to_vec(),
        FeatureMode::Stats => (0..sample.channels())
            .flat_map(|p| {
                let col = sample.channel(p);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                [mean, median(&col), population_std(&col)]
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Baseline,
    Augmented,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Baseline => "baseline",
            Arm::Augmented => "augmented",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub arm: Arm,
    pub test_partition: u32,
    pub confusion: ConfusionMatrix,
    pub tss: f64,
    pub hss2: f64,
}

/// What each arm was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub n_flare: usize,
    pub n_noflare: usize,
    pub n_synthetic: usize,
    pub support_vectors: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub svm: SvmConfig,
    pub feature_mode: FeatureMode,
    pub train_partition: u32,
    pub arms: Vec<ArmSummary>,
    pub results: Vec<ExperimentResult>,
}

impl ExperimentReport {
    pub fn result(&self, arm: Arm, test_partition: u32) -> Option<&ExperimentResult> {
        self.results
            .iter()
            .find(|r| r.arm == arm && r.test_partition == test_partition)
    }

    /// Mean TSS of an arm over all test partitions.
    pub fn mean_tss(&self, arm: Arm) -> Option<f64> {
        let v: Vec<f64> = self.results.iter().filter(|r| r.arm == arm).map(|r| r.tss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,test_partition,tp,fn,fp,tn,tss,hss2\n");
        for r in &self.results {
            let c = &r.confusion;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.arm, r.test_partition, c.tp, c.fn_, c.fp, c.tn, r.tss, r.hss2
            ));
        }
        s
    }

    /// Writes `classification.csv` and `classification.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("classification.csv"), self.to_csv())?;
        let summary = serde_json::json!({
            "format": "mvts-classification",
            "schema_version": 1,
            "report": self,
        });
        fs::write(dir.join("classification.json"), format!("{summary:#}\n"))?;
        Ok(())
    }
}

fn prepare(ds: &Dataset, params: &ScalingParams, role: &str) -> Result<Dataset> {
    if ds.samples.iter().any(MvtsSample::has_missing) {
        return Err(Error::Config(format!(
            "{role} partition {} has missing values; impute first",
            ds.partition_id
        )));
    }
    match &ds.scaling_params {
        Some(p) if p == params => Ok(ds.clone()),
        Some(_) => Err(Error::Config(format!(
            "{role} partition {} was scaled with different parameters than the training partition",
            ds.partition_id
        ))),
        None => {
            let mut out = ds.clone();
            out.scale_with(params)?;
            Ok(out)
        }
    }
}

fn design(samples: &[&MvtsSample], mode: FeatureMode) -> (Vec<Vec<f64>>, Vec<f64>) {
    samples
        .iter()
        .map(|s| (featurize(s, mode), s.label.sign()))
        .unzip()
}

/// Trains a baseline SVM on `train` and, when `synthetic` is given, an
/// augmented SVM on `train ∪ synthetic`; scores both on every test partition.
///
/// Unscaled partitions are scaled with parameters fitted on `train`.
pub fn run_experiment(
    train: &Dataset,
    synthetic: Option<&Dataset>,
    tests: &[Dataset],
    svm: &SvmConfig,
    mode: FeatureMode,
) -> Result<ExperimentReport> {
    svm.validate()?;
    if train.samples.iter().any(|s| s.synthetic) {
        return Err(Error::Config("training partition contains synthetic samples".into()));
    }
    let params = match &train.scaling_params {
        Some(p) => p.clone(),
        None => fit_scaler(train)?,
    };
    let train = prepare(train, &params, "training")?;
    let mut test_sets = Vec::with_capacity(tests.len());
    for t in tests {
        if t.samples.iter().any(|s| s.synthetic) {
            return Err(Error::Config(format!(
                "test partition {} contains synthetic samples",
                t.partition_id
            )));
        }
        if t.partition_id == train.partition_id {
            return Err(Error::Config(format!(
                "test partition {} is the training partition",
                t.partition_id
            )));
        }
        test_sets.push(prepare(t, &params, "test")?);
    }
    let synth = match synthetic {
        Some(s) => {
            if let Some(bad) = s.samples.iter().find(|x| !x.synthetic || x.label != ClassLabel::Flare) {
                return Err(Error::Config(format!(
                    "augmentation set must hold synthetic flares only; '{}' is not",
                    bad.id
                )));
            }
            if s.channels() != train.channels() || s.timesteps().is_some() && s.timesteps() != train.timesteps() {
                return Err(Error::Shape("synthetic samples do not match the training shape".into()));
            }
            Some(prepare(s, &params, "synthetic")?)
        }
        None => None,
    };

    let mut arms = vec![(Arm::Baseline, train.samples.iter().collect::<Vec<_>>())];
    if let Some(s) = &synth {
        arms.push((Arm::Augmented, train.samples.iter().chain(&s.samples).collect()));
    }

    let mut summaries = Vec::new();
    let mut results = Vec::new();
    for (arm, samples) in arms {
        let (x, y) = design(&samples, mode);
        let model = svm_train(&x, &y, svm)?;
        log::info!(
            "{arm}: {} samples, {} support vectors, {} SMO iterations",
            samples.len(),
            model.support_vectors.len(),
            model.iterations
        );
        summaries.push(ArmSummary {
            arm,
            n_flare: samples.iter().filter(|s| s.label == ClassLabel::Flare).count(),
            n_noflare: samples.iter().filter(|s| s.label == ClassLabel::NoFlare).count(),
            n_synthetic: samples.iter().filter(|s| s.synthetic).count(),
            support_vectors: model.support_vectors.len(),
            iterations: model.iterations,
            converged: model.converged,
        });
        for t in &test_sets {
            let refs: Vec<&MvtsSample> = t.samples.iter().collect();
            let (xt, yt) = design(&refs, mode);
            let pred = svm_predict(&model, &xt)?;
            let confusion = ConfusionMatrix::from_labels(&yt, &pred)?;
            results.push(ExperimentResult {
                arm,
                test_partition: t.partition_id,
                confusion,
                tss: confusion.tss()?,
                hss2: confusion.hss2()?,
            });
        }
    }
    Ok(ExperimentReport {
        svm: svm.clone(),
        feature_mode: mode,
        train_partition: train.partition_id,
        arms: summaries,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: Vec<f64>, label: ClassLabel) -> MvtsSample {
        MvtsSample::new("s", label, 3, 2, values).unwrap()
    }

    #[test]
    fn flatten_is_row_major() {
        let s = sample(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], ClassLabel::Flare);
        assert_eq!(featurize(&s, FeatureMode::Flatten), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn stats_triplets_per_channel() {
        let s = sample(vec![0.5, 1.0, 0.5, 2.0, 0.5, 6.0], ClassLabel::Flare);
        let f = featurize(&s, FeatureMode::Stats);
        assert_eq!(f.len(), 6);
        assert_eq!(&f[..3], &[0.5, 0.5, 0.0]);
        assert_eq!(f[3], 3.0);
        assert_eq!(f[4], 2.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Stats".parse::<FeatureMode>().unwrap(), FeatureMode::Stats);
        assert!("pca".parse::<FeatureMode>().is_err());
    }
}
