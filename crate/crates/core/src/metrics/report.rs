//! Per-checkpoint fidelity metrics aggregated over epoch groups.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aa::{adversarial_accuracy, AaResult};
use super::histogram::{bin_pair, kl_divergence, DEFAULT_BINS};
use super::svg::box_plot_svg;
use crate::cgan::Checkpoint;
use crate::data::{extract_features, ClassLabel, Dataset, FeatureKind};
use crate::error::{Error, Result};

/// How each series is represented for Adversarial Accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AaRepresentation {
    /// One `P`-dimensional vector of the statistic across channels.
    ChannelVector,
    /// One scalar per channel, scored separately.
    PerChannel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub bins: usize,
    pub groups: usize,
    pub features: Vec<FeatureKind>,
    pub aa_representation: AaRepresentation,
    /// Class that is synthesized and compared.
    pub label: ClassLabel,
    /// Synthetic samples per checkpoint; defaults to the number of real
    /// samples of `label` (Adversarial Accuracy needs equal sizes).
    pub n_synth: Option<usize>,
    pub seed: u64,
    /// Training length used to lay out the groups; read from the
    /// checkpoints when absent.
    pub total_epochs: Option<usize>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            groups: 6,
            features: FeatureKind::ALL.to_vec(),
            aa_representation: AaRepresentation::ChannelVector,
            label: ClassLabel::Flare,
            n_synth: None,
            seed: 0,
            total_epochs: None,
        }
    }
}

/// A checkpoint held in memory or on disk.
#[derive(Clone, Debug)]
pub enum CheckpointSource {
    Loaded(Box<Checkpoint>),
    File(PathBuf),
}

impl CheckpointSource {
    fn describe(&self) -> String {
        match self {
            CheckpointSource::Loaded(c) => format!("epoch {}", c.epoch),
            CheckpointSource::File(p) => p.display().to_string(),
        }
    }

    fn epoch_hint(&self) -> Option<usize> {
        match self {
            CheckpointSource::Loaded(c) => Some(c.epoch),
            CheckpointSource::File(p) => p
                .file_stem()?
                .to_str()?
                .strip_prefix("ckpt_epoch_")?
                .parse()
                .ok(),
        }
    }

    fn load(&self) -> Result<Checkpoint> {
        match self {
            CheckpointSource::Loaded(c) => Ok((**c).clone()),
            CheckpointSource::File(p) => Checkpoint::load(p),
        }
    }
}

/// Inclusive epoch span of one group (1-based epochs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpan {
    pub index: usize,
    pub first_epoch: usize,
    pub last_epoch: usize,
}

impl GroupSpan {
    pub fn label(&self) -> String {
        format!("{}-{}", self.first_epoch, self.last_epoch)
    }
}

/// Splits `1..=total_epochs` into `groups` consecutive spans of equal width
/// (the last may be shorter).
pub fn group_spans(total_epochs: usize, groups: usize) -> Vec<GroupSpan> {
    let width = total_epochs.div_ceil(groups.max(1)).max(1);
    (0..groups)
        .map(|i| GroupSpan {
            index: i,
            first_epoch: i * width + 1,
            last_epoch: ((i + 1) * width).min(total_epochs),
        })
        .filter(|g| g.first_epoch <= g.last_epoch)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlRecord {
    pub epoch: usize,
    pub group: usize,
    pub feature: FeatureKind,
    pub channel: String,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaRecord {
    pub epoch: usize,
    pub group: usize,
    pub feature: FeatureKind,
    /// `None` for the channel-vector representation.
    pub channel: Option<String>,
    pub result: AaResult,
}

/// A checkpoint that could not be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub source: String,
    pub epoch: Option<usize>,
    pub reason: String,
}

/// Five-number summary plus mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl BoxStats {
    /// Quartiles by linear interpolation between order statistics.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochGroupReport {
    pub groups: Vec<GroupSpan>,
    pub channel_names: Vec<String>,
    pub features: Vec<FeatureKind>,
    pub aa_representation: AaRepresentation,
    /// Epochs that were evaluated, ascending.
    pub epochs: Vec<usize>,
    pub kl: Vec<KlRecord>,
    pub aa: Vec<AaRecord>,
    pub gaps: Vec<Gap>,
}

impl EpochGroupReport {
    pub fn kl_box(&self, group: usize, feature: FeatureKind, channel: &str) -> Option<BoxStats> {
        let vals: Vec<f64> = self
            .kl
            .iter()
            .filter(|r| r.group == group && r.feature == feature && r.channel == channel)
            .map(|r| r.kl)
            .collect();
        BoxStats::from_values(&vals)
    }

    pub fn aa_box(&self, group: usize, feature: FeatureKind, channel: Option<&str>) -> Option<BoxStats> {
        let vals: Vec<f64> = self
            .aa
            .iter()
            .filter(|r| r.group == group && r.feature == feature && r.channel.as_deref() == channel)
            .map(|r| r.result.value)
            .collect();
        BoxStats::from_values(&vals)
    }

    /// Mean KL over every feature, channel and checkpoint of each group.
    pub fn mean_kl_by_group(&self) -> Vec<Option<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let vals: Vec<f64> = self.kl.iter().filter(|r| r.group == g.index).map(|r| r.kl).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// Mean KL of one feature (over channels and checkpoints) per group.
    pub fn mean_kl_by_group_for(&self, feature: FeatureKind) -> Vec<Option<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let vals: Vec<f64> = self
                    .kl
                    .iter()
                    .filter(|r| r.group == g.index && r.feature == feature)
                    .map(|r| r.kl)
                    .collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// Mean Adversarial Accuracy of one feature per group.
    pub fn mean_aa_by_group(&self, feature: FeatureKind) -> Vec<Option<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let vals: Vec<f64> = self
                    .aa
                    .iter()
                    .filter(|r| r.group == g.index && r.feature == feature)
                    .map(|r| r.result.value)
                    .collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// Group with the lowest mean KL.
    pub fn selected_group(&self) -> Option<GroupSpan> {
        self.mean_kl_by_group()
            .iter()
            .zip(&self.groups)
            .filter_map(|(m, g)| m.map(|m| (m, *g)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, g)| g)
    }
}

/// Evaluates every checkpoint against the real samples of `opts.label` in
/// `eval_real` and groups the results by epoch.
pub fn epoch_report(
    sources: &[CheckpointSource],
    eval_real: &Dataset,
    opts: &ReportOptions,
) -> Result<EpochGroupReport> {
    if sources.is_empty() {
        return Err(Error::Metric("no checkpoints to report on".into()));
    }
    let real = eval_real.filter_label(opts.label);
    if real.len() < 2 {
        return Err(Error::Metric(format!(
            "need at least 2 real {} samples, found {}",
            opts.label,
            real.len()
        )));
    }
    if let Some(s) = real.samples.iter().find(|s| !s.is_preprocessed()) {
        return Err(Error::Metric(format!("real sample '{}' is not preprocessed", s.id)));
    }
    let n_synth = opts.n_synth.unwrap_or(real.len());
    let real_feats: Vec<Vec<Vec<f64>>> = opts
        .features
        .iter()
        .map(|&k| extract_features(&real.samples, k))
        .collect();

    let mut gaps = Vec::new();
    let mut evaluated: Vec<(usize, Checkpoint)> = Vec::new();
    for src in sources {
        match src.load() {
            Ok(c) => evaluated.push((c.epoch, c)),
            Err(e) => {
                log::warn!("skipping checkpoint {}: {e}", src.describe());
                gaps.push(Gap {
                    source: src.describe(),
                    epoch: src.epoch_hint(),
                    reason: e.to_string(),
                });
            }
        }
    }
    evaluated.sort_by_key(|(e, _)| *e);
    let total_epochs = opts
        .total_epochs
        .or_else(|| evaluated.iter().map(|(_, c)| c.config.epochs).max())
        .or_else(|| gaps.iter().filter_map(|g| g.epoch).max())
        .unwrap_or(1);
    let groups = group_spans(total_epochs, opts.groups);
    let group_of = |epoch: usize| {
        groups
            .iter()
            .find(|g| (g.first_epoch..=g.last_epoch).contains(&epoch))
            .map(|g| g.index)
    };

    let channel_names = eval_real.channel_names.clone();
    let mut kl = Vec::new();
    let mut aa = Vec::new();
    let mut epochs = Vec::new();
    for (epoch, ckpt) in &evaluated {
        let Some(group) = group_of(*epoch) else {
            gaps.push(Gap {
                source: format!("epoch {epoch}"),
                epoch: Some(*epoch),
                reason: format!("epoch outside 1..={total_epochs}"),
            });
            continue;
        };
        if ckpt.channel_names.len() != channel_names.len() {
            gaps.push(Gap {
                source: format!("epoch {epoch}"),
                epoch: Some(*epoch),
                reason: "channel layout differs from the evaluation data".into(),
            });
            continue;
        }
        let synth = ckpt.synthesize(opts.label, n_synth, opts.seed)?;
        epochs.push(*epoch);
        for (fi, &feature) in opts.features.iter().enumerate() {
            let synth_feats = extract_features(&synth.samples, feature);
            for (p, name) in channel_names.iter().enumerate() {
                let r: Vec<f64> = real_feats[fi].iter().map(|v| v[p]).collect();
                let s: Vec<f64> = synth_feats.iter().map(|v| v[p]).collect();
                let (hr, hs) = bin_pair(&r, &s, opts.bins)?;
                kl.push(KlRecord {
                    epoch: *epoch,
                    group,
                    feature,
                    channel: name.clone(),
                    kl: kl_divergence(&hr, &hs)?,
                });
                if opts.aa_representation == AaRepresentation::PerChannel {
                    let rr: Vec<Vec<f64>> = r.iter().map(|&v| vec![v]).collect();
                    let ss: Vec<Vec<f64>> = s.iter().map(|&v| vec![v]).collect();
                    aa.push(AaRecord {
                        epoch: *epoch,
                        group,
                        feature,
                        channel: Some(name.clone()),
                        result: adversarial_accuracy(&rr, &ss)?,
                    });
                }
            }
            if opts.aa_representation == AaRepresentation::ChannelVector {
                aa.push(AaRecord {
                    epoch: *epoch,
                    group,
                    feature,
                    channel: None,
                    result: adversarial_accuracy(&real_feats[fi], &synth_feats)?,
                });
            }
        }
    }
    Ok(EpochGroupReport {
        groups,
        channel_names,
        features: opts.features.clone(),
        aa_representation: opts.aa_representation,
        epochs,
        kl,
        aa,
        gaps,
    })
}

/// Which report tables to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmitOptions {
    pub kl: bool,
    pub aa: bool,
    pub svg: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `kl_{feature}_{channel}.csv`, `aa_{feature}.csv`, group summaries
/// and, when requested, SVG box plots. Returns the written paths.
pub fn write_report(report: &EpochGroupReport, dir: &Path, emit: EmitOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    if emit.kl {
        for &feature in &report.features {
            for channel in &report.channel_names {
                let mut body = String::from("epoch,group,kl\n");
                for r in report.kl.iter().filter(|r| r.feature == feature && &r.channel == channel) {
                    let _ = writeln!(body, "{},{},{}", r.epoch, report.groups[r.group].label(), r.kl);
                }
                put(format!("kl_{feature}_{channel}.csv"), body)?;
                if emit.svg {
                    let boxes: Vec<(String, Option<BoxStats>)> = report
                        .groups
                        .iter()
                        .map(|g| (g.label(), report.kl_box(g.index, feature, channel)))
                        .collect();
                    put(
                        format!("kl_{feature}_{channel}.svg"),
                        box_plot_svg(&format!("KL divergence: {feature}, {channel}"), &boxes),
                    )?;
                }
            }
        }
        let mut body = String::from("group,first_epoch,last_epoch,feature,channel,count,min,q1,median,q3,max,mean\n");
        for g in &report.groups {
            for &feature in &report.features {
                for channel in &report.channel_names {
                    if let Some(b) = report.kl_box(g.index, feature, channel) {
                        let _ = writeln!(
                            body,
                            "{},{},{},{feature},{channel},{},{},{},{},{},{},{}",
                            g.label(),
                            g.first_epoch,
                            g.last_epoch,
                            b.count,
                            b.min,
                            b.q1,
                            b.median,
                            b.q3,
                            b.max,
                            b.mean
                        );
                    }
                }
            }
        }
        put("kl_groups.csv".into(), body)?;
    }

    if emit.aa {
        let channels: Vec<Option<&str>> = match report.aa_representation {
            AaRepresentation::ChannelVector => vec![None],
            AaRepresentation::PerChannel => report.channel_names.iter().map(|c| Some(c.as_str())).collect(),
        };
        for &feature in &report.features {
            let mut body = String::from("epoch,group,channel,aa,term_ts,term_st,n\n");
            for r in report.aa.iter().filter(|r| r.feature == feature) {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{},{},{}",
                    r.epoch,
                    report.groups[r.group].label(),
                    r.channel.as_deref().unwrap_or("all"),
                    r.result.value,
                    r.result.term_ts,
                    r.result.term_st,
                    r.result.n
                );
            }
            put(format!("aa_{feature}.csv"), body)?;
            if emit.svg {
                for ch in &channels {
                    let boxes: Vec<(String, Option<BoxStats>)> = report
                        .groups
                        .iter()
                        .map(|g| (g.label(), report.aa_box(g.index, feature, *ch)))
                        .collect();
                    let name = match ch {
                        None => format!("aa_{feature}.svg"),
                        Some(c) => format!("aa_{feature}_{c}.svg"),
                    };
                    put(name, box_plot_svg(&format!("Adversarial Accuracy: {feature}"), &boxes))?;
                }
            }
        }
        let mut body = String::from("group,first_epoch,last_epoch,feature,channel,count,min,q1,median,q3,max,mean\n");
        for g in &report.groups {
            for &feature in &report.features {
                for ch in &channels {
                    if let Some(b) = report.aa_box(g.index, feature, *ch) {
                        let _ = writeln!(
                            body,
                            "{},{},{},{feature},{},{},{},{},{},{},{},{}",
                            g.label(),
                            g.first_epoch,
                            g.last_epoch,
                            ch.unwrap_or("all"),
                            b.count,
                            b.min,
                            b.q1,
                            b.median,
                            b.q3,
                            b.max,
                            b.mean
                        );
                    }
                }
            }
        }
        put("aa_groups.csv".into(), body)?;
    }

    let mut body = String::from("group,first_epoch,last_epoch,mean_kl");
    for f in &report.features {
        let _ = write!(body, ",mean_aa_{f}");
    }
    body.push('\n');
    let mean_kl = report.mean_kl_by_group();
    let mean_aa: Vec<Vec<Option<f64>>> = report.features.iter().map(|&f| report.mean_aa_by_group(f)).collect();
    for (i, g) in report.groups.iter().enumerate() {
        let _ = write!(body, "{},{},{},{}", g.label(), g.first_epoch, g.last_epoch, fmt_opt(mean_kl[i]));
        for col in &mean_aa {
            let _ = write!(body, ",{}", fmt_opt(col[i]));
        }
        body.push('\n');
    }
    put("groups_summary.csv".into(), body)?;

    let selection = serde_json::json!({
        "schema_version": 1,
        "selected_group": report.selected_group().map(|g| g.label()),
        "evaluated_epochs": report.epochs,
        "gaps": report.gaps,
    });
    put("selection.json".into(), format!("{selection:#}\n"))?;
    Ok(written)
}
