use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::error::{Error, Result};

/// Number of equal-width bins used for feature distributions.
pub const DEFAULT_BINS: usize = 20;

/// Pseudo-count added to every bin before normalising.
pub const KL_PSEUDO_COUNT: f64 = 1.0;

/// Equal-width histogram of a per-sample statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub feature: Option<FeatureKind>,
    pub channel: Option<String>,
}

impl FeatureDistribution {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn with_label(mut self, feature: FeatureKind, channel: impl Into<String>) -> Self {
        self.feature = Some(feature);
        self.channel = Some(channel.into());
        self
    }

    /// Add-one smoothed bin probabilities.
    pub fn smoothed(&self) -> Vec<f64> {
        let denom = self.total as f64 + KL_PSEUDO_COUNT * self.bins() as f64;
        self.counts
            .iter()
            .map(|&c| (c as f64 + KL_PSEUDO_COUNT) / denom)
            .collect()
    }
}

/// Range over which the bins are laid out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BinRange {
    /// `[lo, hi]`; every value must fall inside.
    Fixed(f64, f64),
    /// Min and max of the values themselves.
    FromValues,
}

/// Common `[min, max]` of two samples. [`bin_features`] widens a
/// zero-width range by `±0.5`.
pub fn shared_range(a: &[f64], b: &[f64]) -> Result<BinRange> {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Metric("cannot bin an empty or non-finite sample".into()));
    }
    Ok(BinRange::Fixed(lo, hi))
}

/// Counts `values` into `bins` equal-width bins. Bins are right-open except
/// the last, which is closed.
pub fn bin_features(values: &[f64], range: BinRange, bins: usize) -> Result<FeatureDistribution> {
    if values.is_empty() {
        return Err(Error::Metric("cannot bin an empty sample".into()));
    }
    if bins == 0 {
        return Err(Error::Metric("bin count must be positive".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Metric(format!("non-finite value {v} in histogram input")));
    }
    let (mut lo, mut hi) = match range {
        BinRange::Fixed(lo, hi) => (lo, hi),
        BinRange::FromValues => match shared_range(values, &[])? {
            BinRange::Fixed(lo, hi) => (lo, hi),
            BinRange::FromValues => unreachable!(),
        },
    };
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Metric(format!("invalid bin range [{lo}, {hi}]")));
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);

    let mut counts = vec![0u64; bins];
    for &v in values {
        if v < lo || v > hi {
            return Err(Error::Metric(format!("value {v} outside bin range [{lo}, {hi}]")));
        }
        let mut idx = (((v - lo) / width) as usize).min(bins - 1);
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(FeatureDistribution {
        bin_edges: edges,
        counts,
        total: values.len() as u64,
        feature: None,
        channel: None,
    })
}

/// Bins two samples on their shared range.
pub fn bin_pair(
    real: &[f64],
    synthetic: &[f64],
    bins: usize,
) -> Result<(FeatureDistribution, FeatureDistribution)> {
    let range = shared_range(real, synthetic)?;
    Ok((bin_features(real, range, bins)?, bin_features(synthetic, range, bins)?))
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)` over add-one smoothed histograms.
pub fn kl_divergence(p: &FeatureDistribution, q: &FeatureDistribution) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::Metric("KL divergence needs identical bin edges".into()));
    }
    let (ps, qs) = (p.smoothed(), q.smoothed());
    let kl: f64 = ps.iter().zip(&qs).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum();
    // rounding can leave a tiny negative residue on identical inputs
    Ok(kl.max(0.0))
}
