use super::{FeatureKind, MvtsSample};

/// Per-channel statistic over the time axis; one value per channel.
pub fn extract_feature(sample: &MvtsSample, kind: FeatureKind) -> Vec<f64> {
    (0..sample.channels())
        .map(|p| {
            let col = sample.channel(p);
            match kind {
                FeatureKind::Mean => mean(&col),
                FeatureKind::Median => median(&col),
                FeatureKind::StdDev => population_std(&col),
            }
        })
        .collect()
}

/// `extract_feature` for every sample.
pub fn extract_features(samples: &[MvtsSample], kind: FeatureKind) -> Vec<Vec<f64>> {
    samples.iter().map(|s| extract_feature(s, kind)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median; even lengths average the two middle order statistics.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard deviation with denominator `n`.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
