use serde::{Deserialize, Serialize};

use super::{Dataset, MvtsSample};
use crate::error::{shape_err, Error, Result};

/// Fills missing values channel by channel.
///
/// Interior gaps are linearly interpolated between the nearest observed
/// neighbours; leading and trailing gaps take the nearest observed value.
pub fn impute_linear(sample: &MvtsSample) -> Result<MvtsSample> {
    let mut out = sample.clone();
    if !sample.has_missing() {
        return Ok(out);
    }
    let t_len = sample.timesteps();
    for p in 0..sample.channels() {
        let observed: Vec<usize> = (0..t_len).filter(|&t| !sample.is_missing(t, p)).collect();
        if observed.len() < 2 {
            return Err(Error::Imputation {
                sample: sample.id.clone(),
                channel: format!("#{p}"),
                valid: observed.len(),
            });
        }
        if observed.len() == t_len {
            continue;
        }
        let column = sample.channel(p);
        let mut filled = column.clone();
        let first = observed[0];
        let last = *observed.last().unwrap();
        for v in filled.iter_mut().take(first) {
            *v = column[first];
        }
        for v in filled.iter_mut().skip(last + 1) {
            *v = column[last];
        }
        for pair in observed.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (ya, yb) = (column[a], column[b]);
            let span = (b - a) as f64;
            for t in a + 1..b {
                let w = (t - a) as f64 / span;
                filled[t] = ya + w * (yb - ya);
            }
        }
        out.set_channel(p, &filled);
    }
    Ok(out)
}

/// Observed `(min, max)` of one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

/// Per-channel ranges fitted on a training partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub channels: Vec<ChannelRange>,
}

impl ScalingParams {
    /// Maps scaled values back to physical units. Degenerate channels
    /// (`min == max`) map back to their constant.
    pub fn inverse(&self, sample: &MvtsSample) -> Result<MvtsSample> {
        self.check(sample)?;
        let mut out = sample.clone();
        let p_len = sample.channels();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            let r = self.channels[i % p_len];
            *v = if r.max == r.min {
                r.min
            } else {
                (*v + 1.0) * 0.5 * (r.max - r.min) + r.min
            };
        }
        Ok(out)
    }

    fn check(&self, sample: &MvtsSample) -> Result<()> {
        if sample.channels() != self.channels.len() {
            return shape_err(format!(
                "scaler fitted on {} channels, sample '{}' has {}",
                self.channels.len(),
                sample.id,
                sample.channels()
            ));
        }
        Ok(())
    }
}

/// Per-channel `(min, max)` over every sample and timestep of `train`.
pub fn fit_scaler(train: &Dataset) -> Result<ScalingParams> {
    if train.is_empty() {
        return Err(Error::Config("cannot fit scaler on an empty dataset".into()));
    }
    let p_len = train.channels();
    let mut ranges = vec![
        ChannelRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        p_len
    ];
    for s in &train.samples {
        if s.has_missing() {
            return Err(Error::State(format!(
                "sample '{}' must be imputed before fitting the scaler",
                s.id
            )));
        }
        for row in s.values().chunks(p_len) {
            for (r, &v) in ranges.iter_mut().zip(row) {
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
    }
    Ok(ScalingParams { channels: ranges })
}

/// `x' = 2 (x - min) / (max - min) - 1`, clamped to `[-1, 1]`; a constant
/// channel maps to 0.
pub fn apply_scaler(sample: &MvtsSample, params: &ScalingParams) -> Result<MvtsSample> {
    params.check(sample)?;
    let mut out = sample.clone();
    let p_len = sample.channels();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let r = params.channels[i % p_len];
        *v = if r.max == r.min {
            0.0
        } else {
            (2.0 * (*v - r.min) / (r.max - r.min) - 1.0).clamp(-1.0, 1.0)
        };
    }
    Ok(out)
}
