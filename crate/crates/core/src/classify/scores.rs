use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with flares as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    /// Tallies `±1` predictions against `±1` truth.
    pub fn from_labels(truth: &[f64], predicted: &[f64]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} truth labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t > 0.0, p > 0.0) {
                (true, true) => m.tp += 1,
                (true, false) => m.fn_ += 1,
                (false, true) => m.fp += 1,
                (false, false) => m.tn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// True Skill Statistic, `tp/(tp+fn) − fp/(fp+tn)`.
    pub fn tss(&self) -> Result<f64> {
        let (tp, fn_, fp, tn) = self.as_f64();
        if tp + fn_ == 0.0 {
            return Err(Error::UndefinedScore("TSS needs at least one positive example".into()));
        }
        if fp + tn == 0.0 {
            return Err(Error::UndefinedScore("TSS needs at least one negative example".into()));
        }
        Ok(tp / (tp + fn_) - fp / (fp + tn))
    }

    /// Heidke Skill Score,
    /// `2(tp·tn − fn·fp) / ((tp+fn)(fn+tn) + (fp+tn)(tp+fp))`.
    pub fn hss2(&self) -> Result<f64> {
        let (tp, fn_, fp, tn) = self.as_f64();
        let denom = (tp + fn_) * (fn_ + tn) + (fp + tn) * (tp + fp);
        if denom == 0.0 {
            return Err(Error::UndefinedScore("HSS2 denominator is zero".into()));
        }
        Ok(2.0 * (tp * tn - fn_ * fp) / denom)
    }

    fn as_f64(&self) -> (f64, f64, f64, f64) {
        (self.tp as f64, self.fn_ as f64, self.fp as f64, self.tn as f64)
    }
}
