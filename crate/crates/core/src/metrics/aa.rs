use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nearest-neighbour Adversarial Accuracy between a real set `T` and a
/// synthetic set `S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaResult {
    /// `(term_ts + term_st) / 2`.
    pub value: f64,
    /// Fraction of real points whose nearest synthetic point is farther
    /// than their nearest other real point.
    pub term_ts: f64,
    /// Same with the roles of the sets swapped.
    pub term_st: f64,
    pub n: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fraction of `queries` whose nearest neighbour in `other` is strictly
/// farther than their nearest neighbour among the remaining `queries`.
fn farther_fraction(queries: &[Vec<f64>], other: &[Vec<f64>]) -> f64 {
    let hits = queries
        .par_iter()
        .enumerate()
        .filter(|(i, q)| {
            let d_other = other
                .iter()
                .map(|o| euclidean(q, o))
                .fold(f64::INFINITY, f64::min);
            let d_self = queries
                .iter()
                .enumerate()
                .filter(|(j, _)| j != i)
                .map(|(_, o)| euclidean(q, o))
                .fold(f64::INFINITY, f64::min);
            d_other > d_self
        })
        .count();
    hits as f64 / queries.len() as f64
}

/// Adversarial Accuracy with Euclidean distance. Ties count as "not farther".
pub fn adversarial_accuracy(real: &[Vec<f64>], synthetic: &[Vec<f64>]) -> Result<AaResult> {
    let n = real.len();
    if n != synthetic.len() {
        return Err(Error::Metric(format!(
            "adversarial accuracy needs equal set sizes, got {n} real and {} synthetic",
            synthetic.len()
        )));
    }
    if n < 2 {
        return Err(Error::Metric(format!(
            "adversarial accuracy needs at least 2 points per set, got {n}"
        )));
    }
    let k = real[0].len();
    if k == 0 || real.iter().chain(synthetic).any(|v| v.len() != k) {
        return Err(Error::Metric("adversarial accuracy needs equal, non-zero dimensions".into()));
    }
    let term_ts = farther_fraction(real, synthetic);
    let term_st = farther_fraction(synthetic, real);
    Ok(AaResult {
        value: 0.5 * (term_ts + term_st),
        term_ts,
        term_st,
        n,
    })
}
