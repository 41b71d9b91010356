//! Soft-margin C-SVM with an RBF kernel, trained by sequential minimal
//! optimization using second-order working-set selection.
//!
//! The dual is `min ½ αᵀQα − eᵀα` subject to `0 ≤ α ≤ C`, `yᵀα = 0`, with
//! `Q_ij = y_i y_j K(x_i, x_j)`. The solver stops when the maximal KKT
//! violation `m(α) − M(α)` falls below the configured tolerance.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Box constraint.
    pub c: f64,
    /// RBF width in `exp(-γ ‖a − b‖²)`.
    pub gamma: f64,
    /// Stopping tolerance on the KKT gap.
    pub tolerance: f64,
    /// Iteration cap, in multiples of the training-set size.
    pub max_passes: usize,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 0.25,
            gamma: 0.25,
            tolerance: 1e-3,
            max_passes: 1000,
            cache_mb: 512,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("gamma", self.gamma), ("tolerance", self.tolerance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("SVM {name} must be positive, got {v}")));
            }
        }
        if self.max_passes == 0 {
            return Err(Error::Config("SVM max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// `exp(-γ ‖a − b‖²)`.
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    /// Position of each support vector in the training set.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `Σ α_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, &a)| a * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_values(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_dims(xs)?;
        Ok(xs.par_iter().map(|x| self.decision_value(x)).collect())
    }

    fn check_dims(&self, xs: &[Vec<f64>]) -> Result<()> {
        let d = self.dim();
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return shape_err(format!("model expects {d} features, got {}", x.len()));
        }
        Ok(())
    }

    /// Dual variable of training point `i` (zero for non-support vectors).
    pub fn alpha_of(&self, i: usize) -> f64 {
        self.support_indices
            .iter()
            .position(|&s| s == i)
            .map_or(0.0, |k| self.dual_coef[k].abs())
    }
}

/// `±1` labels; an exact zero decision value maps to `+1`.
pub fn svm_predict(model: &SvmModel, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(model
        .decision_values(xs)?
        .into_iter()
        .map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cache_mb: usize) -> Self {
        let n = x.len();
        let capacity = ((cache_mb << 20) / (8 * n.max(1))).max(2);
        Self {
            x,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    /// Computes row `i` if absent, never evicting row `keep`.
    fn ensure(&mut self, i: usize, keep: Option<usize>) {
        if self.rows[i].is_some() {
            return;
        }
        if self.order.len() >= self.capacity {
            if self.order.front().copied() == keep {
                self.order.rotate_left(1);
            }
            if let Some(old) = self.order.pop_front() {
                self.rows[old] = None;
            }
        }
        let xi = &self.x[i];
        let gamma = self.gamma;
        let row: Vec<f64> = self.x.iter().map(|xj| rbf(xi, xj, gamma)).collect();
        self.rows[i] = Some(row);
        self.order.push_back(i);
    }

    fn row(&self, i: usize) -> &[f64] {
        self.rows[i].as_deref().expect("row ensured")
    }
}

/// Trains on features `x` with labels `y ∈ {-1, +1}`.
pub fn svm_train(x: &[Vec<f64>], y: &[f64], cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.validate()?;
    let n = x.len();
    if n != y.len() {
        return shape_err(format!("{n} feature vectors but {} labels", y.len()));
    }
    if n == 0 {
        return Err(Error::Svm("empty training set".into()));
    }
    let d = x[0].len();
    if x.iter().any(|v| v.len() != d) {
        return shape_err("feature vectors of unequal length");
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Svm("non-finite feature value".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Svm("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Svm("training set must contain both classes".into()));
    }

    let c = cfg.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut kernel = KernelRows::new(x, cfg.gamma, cfg.cache_mb);
    // RBF diagonal is exactly one
    let qd = 1.0;
    let max_iter = cfg.max_passes.saturating_mul(n).max(10_000);
    let mut iterations = 0;
    let mut converged = false;

    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    while iterations < max_iter {
        // first index: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        kernel.ensure(i, None);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        {
            let ki = kernel.row(i);
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let yg = y[t] * grad[t];
                gmax2 = gmax2.max(yg);
                let grad_diff = gmax + yg;
                if grad_diff > 0.0 {
                    let quad = (qd + qd - 2.0 * ki[t]).max(TAU);
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        if gmax + gmax2 < cfg.tolerance {
            converged = true;
            break;
        }
        let Some(j) = j_sel else {
            converged = true;
            break;
        };
        let kij = kernel.row(i)[j];

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (qd + qd - 2.0 * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd + qd - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        kernel.ensure(j, Some(i));
        let (ki, kj) = (kernel.row(i), kernel.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
        iterations += 1;
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance {}", cfg.tolerance);
    }

    // bias from free variables, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };

    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: support_indices.iter().map(|&t| x[t].clone()).collect(),
        dual_coef: support_indices.iter().map(|&t| alpha[t] * y[t]).collect(),
        support_indices,
        bias: -rho,
        gamma: cfg.gamma,
        c,
        iterations,
        converged,
    })
}

/// Largest violation of the soft-margin KKT conditions over the training set:
/// `α = 0 ⇒ y f ≥ 1`, `0 < α < C ⇒ y f = 1`, `α = C ⇒ y f ≤ 1`.
pub fn kkt_max_violation(model: &SvmModel, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let f = model.decision_values(x)?;
    let mut alpha = vec![0.0; x.len()];
    for (&i, &a) in model.support_indices.iter().zip(&model.dual_coef) {
        alpha[i] = a.abs();
    }
    let eps = 1e-12 * model.c;
    Ok(f.iter()
        .zip(y)
        .zip(&alpha)
        .map(|((&fi, &yi), &a)| {
            let m = yi * fi;
            if a <= eps {
                (1.0 - m).max(0.0)
            } else if a >= model.c - eps {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![-1.0, -1.0, 1.0, 1.0],
        )
    }

    #[test]
    fn xor_layout_separated() {
        let (x, y) = xor();
        let cfg = SvmConfig {
            c: 10.0,
            gamma: 2.0,
            ..Default::default()
        };
        let m = svm_train(&x, &y, &cfg).unwrap();
        assert_eq!(svm_predict(&m, &x).unwrap(), y);
        assert!(kkt_max_violation(&m, &x, &y).unwrap() <= 1e-3);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(svm_train(&x, &[1.0, 1.0], &SvmConfig::default()), Err(Error::Svm(_))));
    }

    #[test]
    fn conflicting_duplicates_stay_bounded() {
        let x = vec![vec![0.5, 0.5]; 6];
        let y = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let cfg = SvmConfig::default();
        let m = svm_train(&x, &y, &cfg).unwrap();
        assert!(m.dual_coef.iter().all(|a| a.abs() <= cfg.c + 1e-15));
        assert!(m.bias.is_finite());
    }

    #[test]
    fn dimension_mismatch_on_predict() {
        let (x, y) = xor();
        let m = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        assert!(svm_predict(&m, &[vec![0.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn zero_decision_is_positive() {
        let m = SvmModel {
            support_vectors: vec![vec![0.0]],
            dual_coef: vec![0.0],
            support_indices: vec![0],
            bias: 0.0,
            gamma: 1.0,
            c: 1.0,
            iterations: 0,
            converged: true,
        };
        assert_eq!(svm_predict(&m, &[vec![3.0]]).unwrap(), vec![1.0]);
    }

    #[test]
    fn tiny_cache_gives_same_model() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|v| if v[0] + 0.3 * v[1] > 0.1 { 1.0 } else { -1.0 }).collect();
        let big = svm_train(&x, &y, &SvmConfig { c: 1.0, gamma: 1.0, ..Default::default() }).unwrap();
        let small = svm_train(&x, &y, &SvmConfig { c: 1.0, gamma: 1.0, cache_mb: 0, ..Default::default() }).unwrap();
        assert_eq!(big, small);
    }
}
