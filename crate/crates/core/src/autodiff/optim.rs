use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM_DEFAULT: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// Optimizer with its per-parameter moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    steps: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            steps: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::ADAM_DEFAULT, learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in store.params_mut() {
                    for (v, g) in p.value.data_mut().iter_mut().zip(&p.grad) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.is_empty() {
                    self.first_moment = store.params().iter().map(|p| vec![0.0; p.grad.len()]).collect();
                    self.second_moment = self.first_moment.clone();
                }
                if self.first_moment.len() != store.len()
                    || self
                        .first_moment
                        .iter()
                        .zip(store.params())
                        .any(|(m, p)| m.len() != p.grad.len())
                {
                    return Err(Error::State("optimizer moments do not match parameter set".into()));
                }
                let t = (self.steps + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, m), v) in store
                    .params_mut()
                    .iter_mut()
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for (((w, &g), mi), vi) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(&p.grad)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar_store(v: f64, g: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::scalar(v)).unwrap();
        s.params_mut()[0].grad[0] = g;
        s
    }

    #[test]
    fn zero_grad_leaves_params() {
        for mut opt in [Optimizer::sgd(0.1), Optimizer::adam(0.1)] {
            let mut s = scalar_store(1.5, 0.0);
            opt.step(&mut s).unwrap();
            assert_eq!(s.get(0).value.item(), 1.5);
        }
    }

    #[test]
    fn sgd_rule() {
        let mut s = scalar_store(1.0, 2.0);
        Optimizer::sgd(0.1).step(&mut s).unwrap();
        assert!((s.get(0).value.item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_hand_trace() {
        // m1 = 0.1 g, v1 = 0.001 g^2; m_hat = g, v_hat = g^2
        // update = lr * g / (|g| + eps)
        let (lr, g) = (0.1, 2.0);
        let mut s = scalar_store(1.0, g);
        Optimizer::adam(lr).step(&mut s).unwrap();
        let expected = 1.0 - lr * g / (g + 1e-8);
        assert!((s.get(0).value.item() - expected).abs() < 1e-15);
        assert!(((1.0 - s.get(0).value.item()) - lr).abs() < 1e-8);
    }

    #[test]
    fn adam_second_step_hand_trace() {
        let (lr, b1, b2, eps) = (0.05, 0.9f64, 0.999f64, 1e-8);
        let grads = [1.0, -3.0];
        let mut s = scalar_store(0.0, grads[0]);
        let mut opt = Optimizer::adam(lr);
        opt.step(&mut s).unwrap();
        s.params_mut()[0].grad[0] = grads[1];
        opt.step(&mut s).unwrap();

        let (mut m, mut v, mut w) = (0.0, 0.0, 0.0);
        for (t, g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((s.get(0).value.item() - w).abs() < 1e-15);
        assert_eq!(opt.steps(), 2);
    }
}
