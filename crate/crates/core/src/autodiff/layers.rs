use rand::Rng;

use super::graph::{Graph, ParamStore, Var};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Uniform `(-k, k)` with `k = 1 / sqrt(fan_in)`.
fn init_weight(rng: &mut impl Rng, fan_in: usize, shape: &[usize]) -> Tensor {
    let k = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-k..k))
}

/// Fully connected layer `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    weight: usize,
    bias: usize,
}

impl DenseLayer {
    /// Registers `{name}.weight` `[in × out]` and `{name}.bias` `[out]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = init_weight(rng, input_dim, &[input_dim, output_dim]);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[output_dim]))?;
        Ok(Self {
            input_dim,
            output_dim,
            weight,
            bias,
        })
    }

    pub fn weight_index(&self) -> usize {
        self.weight
    }

    pub fn bias_index(&self) -> usize {
        self.bias
    }

    /// `x: [B × in]` to `[B × out]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.shape(x).len() != 2 || g.shape(x)[1] != self.input_dim {
            return shape_err(format!(
                "dense layer expects [B x {}], got {:?}",
                self.input_dim,
                g.shape(x)
            ));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_bias(xw, b)
    }

    /// Applies the layer independently at every timestep of `[B × T × in]`.
    pub fn forward_seq(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 {
            return shape_err(format!("dense sequence input must be [B x T x F], got {s:?}"));
        }
        let flat = g.reshape(x, &[s[0] * s[1], s[2]])?;
        let y = self.forward(g, store, flat)?;
        g.reshape(y, &[s[0], s[1], self.output_dim])
    }
}

/// Output of [`LstmLayer::forward`].
#[derive(Clone, Debug)]
pub struct LstmOutput {
    /// Hidden states `[B × T × H]`.
    pub sequence: Var,
    /// Final hidden state `[B × H]`.
    pub last: Var,
}

/// Single-layer LSTM.
///
/// The four gates share fused matrices: `input_weight [in × 4H]`,
/// `hidden_weight [H × 4H]` and `bias [4H]`, column blocks ordered
/// input, forget, candidate, output.
///
/// ```text
/// z_t = x_t W_x + h_{t-1} W_h + b
/// i = σ(z[0]), f = σ(z[1]), g = tanh(z[2]), o = σ(z[3])
/// c_t = f ⊙ c_{t-1} + i ⊙ g
/// h_t = o ⊙ tanh(c_t)
/// ```
///
/// with `h_0 = c_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    input_weight: usize,
    hidden_weight: usize,
    bias: usize,
}

impl LstmLayer {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias except `+1` on the forget gate.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let wx = init_weight(rng, input_dim, &[input_dim, 4 * hidden]);
        let wh = init_weight(rng, hidden, &[hidden, 4 * hidden]);
        let bias = Tensor::from_fn(&[4 * hidden], |i| if (hidden..2 * hidden).contains(&i) { 1.0 } else { 0.0 });
        Ok(Self {
            input_dim,
            hidden,
            input_weight: store.add(format!("{name}.input_weight"), wx)?,
            hidden_weight: store.add(format!("{name}.hidden_weight"), wh)?,
            bias: store.add(format!("{name}.bias"), bias)?,
        })
    }

    pub fn param_indices(&self) -> [usize; 3] {
        [self.input_weight, self.hidden_weight, self.bias]
    }

    /// Runs the recurrence over `x: [B × T × in]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<LstmOutput> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.input_dim || s[1] == 0 {
            return shape_err(format!(
                "lstm expects [B x T x {}] with T >= 1, got {s:?}",
                self.input_dim
            ));
        }
        let h_len = self.hidden;
        let wx = g.param(store, self.input_weight);
        let wh = g.param(store, self.hidden_weight);
        let b = g.param(store, self.bias);

        let mut h: Option<Var> = None;
        let mut c: Option<Var> = None;
        let mut steps = Vec::with_capacity(s[1]);
        for t in 0..s[1] {
            let xt = g.select_step(x, t)?;
            let mut z = g.matmul(xt, wx)?;
            if let Some(h_prev) = h {
                let hz = g.matmul(h_prev, wh)?;
                z = g.add(z, hz)?;
            }
            let z = g.add_bias(z, b)?;
            let zi = g.slice_cols(z, 0, h_len)?;
            let zf = g.slice_cols(z, h_len, h_len)?;
            let zg = g.slice_cols(z, 2 * h_len, h_len)?;
            let zo = g.slice_cols(z, 3 * h_len, h_len)?;
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let cand = g.tanh(zg);
            let o = g.sigmoid(zo);
            let ig = g.mul(i, cand)?;
            let c_new = match c {
                Some(c_prev) => {
                    let fc = g.mul(f, c_prev)?;
                    g.add(fc, ig)?
                }
                None => ig,
            };
            let tc = g.tanh(c_new);
            let h_new = g.mul(o, tc)?;
            steps.push(h_new);
            h = Some(h_new);
            c = Some(c_new);
        }
        let sequence = g.stack_steps(&steps)?;
        Ok(LstmOutput {
            sequence,
            last: *steps.last().unwrap(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_all(store: &mut ParamStore, v: f64) {
        for p in store.params_mut() {
            p.value.data_mut().iter_mut().for_each(|x| *x = v);
        }
    }

    #[test]
    fn dense_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = DenseLayer::new(&mut store, "d", 3, 3, &mut rng).unwrap();
        let w = &mut store.params_mut()[layer.weight_index()].value;
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            *v = if i % 4 == 0 { 1.0 } else { 0.0 };
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -4.0, 5.0, -6.0]).unwrap());
        let y = layer.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn dense_zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = DenseLayer::new(&mut store, "d", 3, 2, &mut rng).unwrap();
        store.params_mut()[layer.bias_index()].value.data_mut().copy_from_slice(&[0.5, -1.5]);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let y = layer.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -1.5, 0.5, -1.5]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = DenseLayer::new(&mut store, "d", 3, 2, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 4]));
        assert!(layer.forward(&mut g, &store, x).is_err());
    }

    #[test]
    fn lstm_zero_weights_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let lstm = LstmLayer::new(&mut store, "l", 2, 3, &mut rng).unwrap();
        set_all(&mut store, 0.0);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[2, 4, 2], |i| i as f64 - 3.0));
        let out = lstm.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(out.sequence), &[2, 4, 3]);
        assert!(g.value(out.sequence).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_is_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let lstm = LstmLayer::new(&mut store, "l", 2, 2, &mut rng).unwrap();
        let x = [0.3, -0.7];
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![1, 1, 2], x.to_vec()).unwrap());
        let out = lstm.forward(&mut g, &store, xv).unwrap();
        let [wx, _, b] = lstm.param_indices();
        let (wx, b) = (store.get(wx).value.data(), store.get(b).value.data());
        for j in 0..2 {
            let z = |gate: usize| {
                let col = gate * 2 + j;
                x[0] * wx[col] + x[1] * wx[8 + col] + b[col]
            };
            let c = sigmoid(z(0)) * z(2).tanh();
            let h = sigmoid(z(3)) * c.tanh();
            assert!((g.value(out.last).data()[j] - h).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let lstm = LstmLayer::new(&mut store, "l", 2, 3, &mut rng).unwrap();
        let b = store.get(lstm.param_indices()[2]).value.data();
        assert_eq!(b, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
