use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DenseLayer, Graph, LstmLayer, ParamStore, Tensor, Var};
use crate::data::{one_hot, ClassLabel};
use crate::error::{shape_err, Result};

/// Width of the one-hot condition.
pub const CONDITION_DIM: usize = 2;

/// Architecture hyperparameters shared by both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub latent_dim: usize,
    pub hidden: usize,
    /// `P`, the number of data channels.
    pub channels: usize,
}

/// LSTM over `[z, c]`, per-timestep dense head to `P` channels, `tanh` squash.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub store: ParamStore,
    lstm: LstmLayer,
    head: DenseLayer,
    latent_dim: usize,
}

impl Generator {
    pub fn new(shape: &ModelShape, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let lstm = LstmLayer::new(&mut store, "generator.lstm", shape.latent_dim + CONDITION_DIM, shape.hidden, rng)?;
        let head = DenseLayer::new(&mut store, "generator.dense", shape.hidden, shape.channels, rng)?;
        Ok(Self {
            store,
            lstm,
            head,
            latent_dim: shape.latent_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn channels(&self) -> usize {
        self.head.output_dim
    }

    /// `z: [B × T × latent]`, `c: [B × T × 2]` to `[B × T × P]` in `(-1, 1)`.
    pub fn forward(&self, g: &mut Graph, z: Var, c: Var) -> Result<Var> {
        let (sz, sc) = (g.shape(z), g.shape(c));
        if sz.len() != 3 || sz[2] != self.latent_dim || sc.len() != 3 || sc[..2] != sz[..2] || sc[2] != CONDITION_DIM {
            return shape_err(format!(
                "generator expects z [B x T x {}] and c [B x T x 2], got {sz:?} and {sc:?}",
                self.latent_dim
            ));
        }
        let input = g.concat_last(z, c)?;
        let hidden = self.lstm.forward(g, &self.store, input)?;
        let out = self.head.forward_seq(g, &self.store, hidden.sequence)?;
        Ok(g.tanh(out))
    }

    /// Synthetic batch for fixed `z` and `c`.
    pub fn generate(&self, z: &Tensor, c: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let cv = g.constant(c.clone());
        let out = self.forward(&mut g, zv, cv)?;
        Ok(g.value(out).clone())
    }
}

/// LSTM over `[x, c]`, dense head on the final hidden state, sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub store: ParamStore,
    lstm: LstmLayer,
    head: DenseLayer,
    channels: usize,
}

impl Discriminator {
    pub fn new(shape: &ModelShape, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let lstm = LstmLayer::new(&mut store, "discriminator.lstm", shape.channels + CONDITION_DIM, shape.hidden, rng)?;
        let head = DenseLayer::new(&mut store, "discriminator.dense", shape.hidden, 1, rng)?;
        Ok(Self {
            store,
            lstm,
            head,
            channels: shape.channels,
        })
    }

    /// `x: [B × T × P]`, `c: [B × T × 2]` to realness probabilities `[B]`.
    pub fn forward(&self, g: &mut Graph, x: Var, c: Var) -> Result<Var> {
        let (sx, sc) = (g.shape(x), g.shape(c));
        if sx.len() != 3 || sx[2] != self.channels || sc.len() != 3 || sc[..2] != sx[..2] || sc[2] != CONDITION_DIM {
            return shape_err(format!(
                "discriminator expects x [B x T x {}] and c [B x T x 2], got {sx:?} and {sc:?}",
                self.channels
            ));
        }
        let batch = sx[0];
        let input = g.concat_last(x, c)?;
        let hidden = self.lstm.forward(g, &self.store, input)?;
        let logit = self.head.forward(g, &self.store, hidden.last)?;
        let p = g.sigmoid(logit);
        g.reshape(p, &[batch])
    }

    pub fn discriminate(&self, x: &Tensor, c: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let cv = g.constant(c.clone());
        let out = self.forward(&mut g, xv, cv)?;
        Ok(g.value(out).clone())
    }
}

/// Generator and discriminator pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CganModel {
    pub shape: ModelShape,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl CganModel {
    /// Generator weights are drawn before discriminator weights.
    pub fn new(shape: ModelShape, rng: &mut impl Rng) -> Result<Self> {
        let generator = Generator::new(&shape, rng)?;
        let discriminator = Discriminator::new(&shape, rng)?;
        Ok(Self {
            shape,
            generator,
            discriminator,
        })
    }
}

/// I.i.d. standard normal latent batch `[B × T × latent]`.
pub fn sample_latent(rng: &mut impl Rng, batch: usize, timesteps: usize, latent_dim: usize) -> Tensor {
    Tensor::from_fn(&[batch, timesteps, latent_dim], |_| rng.sample(StandardNormal))
}

/// Stacks one-hot conditions into `[B × T × 2]`.
pub fn condition_batch(labels: &[ClassLabel], timesteps: usize) -> Tensor {
    let mut data = Vec::with_capacity(labels.len() * timesteps * CONDITION_DIM);
    for &l in labels {
        data.extend(one_hot(l, timesteps).to_matrix());
    }
    Tensor::new(vec![labels.len(), timesteps, CONDITION_DIM], data).expect("condition shape")
}

/// Records the discriminator loss
/// `BCE(D(real | c_real), 1) + BCE(D(G(z | c_synth) | c_synth), 0)`.
///
/// The generator is bound through a frozen store, so only the
/// discriminator receives gradients.
pub fn discriminator_loss_graph(
    g: &mut Graph,
    model: &CganModel,
    real: &Tensor,
    c_real: &Tensor,
    z: &Tensor,
    c_synth: &Tensor,
) -> Result<Var> {
    g.freeze(&model.generator.store);
    g.unfreeze(&model.discriminator.store);
    let real_v = g.constant(real.clone());
    let c_real_v = g.constant(c_real.clone());
    let z_v = g.constant(z.clone());
    let c_synth_v = g.constant(c_synth.clone());
    let fake = model.generator.forward(g, z_v, c_synth_v)?;

    let p_real = model.discriminator.forward(g, real_v, c_real_v)?;
    let ones = g.constant(Tensor::from_fn(&[real.shape()[0]], |_| 1.0));
    let loss_real = g.bce(p_real, ones)?;

    let p_fake = model.discriminator.forward(g, fake, c_synth_v)?;
    let zeros = g.constant(Tensor::zeros(&[z.shape()[0]]));
    let loss_fake = g.bce(p_fake, zeros)?;
    g.add(loss_real, loss_fake)
}

/// Records the generator loss `BCE(D(G(z | c) | c), 1)`. Gradients flow
/// through the discriminator into the generator; the discriminator store
/// is frozen.
pub fn generator_loss_graph(g: &mut Graph, model: &CganModel, z: &Tensor, c: &Tensor) -> Result<Var> {
    g.freeze(&model.discriminator.store);
    g.unfreeze(&model.generator.store);
    let z_v = g.constant(z.clone());
    let c_v = g.constant(c.clone());
    let fake = model.generator.forward(g, z_v, c_v)?;
    let p = model.discriminator.forward(g, fake, c_v)?;
    let ones = g.constant(Tensor::from_fn(&[z.shape()[0]], |_| 1.0));
    g.bce(p, ones)
}

/// Value of [`discriminator_loss_graph`].
pub fn discriminator_loss(model: &CganModel, real: &Tensor, c_real: &Tensor, z: &Tensor, c_synth: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let l = discriminator_loss_graph(&mut g, model, real, c_real, z, c_synth)?;
    Ok(g.value(l).item())
}

/// Value of [`generator_loss_graph`].
pub fn generator_loss(model: &CganModel, z: &Tensor, c: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let l = generator_loss_graph(&mut g, model, z, c)?;
    Ok(g.value(l).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn zero(store: &mut ParamStore) {
        for p in store.params_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn small() -> (CganModel, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shape = ModelShape {
            latent_dim: 3,
            hidden: 5,
            channels: 4,
        };
        (CganModel::new(shape, &mut rng).unwrap(), rng)
    }

    #[test]
    fn default_scale_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = ModelShape {
            latent_dim: 3,
            hidden: 8,
            channels: 4,
        };
        let model = CganModel::new(shape, &mut rng).unwrap();
        let z = sample_latent(&mut rng, 32, 60, 3);
        let c = condition_batch(&[ClassLabel::Flare; 32], 60);
        assert_eq!(z.shape(), &[32, 60, 3]);
        assert_eq!(c.shape(), &[32, 60, 2]);
        let x = model.generator.generate(&z, &c).unwrap();
        assert_eq!(x.shape(), &[32, 60, 4]);
        assert!(x.data().iter().all(|v| v.abs() < 1.0));
        let p = model.discriminator.discriminate(&x, &c).unwrap();
        assert_eq!(p.shape(), &[32]);
    }

    #[test]
    fn generate_is_deterministic() {
        let (model, mut rng) = small();
        let z = sample_latent(&mut rng, 3, 7, 3);
        let c = condition_batch(&[ClassLabel::Flare, ClassLabel::NoFlare, ClassLabel::Flare], 7);
        assert_eq!(model.generator.generate(&z, &c).unwrap(), model.generator.generate(&z, &c).unwrap());
    }

    #[test]
    fn zero_generator_outputs_zero() {
        let (mut model, mut rng) = small();
        zero(&mut model.generator.store);
        let z = sample_latent(&mut rng, 2, 6, 3);
        let c = condition_batch(&[ClassLabel::Flare; 2], 6);
        assert!(model.generator.generate(&z, &c).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_discriminator_is_half_and_losses_are_ln2() {
        let (mut model, mut rng) = small();
        zero(&mut model.discriminator.store);
        let z = sample_latent(&mut rng, 4, 6, 3);
        let c = condition_batch(&[ClassLabel::Flare; 4], 6);
        let real = Tensor::from_fn(&[4, 6, 4], |i| ((i % 7) as f64 - 3.0) / 4.0);
        let p = model.discriminator.discriminate(&real, &c).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.5));
        assert_eq!(discriminator_loss(&model, &real, &c, &z, &c).unwrap(), 2.0 * LN_2);
        assert_eq!(generator_loss(&model, &z, &c).unwrap(), LN_2);
    }

    #[test]
    fn shape_errors() {
        let (model, mut rng) = small();
        let z = sample_latent(&mut rng, 2, 6, 2);
        let c = condition_batch(&[ClassLabel::Flare; 2], 6);
        assert!(model.generator.generate(&z, &c).is_err());
        let x = Tensor::zeros(&[2, 5, 4]);
        assert!(model.discriminator.discriminate(&x, &c).is_err());
    }
}
