#![allow(dead_code)]

use mvts_cgan::autodiff::{Graph, ParamStore, Var};
use mvts_cgan::cgan::{train, Checkpoint, TrainConfig, TOY_TIMESTEPS};
use mvts_cgan::data::{make_toy_dataset, Dataset};
use mvts_cgan::metrics::{epoch_report, CheckpointSource, EpochGroupReport, ReportOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_err: f64,
}

impl GradCheck {
    pub fn passed(&self, min_checked: usize) -> bool {
        self.checked >= min_checked && self.max_err <= GRAD_TOL
    }
}

/// Compares the analytic gradient of `loss` with central differences on up
/// to `n` randomly chosen scalars of the store returned by `store`.
/// Error is `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<M>(
    model: &mut M,
    store: fn(&mut M) -> &mut ParamStore,
    loss: impl Fn(&M, &mut Graph) -> Var,
    n: usize,
    seed: u64,
) -> GradCheck {
    let mut g = Graph::new();
    let l = loss(model, &mut g);
    g.backward(l).unwrap();
    let s = store(model);
    s.zero_grad();
    s.accumulate_grads(&g);
    let positions: Vec<(usize, usize)> = (0..s.len())
        .flat_map(|p| (0..s.get(p).value.len()).map(move |i| (p, i)))
        .collect();
    let analytic: Vec<f64> = positions.iter().map(|&(p, i)| s.get(p).grad[i]).collect();

    let eval = |m: &M| {
        let mut g = Graph::new();
        let l = loss(m, &mut g);
        g.value(l).item()
    };
    let chosen = rand::seq::index::sample(&mut rng(seed), positions.len(), n.min(positions.len()));
    let mut max_err: f64 = 0.0;
    for k in chosen.iter() {
        let (p, i) = positions[k];
        let orig = store(model).get(p).value.data()[i];
        store(model).params_mut()[p].value.data_mut()[i] = orig + FD_STEP;
        let up = eval(model);
        store(model).params_mut()[p].value.data_mut()[i] = orig - FD_STEP;
        let down = eval(model);
        store(model).params_mut()[p].value.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max((analytic[k] - numeric).abs() / numeric.abs().max(1.0));
    }
    GradCheck {
        checked: chosen.len(),
        max_err,
    }
}

/// O(n²) Adversarial Accuracy from explicit distance matrices.
pub fn aa_oracle(real: &[Vec<f64>], synth: &[Vec<f64>]) -> (f64, f64) {
    let dist = |a: &[f64], b: &[f64]| {
        let mut s = 0.0;
        for k in 0..a.len() {
            s += (a[k] - b[k]).powi(2);
        }
        s.sqrt()
    };
    let n = real.len();
    let term = |q: &[Vec<f64>], o: &[Vec<f64>]| {
        let mut hits = 0;
        for i in 0..n {
            let mut d_other = f64::INFINITY;
            let mut d_self = f64::INFINITY;
            for j in 0..n {
                d_other = d_other.min(dist(&q[i], &o[j]));
                if j != i {
                    d_self = d_self.min(dist(&q[i], &q[j]));
                }
            }
            if d_other > d_self {
                hits += 1;
            }
        }
        hits as f64 / n as f64
    };
    (term(real, synth), term(synth, real))
}

/// Rank-statistic AUC; ties count one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &q in neg {
            s += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

/// Scaled flare-only toy set.
pub fn toy_flares(seed: u64, n: usize) -> Dataset {
    let mut ds = make_toy_dataset(seed, n, 0, TOY_TIMESTEPS, 4);
    ds.fit_and_scale().unwrap();
    ds
}

pub struct ToyRun {
    pub data: Dataset,
    pub checkpoints: Vec<Checkpoint>,
    pub report: EpochGroupReport,
}

/// Trains the toy configuration and evaluates every checkpoint.
pub fn toy_run(data: Dataset, epochs: usize, seed: u64) -> ToyRun {
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::toy()
    };
    let out = train(&cfg, &data).unwrap();
    let sources: Vec<CheckpointSource> = out
        .checkpoints
        .iter()
        .cloned()
        .map(|c| CheckpointSource::Loaded(Box::new(c)))
        .collect();
    let report = epoch_report(
        &sources,
        &data,
        &ReportOptions {
            total_epochs: Some(epochs),
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    ToyRun {
        data,
        checkpoints: out.checkpoints,
        report,
    }
}

use mvts_cgan::autodiff::{DenseLayer, LstmLayer, Tensor};
use mvts_cgan::cgan::{
    condition_batch, discriminator_loss_graph, generator_loss_graph, sample_latent, CganModel, ModelShape,
};
use mvts_cgan::data::ClassLabel;
use rand::Rng;

pub const GRAD_SAMPLES: usize = 120;

fn jitter(store: &mut ParamStore, rng: &mut impl Rng, scale: f64) {
    for p in store.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Weighted sum of `tanh(dense(x))` over a 12 → 10 layer.
pub fn dense_grad_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let layer = DenseLayer::new(&mut store, "d", 12, 10, &mut r).unwrap();
    jitter(&mut store, &mut r, 0.3);
    let x = uniform(&mut r, &[5, 12], -1.0, 1.0);
    let w = uniform(&mut r, &[5, 10], -1.0, 1.0);
    grad_check(
        &mut store,
        |s| s,
        |s, g| {
            let xv = g.constant(x.clone());
            let y = layer.forward(g, s, xv).unwrap();
            let y = g.tanh(y);
            let wv = g.constant(w.clone());
            let p = g.mul(y, wv).unwrap();
            g.sum(p)
        },
        GRAD_SAMPLES,
        seed,
    )
}

/// Weighted sum of the full hidden sequence plus the final state of a
/// 3 → 6 LSTM over 7 steps.
pub fn lstm_grad_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let layer = LstmLayer::new(&mut store, "l", 3, 6, &mut r).unwrap();
    jitter(&mut store, &mut r, 0.2);
    let x = uniform(&mut r, &[2, 7, 3], -1.0, 1.0);
    let w_seq = uniform(&mut r, &[2, 7, 6], -1.0, 1.0);
    let w_last = uniform(&mut r, &[2, 6], -1.0, 1.0);
    grad_check(
        &mut store,
        |s| s,
        |s, g| {
            let xv = g.constant(x.clone());
            let out = layer.forward(g, s, xv).unwrap();
            let a = g.constant(w_seq.clone());
            let b = g.constant(w_last.clone());
            let ps = g.mul(out.sequence, a).unwrap();
            let pl = g.mul(out.last, b).unwrap();
            let ss = g.sum(ps);
            let sl = g.sum(pl);
            g.add(ss, sl).unwrap()
        },
        GRAD_SAMPLES,
        seed,
    )
}

/// BCE of 128 probabilities, registered as parameters, against soft targets.
pub fn bce_grad_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    store.add("p", uniform(&mut r, &[128], 0.05, 0.95)).unwrap();
    let y = uniform(&mut r, &[128], 0.0, 1.0);
    grad_check(
        &mut store,
        |s| s,
        |s, g| {
            let p = g.param(s, 0);
            let yv = g.constant(y.clone());
            g.bce(p, yv).unwrap()
        },
        GRAD_SAMPLES,
        seed,
    )
}

fn small_gan(seed: u64) -> (CganModel, Tensor, Tensor, Tensor, Tensor) {
    let mut r = rng(seed);
    let shape = ModelShape {
        latent_dim: 3,
        hidden: 5,
        channels: 2,
    };
    let mut model = CganModel::new(shape, &mut r).unwrap();
    jitter(&mut model.generator.store, &mut r, 0.2);
    jitter(&mut model.discriminator.store, &mut r, 0.2);
    let (b, t) = (3, 6);
    let labels = [ClassLabel::Flare, ClassLabel::NoFlare, ClassLabel::Flare];
    let real = uniform(&mut r, &[b, t, 2], -1.0, 1.0);
    let c = condition_batch(&labels, t);
    let z = sample_latent(&mut r, b, t, 3);
    let c_synth = condition_batch(&[ClassLabel::NoFlare, ClassLabel::Flare, ClassLabel::Flare], t);
    (model, real, c, z, c_synth)
}

/// Discriminator loss with respect to the discriminator parameters.
pub fn d_loss_grad_check(seed: u64) -> GradCheck {
    let (mut model, real, c, z, cs) = small_gan(seed);
    grad_check(
        &mut model,
        |m| &mut m.discriminator.store,
        |m, g| discriminator_loss_graph(g, m, &real, &c, &z, &cs).unwrap(),
        GRAD_SAMPLES,
        seed,
    )
}

/// Generator loss with respect to the generator parameters, through D.
pub fn g_loss_grad_check(seed: u64) -> GradCheck {
    let (mut model, _, _, z, cs) = small_gan(seed);
    grad_check(
        &mut model,
        |m| &mut m.generator.store,
        |m, g| generator_loss_graph(g, m, &z, &cs).unwrap(),
        GRAD_SAMPLES,
        seed,
    )
}
