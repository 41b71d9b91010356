use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::model::{
    condition_batch, discriminator_loss_graph, generator_loss_graph, sample_latent, CganModel, ModelShape,
};
use crate::autodiff::{Graph, Optimizer, Tensor};
use crate::data::{ClassLabel, Dataset, MvtsSample};
use crate::error::{Error, Result};

/// Which real samples and condition labels take part in training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Every class present in the training set; synthetic batches draw
    /// their condition uniformly from those classes.
    AllClasses,
    /// Only flare samples and the flare condition.
    FlareOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub checkpoint_every: usize,
    /// Gradient descent step size of the discriminator.
    pub d_learning_rate: f64,
    /// Adam step size of the generator.
    pub g_learning_rate: f64,
    pub hidden: usize,
    pub latent_dim: usize,
    /// Discriminator updates per batch.
    pub d_steps: usize,
    /// Generator updates per batch.
    pub g_steps: usize,
    pub conditioning: Conditioning,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 300,
            checkpoint_every: 5,
            d_learning_rate: 0.1,
            g_learning_rate: 0.1,
            hidden: 100,
            latent_dim: 3,
            d_steps: 1,
            g_steps: 1,
            conditioning: Conditioning::AllClasses,
            seed: 0,
        }
    }
}

/// Timesteps used with [`TrainConfig::toy`].
pub const TOY_TIMESTEPS: usize = 16;

impl TrainConfig {
    /// Small-scale settings for the synthetic toy problem: hidden size 16
    /// and a generator step size of 1e-3. At the default step sizes the
    /// discriminator saturates within a few epochs on toy data.
    pub fn toy() -> Self {
        Self {
            hidden: 16,
            g_learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("checkpoint_every", self.checkpoint_every),
            ("hidden", self.hidden),
            ("latent_dim", self.latent_dim),
            ("d_steps", self.d_steps),
            ("g_steps", self.g_steps),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, lr) in [("d_learning_rate", self.d_learning_rate), ("g_learning_rate", self.g_learning_rate)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Mean losses of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub wall_ms: u64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,d_loss,g_loss";

/// Loss log. Wall-clock times are left out so that equal seeds give equal
/// files; see [`write_timing_log`].
pub fn write_train_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.d_loss, e.g_loss));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `epoch,wall_ms` per epoch.
pub fn write_timing_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,wall_ms\n");
    for e in log {
        out.push_str(&format!("{},{}\n", e.epoch, e.wall_ms));
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<EpochLog>,
}

/// Trains and keeps every checkpoint in memory.
pub fn train(cfg: &TrainConfig, train_set: &Dataset) -> Result<TrainOutcome> {
    let mut checkpoints = Vec::new();
    let log = train_with(cfg, train_set, |c| {
        checkpoints.push(c);
        Ok(())
    })?;
    Ok(TrainOutcome { checkpoints, log })
}

/// File name of the checkpoint written after `epoch`.
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("ckpt_epoch_{epoch}.json")
}

/// Trains, writing `ckpt_epoch_{N}.json` files, `train_log.csv` and
/// `train_timing.csv` into `dir`.
/// Returns the checkpoint paths in epoch order.
pub fn train_to_dir(cfg: &TrainConfig, train_set: &Dataset, dir: &Path) -> Result<(Vec<PathBuf>, Vec<EpochLog>)> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let result = train_with(cfg, train_set, |c| {
        let path = dir.join(checkpoint_file_name(c.epoch));
        c.save(&path)?;
        paths.push(path);
        Ok(())
    });
    match result {
        Ok(log) => {
            write_train_log(&log, &dir.join("train_log.csv"))?;
            write_timing_log(&log, &dir.join("train_timing.csv"))?;
            Ok((paths, log))
        }
        Err(e) => {
            if let Ok(mut f) = fs::File::create(dir.join("train_abort.txt")) {
                let _ = writeln!(f, "{e}");
            }
            Err(e)
        }
    }
}

fn batch_tensor(samples: &[&MvtsSample], timesteps: usize, channels: usize) -> Tensor {
    let mut data = Vec::with_capacity(samples.len() * timesteps * channels);
    for s in samples {
        data.extend_from_slice(s.values());
    }
    Tensor::new(vec![samples.len(), timesteps, channels], data).expect("batch shape")
}

/// Alternating training; `on_checkpoint` receives each checkpoint as it is taken.
///
/// Per batch: `d_steps` discriminator updates (gradient descent), then
/// `g_steps` generator updates (Adam), each with a fresh latent draw.
pub fn train_with(
    cfg: &TrainConfig,
    train_set: &Dataset,
    mut on_checkpoint: impl FnMut(Checkpoint) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let pool: Vec<&MvtsSample> = train_set
        .samples
        .iter()
        .filter(|s| cfg.conditioning == Conditioning::AllClasses || s.label == ClassLabel::Flare)
        .collect();
    if pool.is_empty() {
        return Err(Error::Config("training set has no usable samples".into()));
    }
    if let Some(bad) = pool.iter().find(|s| !s.is_preprocessed()) {
        return Err(Error::Config(format!(
            "sample '{}' is not preprocessed (values must be observed and within [-1, 1])",
            bad.id
        )));
    }
    let timesteps = pool[0].timesteps();
    let channels = train_set.channels();
    let labels: Vec<ClassLabel> = ClassLabel::ALL
        .into_iter()
        .filter(|l| pool.iter().any(|s| s.label == *l))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = ModelShape {
        latent_dim: cfg.latent_dim,
        hidden: cfg.hidden,
        channels,
    };
    let mut model = CganModel::new(shape, &mut rng)?;
    let mut d_opt = Optimizer::sgd(cfg.d_learning_rate);
    let mut g_opt = Optimizer::adam(cfg.g_learning_rate);
    let mut graph = Graph::new();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut d_sum, mut d_n, mut g_sum, mut g_n) = (0.0, 0usize, 0.0, 0usize);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&MvtsSample> = chunk.iter().map(|&i| pool[i]).collect();
            let b = batch.len();
            let real = batch_tensor(&batch, timesteps, channels);
            let real_labels: Vec<ClassLabel> = batch.iter().map(|s| s.label).collect();
            let c_real = condition_batch(&real_labels, timesteps);

            for _ in 0..cfg.d_steps {
                let z = sample_latent(&mut rng, b, timesteps, cfg.latent_dim);
                let synth_labels: Vec<ClassLabel> = (0..b).map(|_| labels[rng.random_range(0..labels.len())]).collect();
                let c_synth = condition_batch(&synth_labels, timesteps);
                graph.reset();
                let loss = discriminator_loss_graph(&mut graph, &model, &real, &c_real, &z, &c_synth)?;
                let value = graph.value(loss).item();
                check_finite(epoch, batch_idx, "discriminator", value)?;
                graph.backward(loss)?;
                model.discriminator.store.zero_grad();
                model.discriminator.store.accumulate_grads(&graph);
                d_opt.step(&mut model.discriminator.store)?;
                d_sum += value;
                d_n += 1;
            }
            for _ in 0..cfg.g_steps {
                let z = sample_latent(&mut rng, b, timesteps, cfg.latent_dim);
                let synth_labels: Vec<ClassLabel> = (0..b).map(|_| labels[rng.random_range(0..labels.len())]).collect();
                let c = condition_batch(&synth_labels, timesteps);
                graph.reset();
                let loss = generator_loss_graph(&mut graph, &model, &z, &c)?;
                let value = graph.value(loss).item();
                check_finite(epoch, batch_idx, "generator", value)?;
                graph.backward(loss)?;
                model.generator.store.zero_grad();
                model.generator.store.accumulate_grads(&graph);
                g_opt.step(&mut model.generator.store)?;
                g_sum += value;
                g_n += 1;
            }
        }
        let entry = EpochLog {
            epoch,
            d_loss: d_sum / d_n as f64,
            g_loss: g_sum / g_n as f64,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::debug!(
            "epoch {epoch}: d_loss {:.5} g_loss {:.5} ({} ms)",
            entry.d_loss,
            entry.g_loss,
            entry.wall_ms
        );
        log.push(entry);
        if epoch % cfg.checkpoint_every == 0 {
            on_checkpoint(Checkpoint::capture(
                &model,
                epoch,
                cfg,
                timesteps,
                train_set.channel_names.clone(),
                train_set.scaling_params.clone(),
            ))?;
        }
    }
    Ok(log)
}

fn check_finite(epoch: usize, batch: usize, which: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Training(format!(
            "non-finite {which} loss {value} at epoch {epoch}, batch {batch}"
        )))
    }
}
