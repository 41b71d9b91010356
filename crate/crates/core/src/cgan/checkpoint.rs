use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{condition_batch, sample_latent, CganModel, ModelShape};
use super::train::TrainConfig;
use crate::autodiff::ParamSet;
use crate::data::{ClassLabel, Dataset, MvtsSample, ScalingParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mvts-cgan-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Samples generated per batch during synthesis.
pub const SYNTH_BATCH: usize = 64;

/// Snapshot of both networks after an epoch, with the training
/// configuration echoed for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub config: TrainConfig,
    pub shape: ModelShape,
    pub timesteps: usize,
    pub channel_names: Vec<String>,
    /// Scaling of the training data; synthetic output lives in that space.
    pub scaling_params: Option<ScalingParams>,
    pub generator: ParamSet,
    pub discriminator: ParamSet,
}

impl Checkpoint {
    pub fn capture(
        model: &CganModel,
        epoch: usize,
        config: &TrainConfig,
        timesteps: usize,
        channel_names: Vec<String>,
        scaling_params: Option<ScalingParams>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            epoch,
            config: config.clone(),
            shape: model.shape.clone(),
            timesteps,
            channel_names,
            scaling_params,
            generator: ParamSet::from_store(&model.generator.store),
            discriminator: ParamSet::from_store(&model.discriminator.store),
        }
    }

    /// Rebuilds the networks.
    pub fn to_model(&self) -> Result<CganModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = CganModel::new(self.shape.clone(), &mut rng)?;
        self.generator.load_into(&mut model.generator.store)?;
        self.discriminator.load_into(&mut model.discriminator.store)?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let ckpt: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        if ckpt.channel_names.len() != ckpt.shape.channels {
            return Err(Error::Checkpoint(format!(
                "{}: {} channel names for {} channels",
                path.display(),
                ckpt.channel_names.len(),
                ckpt.shape.channels
            )));
        }
        Ok(ckpt)
    }

    /// `n` synthetic samples of class `label`; see [`synthesize_with`].
    pub fn synthesize(&self, label: ClassLabel, n: usize, seed: u64) -> Result<Dataset> {
        let model = self.to_model()?;
        synthesize_with(
            &model,
            self.timesteps,
            &self.channel_names,
            self.scaling_params.as_ref(),
            label,
            n,
            seed,
        )
    }
}

/// Generates `n` samples conditioned on `label`, in scaled space and
/// flagged synthetic.
///
/// Batch `k` draws its latents from a ChaCha stream `k` keyed by `seed`,
/// so the output does not depend on how batches are scheduled.
pub fn synthesize_with(
    model: &CganModel,
    timesteps: usize,
    channel_names: &[String],
    scaling_params: Option<&ScalingParams>,
    label: ClassLabel,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let channels = model.shape.channels;
    let batches: Vec<(usize, usize)> = (0..n)
        .step_by(SYNTH_BATCH)
        .map(|start| (start, SYNTH_BATCH.min(n - start)))
        .collect();
    let generated: Vec<Vec<MvtsSample>> = batches
        .par_iter()
        .enumerate()
        .map(|(k, &(start, len))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z = sample_latent(&mut rng, len, timesteps, model.shape.latent_dim);
            let c = condition_batch(&vec![label; len], timesteps);
            let x = model.generator.generate(&z, &c)?;
            x.data()
                .chunks(timesteps * channels)
                .enumerate()
                .map(|(i, vals)| {
                    let mut s = MvtsSample::new(
                        format!("synth_{}_{:07}", label.to_string().to_lowercase(), start + i),
                        label,
                        timesteps,
                        channels,
                        vals.to_vec(),
                    )?;
                    s.synthetic = true;
                    Ok(s)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut ds = Dataset::new(0, channel_names.to_vec());
    ds.samples = generated.into_iter().flatten().collect();
    ds.scaling_params = scaling_params.cloned();
    Ok(ds)
}
