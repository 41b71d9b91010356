//! Conditional GAN over multivariate time series.
//!
//! Both networks are a single LSTM followed by a dense layer. The
//! generator reads i.i.d. standard-normal latents concatenated with a
//! one-hot class condition at every timestep and emits one `tanh`-squashed
//! value per channel per timestep. The discriminator reads a series
//! concatenated with its condition and scores the final hidden state.
//!
//! Both losses are binary cross-entropies and both are minimised: the
//! discriminator against labels 1 (real) / 0 (synthetic), the generator
//! against label 1 for its own output.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{synthesize_with, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, SYNTH_BATCH};
pub use model::{
    condition_batch, discriminator_loss, discriminator_loss_graph, generator_loss, generator_loss_graph,
    sample_latent, CganModel, Discriminator, Generator, ModelShape, CONDITION_DIM,
};
pub use train::{
    checkpoint_file_name, train, train_to_dir, train_with, write_timing_log, write_train_log, Conditioning, EpochLog, TrainConfig,
    TrainOutcome, TOY_TIMESTEPS, TRAIN_LOG_HEADER,
};
