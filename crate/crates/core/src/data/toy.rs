//! Class-conditional toy data with known ground truth.
//!
//! Each channel of each sample follows
//!
//! ```text
//! x_t = level + drift * t + e_t,     e_t = AR_COEF * e_{t-1} + scale * INNOVATION * u_t
//! level = base_level + class_shift + scale * v
//! ```
//!
//! with `u_t, v ~ N(0, 1)`, `e_0` drawn from the stationary distribution
//! and per-class `class_shift`, `scale` and `drift` taken from
//! [`TOY_CHANNELS`]. The sample-level offset `v` makes the classes overlap
//! so that a classifier has something to learn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ClassLabel, Dataset, MvtsSample, DEFAULT_CHANNELS};

/// Ground-truth constants of one toy channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyChannel {
    pub base_level: f64,
    pub base_scale: f64,
    /// Added to the level of flare samples.
    pub flare_shift: f64,
    /// Multiplies `base_scale` for flare samples.
    pub flare_scale: f64,
    /// Per-timestep trend of flare samples; no-flare samples have none.
    pub flare_drift: f64,
}

/// Constants for the four default channels, cycled when `P > 4`.
pub const TOY_CHANNELS: [ToyChannel; 4] = [
    ToyChannel { base_level: 500.0, base_scale: 100.0, flare_shift: 150.0, flare_scale: 1.5, flare_drift: 2.0 },
    ToyChannel { base_level: 80.0, base_scale: 20.0, flare_shift: 25.0, flare_scale: 1.4, flare_drift: 0.3 },
    ToyChannel { base_level: 2000.0, base_scale: 500.0, flare_shift: 600.0, flare_scale: 1.5, flare_drift: 8.0 },
    ToyChannel { base_level: 30000.0, base_scale: 6000.0, flare_shift: 7000.0, flare_scale: 1.3, flare_drift: 60.0 },
];

const AR_COEF: f64 = 0.8;
const INNOVATION: f64 = 0.3;

/// Deterministic toy dataset: `n_pos` flares followed by `n_neg` no-flares.
/// Channel names are the default parameters for `P <= 4`, `CH{j}` beyond.
pub fn make_toy_dataset(seed: u64, n_pos: usize, n_neg: usize, timesteps: usize, channels: usize) -> Dataset {
    let names = (0..channels)
        .map(|j| {
            DEFAULT_CHANNELS
                .get(j)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("CH{j}"))
        })
        .collect();
    let mut ds = Dataset::new(1, names);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = std::iter::repeat_n(ClassLabel::Flare, n_pos)
        .chain(std::iter::repeat_n(ClassLabel::NoFlare, n_neg));
    let stationary = (1.0 - AR_COEF * AR_COEF).sqrt();
    for (i, label) in labels.enumerate() {
        let mut values = vec![0.0; timesteps * channels];
        for p in 0..channels {
            let ch = TOY_CHANNELS[p % TOY_CHANNELS.len()];
            let (shift, scale, drift) = match label {
                ClassLabel::Flare => (ch.flare_shift, ch.base_scale * ch.flare_scale, ch.flare_drift),
                ClassLabel::NoFlare => (0.0, ch.base_scale, 0.0),
            };
            let v: f64 = rng.sample(StandardNormal);
            let level = ch.base_level + shift + scale * v;
            let u0: f64 = rng.sample(StandardNormal);
            let mut e = scale * INNOVATION * u0 / stationary;
            for t in 0..timesteps {
                if t > 0 {
                    let u: f64 = rng.sample(StandardNormal);
                    e = AR_COEF * e + scale * INNOVATION * u;
                }
                values[t * channels + p] = level + drift * t as f64 + e;
            }
        }
        let id = format!("toy{seed}_{i:05}");
        let sample = MvtsSample::new(id, label, timesteps, channels, values)
            .expect("toy generator produces well-shaped samples");
        ds.samples.push(sample);
    }
    ds
}
