//! Room impulse response synthesis from predicted energy decay curves.
//!
//! The pipeline: sample shoebox rooms ([`roomgen`]), simulate per-band
//! impulse responses ([`acoustics`]), reduce them to normalized decay curves
//! ([`edc`]), train a feature-to-curve network ([`nn`], [`loss`], [`train`]),
//! resynthesize waveforms from curves ([`recon`]) and score the result
//! ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod acoustics;
pub mod audio;
pub mod bands;
pub mod binfmt;
pub mod dataset;
pub mod edc;
pub mod error;
pub mod eval;
pub mod loss;
pub mod nn;
pub mod recon;
pub mod roomgen;
pub mod scalar;
pub mod stamp;
pub mod train;

pub use acoustics::{simulate_band_rirs, BandRirSet, SimConfig};
pub use bands::{HEADLINE_BAND, NUM_BANDS, THIRD_OCTAVE_CENTERS};
pub use dataset::{generate_dataset, read_dataset, write_dataset, Dataset, DatasetManifest, GenOptions};
pub use edc::{AcousticParams, EdcMatrix};
pub use error::{Error, Result};
pub use loss::{composite_loss, LossConfig, LossValue};
pub use nn::{Checkpoint, ModelConfig, ModelParams, Tensor};
pub use recon::{reconstruct_rir, Reconstruction, RssConfig};
pub use roomgen::{featurize, sample_room, FeatureVector, MinMaxScaler, RoomConfig, RoomRanges};
pub use scalar::{mix_seed, Scalar};
pub use stamp::RunStamp;
pub use train::{TrainConfig, TrainLog};

/// Single-precision model, the default for training and inference.
pub type Model = ModelParams<f32>;
/// Double-precision model, used for gradient checks.
pub type Model64 = ModelParams<f64>;
pub type Edc = EdcMatrix<f32>;
pub type Edc64 = EdcMatrix<f64>;
