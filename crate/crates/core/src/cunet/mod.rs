//! Complex-valued UNet operating on STFT spectrograms.
//!
//! Real and imaginary parts are carried as separate planes and gradients
//! are derived by hand for every layer.

pub mod checkpoint;
mod extract;
pub mod layers;
mod net;
mod tensor;
mod train;

pub use extract::{extract_fecg, training_examples, Model, SegmentConfig, SegmentNorm, TrainingExample};
pub use layers::{ActivationKind, ActivationMixture, ComplexConvLayer, ConvMode, DiagonalLayer, NormLayer};
pub use net::{CUNetParams, DownBlock, ForwardCache, NetConfig, UpBlock};
pub use tensor::ComplexTensor;
pub use train::{batch_loss_and_grad, example_loss, train, Adam, TrainConfig, TrainReport};
