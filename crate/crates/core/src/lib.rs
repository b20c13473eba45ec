//! Desk-scale laboratory for fetal ECG extraction from single-channel
//! dry-electrode abdominal recordings.
//!
//! The crate is organised along the processing chain:
//!
//! - [`synth`]: phase-domain Gaussian-sum ECG generator for maternal and fetal traces.
//! - [`noise`]: dry-electrode noise (banded pink + white + Gaussian mixture).
//! - [`preprocess`]: 50 Hz notch and 1-100 Hz bandpass, zero-phase.
//! - [`spectral`]: STFT / inverse STFT with exact-length reconstruction.
//! - [`cunet`]: the complex-valued UNet, its gradients, training and inference.
//! - [`baselines`]: extended Kalman filter/smoother and SVD template subtraction.
//! - [`eval`]: R-peak detection, peak matching and extraction metrics.
//! - [`dataset`]: in-silico record generation, persistence and splits.
//! - [`pipeline`]: per-method evaluation over a test split.

pub mod baselines;
pub mod cunet;
pub mod dataset;
mod error;
pub mod eval;
pub mod noise;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};

/// Project-wide sampling rate in Hz.
pub const DEFAULT_FS: f64 = 250.0;

/// Uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub fs: f64,
}

impl TimeSeries {
    /// Builds a series, rejecting sampling rates that cannot carry the 1-100 Hz band.
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 200.0) {
            return Err(error::invalid(format!("sampling rate {fs} Hz must exceed 200 Hz")));
        }
        Ok(Self { samples, fs })
    }

    pub fn zeros(len: usize, fs: f64) -> Result<Self> {
        Self::new(vec![0.0; len], fs)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Mean square value.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            fs: self.fs,
        }
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
