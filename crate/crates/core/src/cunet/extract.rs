use serde::{Deserialize, Serialize};

use super::net::{CUNetParams, NetConfig};
use super::tensor::ComplexTensor;
use crate::spectral::{Stft, StftConfig};
use crate::{Error, Result, TimeSeries};

/// Fixed-length windows the network runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub len: usize,
    pub hop: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { len: 2048, hop: 1024 }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 || self.hop == 0 || self.hop > self.len {
            return Err(Error::Config(format!(
                "segment hop {} must be in 1..={}",
                self.hop, self.len
            )));
        }
        Ok(())
    }

    /// Start offsets covering `n` samples; the last window is aligned to the end.
    pub fn starts(&self, n: usize) -> Result<Vec<usize>> {
        if n < self.len {
            return Err(Error::InvalidInput(format!(
                "signal of {n} samples shorter than one segment ({})",
                self.len
            )));
        }
        let mut starts: Vec<usize> = (0..=(n - self.len) / self.hop).map(|i| i * self.hop).collect();
        if starts.last().map(|s| s + self.len) != Some(n) {
            starts.push(n - self.len);
        }
        Ok(starts)
    }

    /// Cross-fade weight for overlap-add.
    pub fn fade(&self) -> Vec<f64> {
        let l = self.len as f64;
        (0..self.len)
            .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / l).sin().powi(2))
            .collect()
    }
}

/// Mean and scale removed from a segment before it enters the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentNorm {
    pub mean: f64,
    pub std: f64,
}

impl SegmentNorm {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.std + self.mean).collect()
    }
}

/// A network together with the front end it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: CUNetParams,
    pub stft: StftConfig,
    pub segment: SegmentConfig,
    pub fs: f64,
    pub seed: u64,
}

impl Model {
    /// Network config matching the spectrogram of one segment.
    pub fn net_config_for(stft: &StftConfig, segment: &SegmentConfig) -> NetConfig {
        NetConfig::toy(stft.n_freqs(), stft.n_frames(segment.len))
    }

    pub fn new(params: CUNetParams, stft: StftConfig, segment: SegmentConfig, fs: f64, seed: u64) -> Result<Self> {
        stft.validate()?;
        segment.validate()?;
        if segment.len < stft.window_len {
            return Err(Error::Config("segment shorter than the STFT window".into()));
        }
        let (h, w) = (stft.n_freqs(), stft.n_frames(segment.len));
        if params.config.height != h || params.config.width != w {
            return Err(Error::Config(format!(
                "network grid {}x{} does not match segment spectrogram {h}x{w}",
                params.config.height, params.config.width
            )));
        }
        Ok(Self {
            params,
            stft,
            segment,
            fs,
            seed,
        })
    }

    /// Randomly initialised model.
    pub fn init(net: NetConfig, stft: StftConfig, segment: SegmentConfig, fs: f64, seed: u64) -> Result<Self> {
        Self::new(CUNetParams::init(net, seed)?, stft, segment, fs, seed)
    }

    /// Runs one normalised segment through STFT, the network and ISTFT.
    pub fn denoise_segment(&self, engine: &Stft, x: &[f64]) -> Result<Vec<f64>> {
        let mut spec = engine.forward_slice(x, self.fs)?;
        let y = self.params.forward(&ComplexTensor::from_spectrogram(&spec))?;
        spec.data = y.to_complex();
        engine.inverse_slice(&spec)
    }
}

/// Segments, normalises, denoises and cross-fades `abdominal` back together.
pub fn extract_fecg(model: &Model, abdominal: &TimeSeries) -> Result<TimeSeries> {
    if (abdominal.fs - model.fs).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "input sampled at {} Hz, model trained at {} Hz",
            abdominal.fs, model.fs
        )));
    }
    let seg = model.segment;
    let starts = seg.starts(abdominal.len())?;
    let engine = Stft::new(model.stft)?;
    let fade = seg.fade();
    let mut acc = vec![0.0; abdominal.len()];
    let mut weight = vec![0.0; abdominal.len()];
    for s in starts {
        let x = &abdominal.samples[s..s + seg.len];
        let norm = SegmentNorm::of(x);
        let y = norm.invert(&model.denoise_segment(&engine, &norm.apply(x))?);
        for i in 0..seg.len {
            acc[s + i] += fade[i] * y[i];
            weight[s + i] += fade[i];
        }
    }
    let out = acc.iter().zip(&weight).map(|(a, w)| a / w).collect();
    TimeSeries::new(out, abdominal.fs)
}

/// One training pair in normalised units: the network should map the
/// spectrogram of `input` onto that of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Cuts a record into segments, normalising each pair with the statistics of
/// the abdominal segment.
pub fn training_examples(
    abdominal: &TimeSeries,
    fecg: &TimeSeries,
    segment: &SegmentConfig,
) -> Result<Vec<TrainingExample>> {
    if abdominal.len() != fecg.len() {
        return Err(Error::InvalidInput(format!(
            "abdominal ({}) and reference ({}) lengths differ",
            abdominal.len(),
            fecg.len()
        )));
    }
    segment
        .starts(abdominal.len())?
        .into_iter()
        .map(|s| {
            let x = &abdominal.samples[s..s + segment.len];
            let f = &fecg.samples[s..s + segment.len];
            let norm = SegmentNorm::of(x);
            Ok(TrainingExample {
                input: norm.apply(x),
                target: norm.apply(f),
            })
        })
        .collect()
}
