//! STFT / inverse STFT.
//!
//! The forward transform reflect-pads the signal by half a window on both
//! sides and zero-pads the tail so the last frame is complete. The inverse is
//! the weighted overlap-add estimator (synthesis window equal to the analysis
//! window, normalised by the summed squared window), which reconstructs every
//! original sample exactly whenever that sum is non-zero.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result, TimeSeries};

/// Forward/inverse real FFT of a fixed length.
#[derive(Clone)]
pub struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("n", &self.n).finish()
    }
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// One-sided spectrum of a real signal (zero-padded or truncated to `n`).
    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    /// Real inverse of a one-sided spectrum, scaled by `1/n`.
    ///
    /// Imaginary parts of the DC and (for even `n`) Nyquist bins do not
    /// contribute.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, c) in spec.iter().take(self.bins()).enumerate() {
            buf[k] = *c;
            if k > 0 && n - k != k {
                buf[n - k] = c.conj();
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Adjoint of [`Self::inverse`] seen as a real-linear map from
    /// (re, im) of the one-sided bins to the `n` output samples.
    pub fn inverse_adjoint(&self, grad: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let g = self.forward(grad);
        g.iter()
            .enumerate()
            .map(|(k, c)| {
                let weight = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                c * (weight / n as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: Window,
    pub fft_len: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 256,
            hop: 64,
            window: Window::Hann,
            fft_len: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "hop {} must be in 1..={} (window length)",
                self.hop, self.window_len
            )));
        }
        if self.fft_len < self.window_len {
            return Err(Error::Config(format!(
                "fft length {} shorter than window {}",
                self.fft_len, self.window_len
            )));
        }
        let w = self.window.coefficients(self.window_len);
        let sums: Vec<f64> = (0..self.hop)
            .map(|r| w.iter().skip(r).step_by(self.hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if !(min > 0.0 && (max - min) <= 1e-9 * max) {
            return Err(Error::Config(format!(
                "window {:?}/{} with hop {} violates constant overlap-add",
                self.window, self.window_len, self.hop
            )));
        }
        Ok(())
    }

    pub fn n_freqs(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn pad(&self) -> usize {
        self.window_len / 2
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop) + 1
    }
}

/// F x T grid of complex coefficients, frequency-major (`data[f * T + t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Vec<Complex64>,
    pub n_freqs: usize,
    pub n_frames: usize,
    pub config: StftConfig,
    pub original_len: usize,
    pub fs: f64,
}

impl ComplexSpectrogram {
    pub fn zeros(config: StftConfig, original_len: usize, fs: f64) -> Self {
        let n_freqs = config.n_freqs();
        let n_frames = config.n_frames(original_len);
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_freqs * n_frames],
            n_freqs,
            n_frames,
            config,
            original_len,
            fs,
        }
    }

    pub fn at(&self, f: usize, t: usize) -> Complex64 {
        self.data[f * self.n_frames + t]
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_freqs != self.config.n_freqs()
            || self.n_frames != self.config.n_frames(self.original_len)
            || self.data.len() != self.n_freqs * self.n_frames
        {
            return Err(Error::Shape(format!(
                "spectrogram {}x{} ({} values) inconsistent with config and length {}",
                self.n_freqs,
                self.n_frames,
                self.data.len(),
                self.original_len
            )));
        }
        Ok(())
    }
}

/// Reusable STFT engine (window and FFT plans cached).
#[derive(Debug, Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    fft: RealFft,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            window: config.window.coefficients(config.window_len),
            fft: RealFft::new(config.fft_len),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    fn padded(&self, x: &[f64]) -> Vec<f64> {
        let pad = self.config.pad();
        let n = x.len();
        let frames = self.config.n_frames(n);
        let total = (frames - 1) * self.config.hop + self.config.window_len;
        let mut out = Vec::with_capacity(total);
        out.extend((1..=pad).rev().map(|i| x[i]));
        out.extend_from_slice(x);
        out.extend((1..=pad).map(|i| x[n - 1 - i]));
        out.resize(total, 0.0);
        out
    }

    pub fn forward_slice(&self, x: &[f64], fs: f64) -> Result<ComplexSpectrogram> {
        let cfg = self.config;
        if x.len() < cfg.window_len {
            return Err(Error::InvalidInput(format!(
                "signal of {} samples shorter than window {}",
                x.len(),
                cfg.window_len
            )));
        }
        let padded = self.padded(x);
        let mut spec = ComplexSpectrogram::zeros(cfg, x.len(), fs);
        let t_count = spec.n_frames;
        let mut frame = vec![0.0; cfg.window_len];
        for t in 0..t_count {
            let start = t * cfg.hop;
            for (i, f) in frame.iter_mut().enumerate() {
                *f = padded[start + i] * self.window[i];
            }
            let bins = self.fft.forward(&frame);
            for (f, c) in bins.into_iter().enumerate() {
                spec.data[f * t_count + t] = c;
            }
        }
        Ok(spec)
    }

    pub fn forward(&self, x: &TimeSeries) -> Result<ComplexSpectrogram> {
        self.forward_slice(&x.samples, x.fs)
    }

    fn norm_buffer(&self, frames: usize) -> Vec<f64> {
        let cfg = self.config;
        let mut norm = vec![0.0; (frames - 1) * cfg.hop + cfg.window_len];
        for t in 0..frames {
            for (i, w) in self.window.iter().enumerate() {
                norm[t * cfg.hop + i] += w * w;
            }
        }
        norm
    }

    pub fn inverse_slice(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
        spec.validate()?;
        if spec.config != self.config {
            return Err(Error::Shape("spectrogram built with a different config".into()));
        }
        let cfg = self.config;
        let frames = spec.n_frames;
        let norm = self.norm_buffer(frames);
        let mut acc = vec![0.0; norm.len()];
        let mut column = vec![Complex64::new(0.0, 0.0); spec.n_freqs];
        for t in 0..frames {
            for (f, c) in column.iter_mut().enumerate() {
                *c = spec.data[f * frames + t];
            }
            let frame = self.fft.inverse(&column);
            for i in 0..cfg.window_len {
                acc[t * cfg.hop + i] += self.window[i] * frame[i];
            }
        }
        let pad = cfg.pad();
        Ok((0..spec.original_len)
            .map(|n| {
                let d = norm[n + pad];
                if d > 1e-12 {
                    acc[n + pad] / d
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn inverse(&self, spec: &ComplexSpectrogram) -> Result<TimeSeries> {
        TimeSeries::new(self.inverse_slice(spec)?, spec.fs)
    }

    /// Gradient of a scalar loss with respect to the spectrogram coefficients
    /// (real and imaginary parts as independent variables), given the
    /// gradient `grad` with respect to the inverse transform's output.
    pub fn inverse_adjoint(&self, grad: &[f64], n_frames: usize) -> Vec<Complex64> {
        let cfg = self.config;
        let norm = self.norm_buffer(n_frames);
        let pad = cfg.pad();
        let mut gacc = vec![0.0; norm.len()];
        for (n, g) in grad.iter().enumerate() {
            let d = norm[n + pad];
            if d > 1e-12 {
                gacc[n + pad] = g / d;
            }
        }
        let n_freqs = cfg.n_freqs();
        let mut out = vec![Complex64::new(0.0, 0.0); n_freqs * n_frames];
        let mut frame = vec![0.0; cfg.fft_len];
        for t in 0..n_frames {
            for i in 0..cfg.window_len {
                frame[i] = self.window[i] * gacc[t * cfg.hop + i];
            }
            let g = self.fft.inverse_adjoint(&frame);
            for (f, c) in g.into_iter().enumerate() {
                out[f * n_frames + t] = c;
            }
        }
        out
    }
}

pub fn stft(x: &TimeSeries, config: &StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(*config)?.forward(x)
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<TimeSeries> {
    Stft::new(spec.config)?.inverse(spec)
}
