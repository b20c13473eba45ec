use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extract::{Model, TrainingExample};
use super::net::CUNetParams;
use super::tensor::ComplexTensor;
use crate::rng::{derive_seed, seeded};
use crate::spectral::Stft;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many optimiser steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling.
    pub grad_clip: Option<f64>,
    pub spectral_weight: f64,
    pub time_weight: f64,
    /// Seeds shuffling; network initialisation uses the model's own seed.
    pub seed: u64,
    pub shuffle: bool,
    /// Worker threads for per-example gradients; `1` runs on the caller's thread.
    /// Results do not depend on this value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            max_steps: None,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: Some(5.0),
            spectral_weight: 1.0,
            time_weight: 1.0,
            seed: 0,
            shuffle: true,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate {} invalid", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.spectral_weight < 0.0 || self.time_weight < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Adaptive-moment optimiser over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Loss of one example, optionally adding its parameter gradient into `acc`.
///
/// The loss is the mean squared complex residual over the spectrogram grid
/// plus the mean squared residual of the reconstructed time signal.
pub fn example_loss(
    params: &CUNetParams,
    engine: &Stft,
    example: &TrainingExample,
    spectral_weight: f64,
    time_weight: f64,
    acc: Option<&mut CUNetParams>,
) -> Result<f64> {
    // the sampling rate is metadata only here
    let input = engine.forward_slice(&example.input, crate::DEFAULT_FS)?;
    let target = engine.forward_slice(&example.target, crate::DEFAULT_FS)?;
    let x = ComplexTensor::from_spectrogram(&input);
    let (y, cache) = params.forward_cached(&x)?;
    let grid = y.len() as f64;

    let mut out = input.clone();
    out.data = y.to_complex();
    let recon = engine.inverse_slice(&out)?;
    let n = recon.len() as f64;

    let mut spec_loss = 0.0;
    let mut grad = ComplexTensor::zeros(1, y.height, y.width);
    for (j, t) in target.data.iter().enumerate() {
        let dr = y.re[j] - t.re;
        let di = y.im[j] - t.im;
        spec_loss += dr * dr + di * di;
        grad.re[j] = spectral_weight * 2.0 * dr / grid;
        grad.im[j] = spectral_weight * 2.0 * di / grid;
    }
    spec_loss /= grid;

    let resid: Vec<f64> = recon.iter().zip(&example.target).map(|(a, b)| a - b).collect();
    let time_loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let loss = spectral_weight * spec_loss + time_weight * time_loss;

    if let Some(acc) = acc {
        if time_weight != 0.0 {
            let g_time: Vec<f64> = resid.iter().map(|r| time_weight * 2.0 * r / n).collect();
            for (j, c) in engine.inverse_adjoint(&g_time, y.width).into_iter().enumerate() {
                grad.re[j] += c.re;
                grad.im[j] += c.im;
            }
        }
        params.backward(&cache, &grad, acc)?;
    }
    Ok(loss)
}

/// Mean loss over a batch and its gradient, summed in index order so the
/// result is independent of the thread count.
pub fn batch_loss_and_grad(
    params: &CUNetParams,
    engine: &Stft,
    batch: &[&TrainingExample],
    cfg: &TrainConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, Vec<f64>)> {
    let one = |ex: &&TrainingExample| -> Result<(f64, Vec<f64>)> {
        let mut acc = params.zeros_like();
        let l = example_loss(params, engine, ex, cfg.spectral_weight, cfg.time_weight, Some(&mut acc))?;
        Ok((l, acc.flatten()))
    };
    let parts: Vec<Result<(f64, Vec<f64>)>> = match pool {
        Some(pool) => pool.install(|| batch.par_iter().map(one).collect()),
        None => batch.iter().map(one).collect(),
    };
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.num_params()];
    for part in parts {
        let (l, g) = part?;
        loss += l * scale;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b * scale;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Batch loss before each optimiser step.
    pub step_losses: Vec<f64>,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Trains `model` in place on `examples`.
pub fn train(model: &mut Model, examples: &[TrainingExample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    let engine = Stft::new(model.stft)?;
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let mut flat = model.params.flatten();
    let mut adam = Adam::new(flat.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    'epochs: for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.sort_unstable();
            order.shuffle(&mut seeded(derive_seed(cfg.seed, epoch as u64)));
        }
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                break 'epochs;
            }
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, mut grad) = batch_loss_and_grad(&model.params, &engine, &batch, cfg, pool.as_ref())?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {}",
                    report.steps
                )));
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            adam.step(&mut flat, &grad);
            model.params.load_flat(&flat)?;
            model.params.wrap_phases();
            flat = model.params.flatten();
            report.step_losses.push(loss);
            report.steps += 1;
            epoch_sum += loss;
            epoch_batches += 1;
        }
        if epoch_batches > 0 {
            let mean = epoch_sum / epoch_batches as f64;
            log::info!("epoch {epoch}: mean loss {mean:.6} over {epoch_batches} steps");
            report.epoch_losses.push(mean);
        }
    }
    Ok(report)
}
