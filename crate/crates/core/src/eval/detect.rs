//! QRS detection: bandpass, derivative, squaring, moving-window
//! integration and an adaptive dual threshold with search-back.

use serde::{Deserialize, Serialize};

use crate::preprocess::{FilterSpec, SosFilter};
use crate::{Error, Result, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub band_low: f64,
    pub band_high: f64,
    /// Minimum spacing between beats, seconds.
    pub refractory: f64,
    /// Integration window, seconds.
    pub window: f64,
}

impl DetectorConfig {
    pub fn maternal() -> Self {
        Self {
            band_low: 5.0,
            band_high: 15.0,
            refractory: 0.2,
            window: 0.15,
        }
    }

    pub fn fetal() -> Self {
        Self {
            band_low: 10.0,
            band_high: 40.0,
            refractory: 0.15,
            window: 0.08,
        }
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::maternal()
    }
}

fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > 0.0)
        .collect()
}

/// Detects R peaks with the maternal defaults.
pub fn detect_rpeaks(x: &TimeSeries) -> Result<Vec<usize>> {
    detect_rpeaks_with(x, &DetectorConfig::maternal())
}

pub fn detect_rpeaks_with(x: &TimeSeries, cfg: &DetectorConfig) -> Result<Vec<usize>> {
    let fs = x.fs;
    if x.duration() < 2.0 {
        return Err(Error::InvalidInput(format!(
            "detector needs at least 2 s of signal, got {:.3} s",
            x.duration()
        )));
    }
    if x.samples.iter().all(|v| *v == 0.0) {
        return Ok(Vec::new());
    }
    let filter = SosFilter::design(&FilterSpec::bandpass(cfg.band_low, cfg.band_high, 4), fs)?;
    let band = filter.filtfilt(&x.samples);
    let n = band.len();
    let deriv: Vec<f64> = (0..n)
        .map(|i| {
            let at = |k: isize| band[(i as isize + k).clamp(0, n as isize - 1) as usize];
            (2.0 * at(1) + at(2) - at(-2) - 2.0 * at(-1)) / 8.0
        })
        .collect();
    let sq: Vec<f64> = deriv.iter().map(|v| v * v).collect();
    let mwi = moving_average(&sq, ((cfg.window * fs).round() as usize).max(1));

    let refractory = (cfg.refractory * fs).round() as usize;
    let candidates = local_maxima(&mwi);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    // thresholds learnt on the first two seconds
    let learn = (2.0 * fs) as usize;
    let head = &mwi[..learn.min(n)];
    let mut spk = 0.25 * head.iter().cloned().fold(0.0, f64::max);
    let mut npk = 0.5 * head.iter().sum::<f64>() / head.len() as f64;
    let threshold = |spk: f64, npk: f64| npk + 0.25 * (spk - npk);

    let mut beats: Vec<usize> = Vec::new();
    let mut rr_avg: Option<f64> = None;
    let mut last_noise: Vec<usize> = Vec::new();
    for &c in &candidates {
        let v = mwi[c];
        if let Some(&last) = beats.last() {
            if c - last < refractory {
                if v > mwi[last] {
                    *beats.last_mut().unwrap() = c;
                }
                continue;
            }
            // search back for a missed beat among noise peaks
            if let Some(rr) = rr_avg {
                if (c - last) as f64 > 1.66 * rr {
                    let th2 = 0.5 * threshold(spk, npk);
                    let missed = last_noise
                        .iter()
                        .copied()
                        .filter(|&p| p > last + refractory && c >= p + refractory && mwi[p] > th2)
                        .max_by(|a, b| mwi[*a].total_cmp(&mwi[*b]));
                    if let Some(p) = missed {
                        beats.push(p);
                        spk = 0.25 * mwi[p] + 0.75 * spk;
                    }
                }
            }
        }
        if v > threshold(spk, npk) {
            if let Some(&last) = beats.last() {
                let rr = (c - last) as f64;
                rr_avg = Some(rr_avg.map_or(rr, |a| 0.875 * a + 0.125 * rr));
            }
            beats.push(c);
            spk = 0.125 * v + 0.875 * spk;
            last_noise.clear();
        } else {
            npk = 0.125 * v + 0.875 * npk;
            last_noise.push(c);
        }
    }

    // polarity of the dominant deflection at the detected complexes
    let half = (0.075 * fs).round() as usize;
    let (mut pos, mut neg) = (0.0, 0.0);
    for &b in &beats {
        let lo = b.saturating_sub(half);
        let hi = (b + half + 1).min(n);
        pos += band[lo..hi].iter().cloned().fold(0.0, f64::max);
        neg += -band[lo..hi].iter().cloned().fold(0.0, f64::min);
    }
    let sign = if neg > pos { -1.0 } else { 1.0 };

    let fine = (0.02 * fs).round() as usize;
    let mut refined: Vec<usize> = Vec::with_capacity(beats.len());
    for &b in &beats {
        let lo = b.saturating_sub(half);
        let hi = (b + half + 1).min(n);
        let coarse = (lo..hi)
            .max_by(|i, j| (sign * band[*i]).total_cmp(&(sign * band[*j])))
            .unwrap();
        // final position from the unfiltered signal close to the filtered peak
        let lo = coarse.saturating_sub(fine);
        let hi = (coarse + fine + 1).min(n);
        let raw = &x.samples;
        let p = (lo..hi)
            .max_by(|i, j| (sign * raw[*i]).total_cmp(&(sign * raw[*j])))
            .unwrap();
        match refined.last() {
            Some(&last) if p <= last || p - last < refractory => {
                if sign * x.samples[p] > sign * x.samples[last] {
                    *refined.last_mut().unwrap() = p;
                }
            }
            _ => refined.push(p),
        }
    }
    Ok(refined)
}
