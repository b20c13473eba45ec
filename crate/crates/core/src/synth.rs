//! Phase-domain ECG synthesis.
//!
//! Each cardiac cycle is a sum of five Gaussian waves (P, Q, R, S, T) laid on
//! a phase ramp that sweeps from -pi to pi over the beat's RR interval. The
//! same wave description drives the Kalman baselines as their observation
//! model.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::invalid;
use crate::rng::Rng;
use crate::{Result, TimeSeries};

/// Fetal peak amplitude ceiling in microvolts.
pub const FETAL_PEAK_CAP_UV: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WaveLabel {
    P,
    Q,
    R,
    S,
    T,
}

/// One Gaussian bump of the cycle: angular position, amplitude and width (radians).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianWave {
    pub label: WaveLabel,
    pub theta: f64,
    pub amplitude: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EcgModelParams {
    pub waves: [GaussianWave; 5],
    pub base_amplitude_scale: f64,
}

impl Default for EcgModelParams {
    fn default() -> Self {
        use WaveLabel::*;
        let w = |label, theta, amplitude, width| GaussianWave {
            label,
            theta,
            amplitude,
            width,
        };
        Self {
            waves: [
                w(P, -PI / 3.0, 0.15, 0.25),
                w(Q, -PI / 12.0, -0.12, 0.1),
                w(R, 0.0, 1.0, 0.1),
                w(S, PI / 12.0, -0.25, 0.1),
                w(T, PI / 2.0, 0.3, 0.4),
            ],
            base_amplitude_scale: 1.0,
        }
    }
}

impl EcgModelParams {
    pub fn validate(&self) -> Result<()> {
        for pair in self.waves.windows(2) {
            if pair[1].theta <= pair[0].theta {
                return Err(invalid("wave positions must be strictly increasing"));
            }
        }
        for w in &self.waves {
            if !(w.theta > -PI && w.theta <= PI) {
                return Err(invalid(format!("wave position {} outside (-pi, pi]", w.theta)));
            }
            if !(w.width > 0.0 && w.width.is_finite()) {
                return Err(invalid(format!("wave width {} must be positive", w.width)));
            }
            if !w.amplitude.is_finite() {
                return Err(invalid("wave amplitude must be finite"));
            }
        }
        if !self.base_amplitude_scale.is_finite() {
            return Err(invalid("amplitude scale must be finite"));
        }
        Ok(())
    }

    /// Copy with every wave amplitude multiplied by `factor`.
    pub fn with_amplitudes_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.waves {
            w.amplitude *= factor;
        }
        out
    }

    /// Angular position of the R wave, or 0 if no wave carries the R label.
    pub fn r_theta(&self) -> f64 {
        self.waves
            .iter()
            .find(|w| w.label == WaveLabel::R)
            .map_or(0.0, |w| w.theta)
    }

    /// Gaussian-sum value at phase `theta`.
    pub fn value(&self, theta: f64) -> f64 {
        self.base_amplitude_scale
            * self
                .waves
                .iter()
                .map(|w| {
                    let d = wrap_phase(theta - w.theta);
                    w.amplitude * (-d * d / (2.0 * w.width * w.width)).exp()
                })
                .sum::<f64>()
    }

    /// Derivative of [`Self::value`] with respect to phase.
    pub fn derivative(&self, theta: f64) -> f64 {
        self.base_amplitude_scale
            * self
                .waves
                .iter()
                .map(|w| {
                    let d = wrap_phase(theta - w.theta);
                    let b2 = w.width * w.width;
                    -w.amplitude * d / b2 * (-d * d / (2.0 * b2)).exp()
                })
                .sum::<f64>()
    }

    /// Mean of the Gaussian sum over one full phase revolution, computed by
    /// midpoint quadrature.
    pub fn cycle_mean(&self) -> f64 {
        const N: usize = 4096;
        (0..N)
            .map(|i| self.value(-PI + 2.0 * PI * (i as f64 + 0.5) / N as f64))
            .sum::<f64>()
            / N as f64
    }
}

/// Wraps a phase difference into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Beat-to-beat intervals in seconds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RrSeries {
    intervals: Vec<f64>,
}

impl RrSeries {
    pub const MIN_INTERVAL: f64 = 0.2;
    pub const MAX_INTERVAL: f64 = 2.0;

    pub fn new(intervals: Vec<f64>) -> Result<Self> {
        if let Some(bad) = intervals
            .iter()
            .find(|v| !(**v >= Self::MIN_INTERVAL && **v <= Self::MAX_INTERVAL))
        {
            return Err(invalid(format!("RR interval {bad} s outside [0.2, 2.0]")));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals.iter().sum()
    }
}

/// Synthesised trace plus the generator's R-peak sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthEcg {
    pub signal: TimeSeries,
    pub r_peaks: Vec<usize>,
}

/// Renders one Gaussian-sum cycle per RR interval.
///
/// Every cycle is made zero-mean over its own samples. The returned R-peak
/// annotations are the samples nearest to the R wave's phase in each beat.
pub fn synth_ecg(params: &EcgModelParams, rr: &RrSeries, fs: f64) -> Result<SynthEcg> {
    params.validate()?;
    if rr.intervals.is_empty() {
        return Err(invalid("RR series is empty"));
    }
    let total = rr.total_duration();
    let n = (total * fs - 1e-9).ceil().max(0.0) as usize;
    let mut samples = vec![0.0; n];
    let mut r_peaks = Vec::with_capacity(rr.intervals.len());
    let r_theta = params.r_theta();

    let mut beat_start = 0.0_f64;
    let mut idx = 0usize;
    for &interval in &rr.intervals {
        let beat_end = beat_start + interval;
        let first = idx;
        while idx < n && (idx as f64) / fs < beat_end {
            let t = idx as f64 / fs;
            let theta = -PI + 2.0 * PI * (t - beat_start) / interval;
            samples[idx] = params.value(theta);
            idx += 1;
        }
        let count = idx - first;
        if count > 0 {
            let mean = samples[first..idx].iter().sum::<f64>() / count as f64;
            samples[first..idx].iter_mut().for_each(|v| *v -= mean);
        }
        let r_time = beat_start + interval * (r_theta + PI) / (2.0 * PI);
        let r_idx = (r_time * fs).round() as usize;
        if r_idx < n {
            r_peaks.push(r_idx);
        }
        beat_start = beat_end;
    }

    Ok(SynthEcg {
        signal: TimeSeries::new(samples, fs)?,
        r_peaks,
    })
}

/// Draws `n_beats` RR intervals whose instantaneous heart rate is
/// Normal(mean_hr, hrv_std) bpm, clamped to the valid interval range.
pub fn make_rr(mean_hr: f64, hrv_std: f64, n_beats: usize, rng: &mut Rng) -> Result<RrSeries> {
    if !(60.0..=240.0).contains(&mean_hr) {
        return Err(invalid(format!("mean heart rate {mean_hr} bpm outside [60, 240]")));
    }
    if n_beats == 0 {
        return Err(invalid("n_beats must be at least 1"));
    }
    if !(hrv_std >= 0.0 && hrv_std.is_finite()) {
        return Err(invalid("hrv_std must be non-negative"));
    }
    let intervals = if hrv_std == 0.0 {
        vec![60.0 / mean_hr; n_beats]
    } else {
        let normal = Normal::new(mean_hr, hrv_std).map_err(|e| invalid(e.to_string()))?;
        (0..n_beats)
            .map(|_| {
                let hr: f64 = normal.sample(rng);
                let rr = if hr > 0.0 { 60.0 / hr } else { RrSeries::MAX_INTERVAL };
                rr.clamp(RrSeries::MIN_INTERVAL, RrSeries::MAX_INTERVAL)
            })
            .collect()
    };
    RrSeries::new(intervals)
}

/// Closed interval of fetal peak amplitudes (µV) standing in for gestational age.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FetalAmplitudeBand {
    pub low_uv: f64,
    pub high_uv: f64,
}

impl Default for FetalAmplitudeBand {
    fn default() -> Self {
        Self {
            low_uv: 5.0,
            high_uv: FETAL_PEAK_CAP_UV,
        }
    }
}

impl FetalAmplitudeBand {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_uv > 0.0 && self.low_uv <= self.high_uv && self.high_uv <= FETAL_PEAK_CAP_UV) {
            return Err(invalid(format!(
                "fetal amplitude band [{}, {}] must satisfy 0 < low <= high <= {FETAL_PEAK_CAP_UV}",
                self.low_uv, self.high_uv
            )));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut Rng) -> f64 {
        if self.low_uv == self.high_uv {
            return self.low_uv;
        }
        rng.random_range(self.low_uv..=self.high_uv)
    }
}

/// Rescales `x` so its peak absolute value equals `target`.
pub fn scale_to_peak(x: &TimeSeries, target: f64) -> Result<TimeSeries> {
    let peak = x.max_abs();
    if peak == 0.0 {
        return Err(invalid("cannot rescale an all-zero signal"));
    }
    Ok(x.scaled(target / peak))
}

/// Rescales a fetal trace to a peak amplitude drawn from `band`; returns the
/// rescaled trace and the drawn peak.
pub fn scale_fetal(fecg: &TimeSeries, band: &FetalAmplitudeBand, rng: &mut Rng) -> Result<(TimeSeries, f64)> {
    band.validate()?;
    if fecg.is_empty() {
        return Err(invalid("fetal trace is empty"));
    }
    let target = band.draw(rng);
    Ok((scale_to_peak(fecg, target)?, target))
}
