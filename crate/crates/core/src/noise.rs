//! Dry-electrode noise model.
//!
//! Three components are synthesised independently: pink noise limited to
//! `[1, pink_hi]` Hz, white noise limited to `[1, white_hi]` Hz and an
//! impulsive Gaussian mixture limited to `[1, 100]` Hz. Their spectra are
//! each normalised to unit peak magnitude, weighted, summed and brought back
//! to the time domain with one inverse transform.

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::invalid;
use crate::rng::Rng;
use crate::spectral::RealFft;
use crate::{mean_square, Result, TimeSeries};

/// Lowest frequency kept in every component.
pub const LOW_EDGE_HZ: f64 = 1.0;
/// Upper edge of the band of interest; nothing is synthesised above it.
pub const BAND_TOP_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseBands {
    pub pink_hi: f64,
    pub white_hi: f64,
}

impl NoiseBands {
    pub const PINK_RANGE: (f64, f64) = (9.0, 12.0);
    pub const WHITE_RANGE: (f64, f64) = (60.0, 90.0);

    pub fn validate(&self) -> Result<()> {
        let (pl, ph) = Self::PINK_RANGE;
        let (wl, wh) = Self::WHITE_RANGE;
        if !(pl..=ph).contains(&self.pink_hi) || !(wl..=wh).contains(&self.white_hi) {
            return Err(invalid(format!(
                "noise bands pink_hi={} white_hi={} outside [9,12] / [60,90] Hz",
                self.pink_hi, self.white_hi
            )));
        }
        Ok(())
    }
}

/// Draws randomised band edges: pink upper edge in [9, 12] Hz, white upper edge in [60, 90] Hz.
pub fn sample_bands(rng: &mut Rng) -> NoiseBands {
    let (pl, ph) = NoiseBands::PINK_RANGE;
    let (wl, wh) = NoiseBands::WHITE_RANGE;
    NoiseBands {
        pink_hi: rng.random_range(pl..=ph),
        white_hi: rng.random_range(wl..=wh),
    }
}

/// Background/impulse Gaussian mixture parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureParams {
    pub sigma0: f64,
    pub sigma1: f64,
    pub p: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma1: 10.0,
            p: 0.1,
        }
    }
}

impl MixtureParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("impulse probability {} outside [0, 1]", self.p)));
        }
        if !(self.sigma0 > 0.0 && self.sigma1 > 0.0) {
            return Err(invalid("mixture standard deviations must be positive"));
        }
        Ok(())
    }

    /// Closed-form variance `(1-p) sigma0^2 + p sigma1^2`.
    pub fn variance(&self) -> f64 {
        (1.0 - self.p) * self.sigma0 * self.sigma0 + self.p * self.sigma1 * self.sigma1
    }
}

/// Spectral weights of the three components.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseWeights {
    pub pink: f64,
    pub white: f64,
    pub mixture: f64,
}

impl Default for NoiseWeights {
    fn default() -> Self {
        Self {
            pink: 2.0,
            white: 0.2,
            mixture: 0.15,
        }
    }
}

impl NoiseWeights {
    pub fn validate(&self) -> Result<()> {
        for w in [self.pink, self.white, self.mixture] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(format!("noise weight {w} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// `x_i = (sigma0 (1 - u_i) + sigma1 u_i) z_i` with `u_i ~ Bernoulli(p)`, `z_i ~ N(0, 1)`.
pub fn gaussian_mixture(n: usize, params: &MixtureParams, rng: &mut Rng) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("mixture length must be at least 1"));
    }
    Ok((0..n)
        .map(|_| {
            let u = if rng.random_bool(params.p) { 1.0 } else { 0.0 };
            let z: f64 = StandardNormal.sample(rng);
            (params.sigma0 * (1.0 - u) + params.sigma1 * u) * z
        })
        .collect())
}

fn white(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Zeroes bins outside `[lo, hi]` Hz and optionally applies a 1/sqrt(f) shape.
fn band_limit(spec: &mut [Complex64], n: usize, fs: f64, lo: f64, hi: f64, pink: bool) {
    let df = fs / n as f64;
    for (k, c) in spec.iter_mut().enumerate() {
        let f = k as f64 * df;
        if f < lo || f > hi {
            *c = Complex64::new(0.0, 0.0);
        } else if pink {
            *c /= f.sqrt();
        }
    }
}

fn normalise_peak(spec: &mut [Complex64]) {
    let peak = spec.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
    if peak > 0.0 {
        spec.iter_mut().for_each(|c| *c /= peak);
    }
}

/// Synthesises one dry-electrode noise trace of `n_samples`.
///
/// All three component streams are always drawn (in the order pink, white,
/// mixture) so the random stream does not depend on the weights.
pub fn synthesize_noise(
    n_samples: usize,
    fs: f64,
    bands: &NoiseBands,
    weights: &NoiseWeights,
    mix: &MixtureParams,
    rng: &mut Rng,
) -> Result<TimeSeries> {
    weights.validate()?;
    mix.validate()?;
    if !(fs > 2.0 * BAND_TOP_HZ) {
        return Err(invalid(format!("sampling rate {fs} Hz cannot carry the noise band")));
    }
    if (n_samples as f64) < fs {
        return Err(invalid(format!(
            "noise length {n_samples} shorter than one second at {fs} Hz"
        )));
    }
    if bands.pink_hi <= LOW_EDGE_HZ || bands.white_hi <= LOW_EDGE_HZ {
        return Err(invalid("noise band edges must lie above 1 Hz"));
    }

    let fft = RealFft::new(n_samples);
    let pink_t = white(n_samples, rng);
    let white_t = white(n_samples, rng);
    let mix_t = gaussian_mixture(n_samples, mix, rng)?;

    let mut total = vec![Complex64::new(0.0, 0.0); n_samples / 2 + 1];
    let parts = [
        (pink_t, bands.pink_hi, true, weights.pink),
        (white_t, bands.white_hi, false, weights.white),
        (mix_t, BAND_TOP_HZ, false, weights.mixture),
    ];
    for (signal, hi, pink, weight) in parts {
        let mut spec = fft.forward(&signal);
        band_limit(&mut spec, n_samples, fs, LOW_EDGE_HZ, hi, pink);
        normalise_peak(&mut spec);
        for (t, s) in total.iter_mut().zip(&spec) {
            *t += s * weight;
        }
    }
    TimeSeries::new(fft.inverse(&total), fs)
}

/// Rescales `noise` so that `10 log10(P_reference / P_noise) = snr_db`.
pub fn scale_to_snr(noise: &TimeSeries, reference: &TimeSeries, snr_db: f64) -> Result<TimeSeries> {
    if noise.len() != reference.len() || noise.fs != reference.fs {
        return Err(invalid("noise and reference must share length and sampling rate"));
    }
    if !snr_db.is_finite() {
        return Err(invalid("SNR must be finite"));
    }
    let p_ref = reference.power();
    if p_ref == 0.0 {
        return Err(invalid("reference has zero power"));
    }
    let p_noise = noise.power();
    if p_noise == 0.0 {
        return Err(invalid("noise has zero power"));
    }
    let target = p_ref / 10f64.powf(snr_db / 10.0);
    Ok(noise.scaled((target / p_noise).sqrt()))
}

/// Measured SNR in dB between two equal-length traces.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (mean_square(signal) / mean_square(noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn sample_std(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
    }

    #[test]
    fn bands_stay_in_range_and_repeat() {
        let mut rng = seeded(2024);
        for _ in 0..10_000 {
            let b = sample_bands(&mut rng);
            assert!((9.0..=12.0).contains(&b.pink_hi));
            assert!((60.0..=90.0).contains(&b.white_hi));
            b.validate().unwrap();
        }
        assert_eq!(sample_bands(&mut seeded(4)), sample_bands(&mut seeded(4)));
    }

    #[test]
    fn mixture_collapses_at_extremes() {
        let n = 1_000_000;
        let p0 = MixtureParams {
            p: 0.0,
            ..Default::default()
        };
        let p1 = MixtureParams {
            p: 1.0,
            ..Default::default()
        };
        let s0 = sample_std(&gaussian_mixture(n, &p0, &mut seeded(1)).unwrap());
        let s1 = sample_std(&gaussian_mixture(n, &p1, &mut seeded(2)).unwrap());
        assert!((s0 - 1.0).abs() < 0.005, "{s0}");
        assert!((s1 - 10.0).abs() < 0.05, "{s1}");
    }

    #[test]
    fn mixture_moment_matches_closed_form() {
        let params = MixtureParams::default();
        assert!((params.variance() - 10.9).abs() < 1e-12);
        let n = 1_000_000;
        let x = gaussian_mixture(n, &params, &mut seeded(3)).unwrap();
        let var = sample_std(&x).powi(2);
        // Var of x^2 for the mixture: E[x^4] - var^2, E[x^4] = 3((1-p)s0^4 + p s1^4)
        let m4 = 3.0 * (0.9 * 1.0 + 0.1 * 10_000.0);
        let se = ((m4 - params.variance().powi(2)) / n as f64).sqrt();
        assert!((var - params.variance()).abs() < 3.0 * se, "{var} vs 10.9 (se {se})");
    }

    #[test]
    fn zero_weights_give_silence() {
        let w = NoiseWeights {
            pink: 0.0,
            white: 0.0,
            mixture: 0.0,
        };
        let bands = NoiseBands {
            pink_hi: 10.0,
            white_hi: 70.0,
        };
        let out = synthesize_noise(2500, 250.0, &bands, &w, &MixtureParams::default(), &mut seeded(0)).unwrap();
        assert!(out.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pink_power_stays_below_its_edge() {
        let w = NoiseWeights {
            pink: 2.0,
            white: 0.0,
            mixture: 0.0,
        };
        let bands = NoiseBands {
            pink_hi: 9.5,
            white_hi: 70.0,
        };
        let out = synthesize_noise(15_000, 250.0, &bands, &w, &MixtureParams::default(), &mut seeded(8)).unwrap();
        let spec = RealFft::new(out.len()).forward(&out.samples);
        let df = 250.0 / out.len() as f64;
        let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        let below: f64 = spec
            .iter()
            .enumerate()
            .filter(|(k, _)| (*k as f64) * df <= bands.pink_hi)
            .map(|(_, c)| c.norm_sqr())
            .sum();
        assert!(below / total >= 0.95);
    }

    #[test]
    fn snr_scaling() {
        let mut rng = seeded(5);
        let reference = TimeSeries::new(white(5000, &mut rng), 250.0).unwrap();
        let noise = TimeSeries::new(white(5000, &mut rng), 250.0).unwrap();
        let at0 = scale_to_snr(&noise, &reference, 0.0).unwrap();
        assert!((at0.power() / reference.power() - 1.0).abs() < 1e-9);
        let at20 = scale_to_snr(&noise, &reference, 20.0).unwrap();
        assert!((at20.power() * 100.0 / reference.power() - 1.0).abs() < 1e-9);
        let at5 = scale_to_snr(&noise, &reference, 5.0).unwrap();
        assert!((snr_db(&reference.samples, &at5.samples) - 5.0).abs() < 1e-3);
        let again = scale_to_snr(&at5, &reference, 5.0).unwrap();
        for (a, b) in again.samples.iter().zip(&at5.samples) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300));
        }
        let zero = TimeSeries::zeros(5000, 250.0).unwrap();
        assert!(scale_to_snr(&noise, &zero, 5.0).is_err());
        let short = TimeSeries::zeros(10, 250.0).unwrap();
        assert!(scale_to_snr(&short, &reference, 5.0).is_err());
    }

    #[test]
    fn rejects_short_noise() {
        let bands = NoiseBands {
            pink_hi: 10.0,
            white_hi: 70.0,
        };
        let r = synthesize_noise(
            100,
            250.0,
            &bands,
            &NoiseWeights::default(),
            &MixtureParams::default(),
            &mut seeded(0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let bands = NoiseBands {
            pink_hi: 11.0,
            white_hi: 80.0,
        };
        let make = || {
            synthesize_noise(
                3000,
                250.0,
                &bands,
                &NoiseWeights::default(),
                &MixtureParams::default(),
                &mut seeded(31),
            )
            .unwrap()
        };
        assert_eq!(make(), make());
    }
}
