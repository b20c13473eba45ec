use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::noise::{sample_bands, scale_to_snr, synthesize_noise, MixtureParams, NoiseBands, NoiseWeights};
use crate::rng::{derive_seed, seeded, Rng};
use crate::synth::{make_rr, scale_fetal, scale_to_peak, synth_ecg, EcgModelParams, FetalAmplitudeBand, SynthEcg};
use crate::{mean_square, Result, TimeSeries, DEFAULT_FS};

/// Everything that shapes one synthetic record besides its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordConfig {
    pub fs: f64,
    pub duration_s: f64,
    /// SNR of the noise against mECG + fECG, drawn uniformly (dB).
    pub snr_db: (f64, f64),
    pub maternal_hr: (f64, f64),
    pub maternal_hrv: f64,
    pub fetal_hr: (f64, f64),
    pub fetal_hrv: f64,
    pub fetal_amplitude: FetalAmplitudeBand,
    /// Maternal over fetal peak amplitude, drawn log-uniformly.
    pub maternal_ratio: (f64, f64),
    pub maternal_model: EcgModelParams,
    pub fetal_model: EcgModelParams,
    pub weights: NoiseWeights,
    pub mixture: MixtureParams,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            fs: DEFAULT_FS,
            duration_s: 60.0,
            snr_db: (5.0, 20.0),
            maternal_hr: (65.0, 95.0),
            maternal_hrv: 1.0,
            fetal_hr: (120.0, 160.0),
            fetal_hrv: 2.0,
            fetal_amplitude: FetalAmplitudeBand::default(),
            maternal_ratio: (10f64.powf(0.05), 10f64.powf(1.2)),
            maternal_model: EcgModelParams::default(),
            fetal_model: EcgModelParams::default(),
            weights: NoiseWeights::default(),
            mixture: MixtureParams::default(),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(invalid(format!("{name} range [{lo}, {hi}] is not a valid interval")));
    }
    Ok(())
}

impl RecordConfig {
    pub fn validate(&self) -> Result<()> {
        // constructing a series checks the sampling rate
        TimeSeries::new(Vec::new(), self.fs)?;
        if !(self.duration_s >= 2.0 && self.duration_s.is_finite()) {
            return Err(invalid(format!("duration {} s must be at least 2 s", self.duration_s)));
        }
        check_range("SNR", self.snr_db)?;
        check_range("maternal HR", self.maternal_hr)?;
        check_range("fetal HR", self.fetal_hr)?;
        check_range("maternal ratio", self.maternal_ratio)?;
        if self.maternal_ratio.0 <= 0.0 {
            return Err(invalid("maternal ratio must be positive"));
        }
        for (lo, hi) in [self.maternal_hr, self.fetal_hr] {
            if lo < 60.0 || hi > 240.0 {
                return Err(invalid(format!("heart-rate range [{lo}, {hi}] outside [60, 240] bpm")));
            }
        }
        self.fetal_amplitude.validate()?;
        self.maternal_model.validate()?;
        self.fetal_model.validate()?;
        self.weights.validate()?;
        self.mixture.validate()
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub seed: u64,
    /// SNR of the noise against mECG + fECG.
    pub snr_db: f64,
    pub bands: NoiseBands,
    pub fetal_peak_uv: f64,
    pub maternal_peak_uv: f64,
    pub maternal_hr: f64,
    pub fetal_hr: f64,
    pub maternal_rpeaks: Vec<usize>,
    pub fetal_rpeaks: Vec<usize>,
}

/// One synthetic abdominal recording with its ground-truth components.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub abdominal: TimeSeries,
    pub fecg_ref: TimeSeries,
    pub mecg_ref: TimeSeries,
    pub noise_ref: TimeSeries,
    pub meta: RecordMeta,
}

impl Record {
    /// SNR treating only the fetal trace as signal (maternal ECG counts as noise).
    pub fn fetal_snr_db(&self) -> f64 {
        let p_f = self.fecg_ref.power();
        let other: Vec<f64> = self
            .mecg_ref
            .samples
            .iter()
            .zip(&self.noise_ref.samples)
            .map(|(m, n)| m + n)
            .collect();
        10.0 * (p_f / mean_square(&other)).log10()
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// The SNR a record with this seed will carry; it is the first draw of the
/// record's stream, so manifests can list it without synthesising anything.
pub fn record_snr(seed: u64, cfg: &RecordConfig) -> f64 {
    uniform(&mut seeded(seed), cfg.snr_db)
}

fn trace(model: &EcgModelParams, hr: f64, hrv: f64, n: usize, fs: f64, rng: &mut Rng) -> Result<SynthEcg> {
    let duration = n as f64 / fs;
    let mut beats = (duration * hr / 60.0 * 1.25).ceil() as usize + 2;
    loop {
        let rr = make_rr(hr, hrv, beats, rng)?;
        if rr.total_duration() * fs >= n as f64 {
            let mut ecg = synth_ecg(model, &rr, fs)?;
            ecg.signal.samples.truncate(n);
            ecg.r_peaks.retain(|&p| p < n);
            return Ok(ecg);
        }
        beats *= 2;
    }
}

pub fn generate_record(seed: u64, cfg: &RecordConfig) -> Result<Record> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let fs = cfg.fs;
    let mut rng = seeded(seed);
    let snr_db = uniform(&mut rng, cfg.snr_db);
    let bands = sample_bands(&mut rng);
    let maternal_hr = uniform(&mut rng, cfg.maternal_hr);
    let fetal_hr = uniform(&mut rng, cfg.fetal_hr);
    let ratio = uniform(&mut rng, (cfg.maternal_ratio.0.ln(), cfg.maternal_ratio.1.ln())).exp();

    // independent streams for the two hearts and the noise
    let mut m_rng = seeded(derive_seed(seed, 1));
    let mut f_rng = seeded(derive_seed(seed, 2));
    let mut n_rng = seeded(derive_seed(seed, 3));
    let m = trace(&cfg.maternal_model, maternal_hr, cfg.maternal_hrv, n, fs, &mut m_rng)?;
    let f = trace(&cfg.fetal_model, fetal_hr, cfg.fetal_hrv, n, fs, &mut f_rng)?;
    let (fecg, fetal_peak_uv) = scale_fetal(&f.signal, &cfg.fetal_amplitude, &mut f_rng)?;
    let maternal_peak_uv = ratio * fetal_peak_uv;
    let mecg = scale_to_peak(&m.signal, maternal_peak_uv)?;

    let clean: Vec<f64> = mecg.samples.iter().zip(&fecg.samples).map(|(a, b)| a + b).collect();
    let clean = TimeSeries::new(clean, fs)?;
    let raw = synthesize_noise(n, fs, &bands, &cfg.weights, &cfg.mixture, &mut n_rng)?;
    let noise = scale_to_snr(&raw, &clean, snr_db)?;
    let abdominal: Vec<f64> = clean.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect();

    Ok(Record {
        abdominal: TimeSeries::new(abdominal, fs)?,
        fecg_ref: fecg,
        mecg_ref: mecg,
        noise_ref: noise,
        meta: RecordMeta {
            seed,
            snr_db,
            bands,
            fetal_peak_uv,
            maternal_peak_uv,
            maternal_hr,
            fetal_hr,
            maternal_rpeaks: m.r_peaks,
            fetal_rpeaks: f.r_peaks,
        },
    })
}
