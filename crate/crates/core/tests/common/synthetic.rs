//! Noiseless maternal/fetal traces shared by the baseline checks.

use fecg_core::rng::seeded;
use fecg_core::synth::{make_rr, scale_to_peak, synth_ecg, EcgModelParams, SynthEcg};
use fecg_core::TimeSeries;

pub const FS: f64 = 250.0;

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// 80 maternal beats at 80 bpm, 100 µV peak.
pub fn maternal(hrv: f64, seed: u64) -> SynthEcg {
    let rr = make_rr(80.0, hrv, 80, &mut seeded(seed)).unwrap();
    let mut m = synth_ecg(&EcgModelParams::default(), &rr, FS).unwrap();
    m.signal = scale_to_peak(&m.signal, 100.0).unwrap();
    m
}

/// 170 fetal beats at 140 bpm with 4 bpm jitter, 10 µV peak.
pub fn fetal(seed: u64) -> TimeSeries {
    let rr = make_rr(140.0, 4.0, 170, &mut seeded(seed)).unwrap();
    let f = synth_ecg(&EcgModelParams::default(), &rr, FS).unwrap();
    scale_to_peak(&f.signal, 10.0).unwrap()
}

/// Noiseless mECG + fECG over the maternal trace's length; regular maternal
/// rhythm, variable fetal rhythm. Returns the mixture, maternal R peaks and
/// the fetal component.
pub fn mixture(seed: u64) -> (TimeSeries, Vec<usize>, Vec<f64>) {
    let m = maternal(0.0, seed);
    let n = m.signal.len();
    let f = fetal(seed + 100);
    assert!(f.len() >= n);
    let fe = f.samples[..n].to_vec();
    let x: Vec<f64> = m.signal.samples.iter().zip(&fe).map(|(a, b)| a + b).collect();
    (TimeSeries::new(x, FS).unwrap(), m.r_peaks, fe)
}
