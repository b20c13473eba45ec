//! 50 Hz notch and 1-100 Hz bandpass front end.
//!
//! Both filters are Butterworth designs realised as cascaded second-order
//! sections and applied forward-backward, so the effective magnitude response
//! is squared and the phase response is zero.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    /// Band-stop around `center` with total width `bandwidth` (Hz).
    Notch { center: f64, bandwidth: f64 },
    /// Pass band `[low, high]` (Hz).
    Bandpass { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Total filter order (number of poles).
    pub order: usize,
}

impl FilterSpec {
    pub fn notch_50hz() -> Self {
        Self {
            kind: FilterKind::Notch {
                center: 50.0,
                bandwidth: 1.0,
            },
            order: 10,
        }
    }

    pub fn bandpass_1_100() -> Self {
        Self::bandpass(1.0, 100.0, 10)
    }

    pub fn bandpass(low: f64, high: f64, order: usize) -> Self {
        Self {
            kind: FilterKind::Bandpass { low, high },
            order,
        }
    }

    fn edges(&self) -> (f64, f64) {
        match self.kind {
            FilterKind::Notch { center, bandwidth } => (center - bandwidth / 2.0, center + bandwidth / 2.0),
            FilterKind::Bandpass { low, high } => (low, high),
        }
    }
}

/// One biquad, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (self.a[0] + z1 * self.a[1] + z2 * self.a[2])
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// A designed filter as a cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub fs: f64,
}

impl SosFilter {
    pub fn design(spec: &FilterSpec, fs: f64) -> Result<Self> {
        if spec.order < 2 || !spec.order.is_multiple_of(2) {
            return Err(Error::FilterDesign(format!(
                "order {} must be even and at least 2",
                spec.order
            )));
        }
        let (lo, hi) = spec.edges();
        if !(lo > 0.0 && hi > lo && hi < fs / 2.0) {
            return Err(Error::FilterDesign(format!(
                "band [{lo}, {hi}] Hz must lie inside (0, {}) Hz",
                fs / 2.0
            )));
        }
        let n = spec.order / 2;
        let fs2 = 2.0 * fs;
        let w_lo = fs2 * (PI * lo / fs).tan();
        let w_hi = fs2 * (PI * hi / fs).tan();
        let w0 = (w_lo * w_hi).sqrt();
        let bw = w_hi - w_lo;
        let bandstop = matches!(spec.kind, FilterKind::Notch { .. });

        let mut analog = Vec::with_capacity(2 * n);
        for k in 0..n {
            let p = Complex64::from_polar(1.0, PI * (2 * k + n + 1) as f64 / (2 * n) as f64);
            // Roots of s^2 - c s + w0^2 with c = p*bw (bandpass) or bw/p (bandstop).
            let c = if bandstop { bw / p } else { p * bw };
            let disc = (c * c - 4.0 * w0 * w0).sqrt();
            analog.push((c + disc) / 2.0);
            analog.push((c - disc) / 2.0);
        }
        let poles: Vec<Complex64> = analog.iter().map(|s| (fs2 + s) / (fs2 - s)).collect();
        if let Some(bad) = poles.iter().find(|z| !(z.norm() < 1.0 - 1e-12)) {
            return Err(Error::FilterDesign(format!(
                "unstable design: pole magnitude {} at fs = {fs} Hz",
                bad.norm()
            )));
        }

        let b = if bandstop {
            let angle = 2.0 * (w0 / fs2).atan();
            [1.0, -2.0 * angle.cos(), 1.0]
        } else {
            [1.0, 0.0, -1.0]
        };
        let mut sections: Vec<Biquad> = pair_poles(&poles)?.into_iter().map(|a| Biquad { b, a }).collect();

        let reference = if bandstop { 0.0 } else { angle_of(w0, fs2) };
        let gain: f64 = sections.iter().map(|s| s.response(reference).norm()).product();
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::FilterDesign("degenerate gain normalisation".into()));
        }
        let per = gain.powf(-1.0 / sections.len() as f64);
        for s in &mut sections {
            s.b.iter_mut().for_each(|v| *v *= per);
        }
        Ok(Self { sections, fs })
    }

    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        let w = 2.0 * PI * freq / self.fs;
        self.sections.iter().map(|s| s.response(w)).product()
    }

    /// Causal single pass starting from the steady state of a constant input
    /// equal to `init_scale`.
    fn run(&self, x: &mut [f64], init_scale: f64) {
        let mut level = 1.0;
        for s in &self.sections {
            let g = s.dc_gain();
            let mut z1 = init_scale * level * (g - s.b[0]);
            let mut z2 = init_scale * level * (s.b[2] - s.a[2] * g);
            for v in x.iter_mut() {
                let xin = *v;
                let y = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[1] * y + z2;
                z2 = s.b[2] * xin - s.a[2] * y;
                *v = y;
            }
            level *= g;
        }
    }

    /// Samples needed for the slowest pole to decay by a factor 1e4.
    fn settle_len(&self) -> usize {
        let r = self
            .sections
            .iter()
            .map(|s| {
                // largest root magnitude of z^2 + a1 z + a2
                let disc = s.a[1] * s.a[1] - 4.0 * s.a[2];
                if disc < 0.0 {
                    s.a[2].sqrt()
                } else {
                    (s.a[1].abs() + disc.sqrt()) / 2.0
                }
            })
            .fold(0.0, f64::max);
        if r <= 0.0 {
            return 0;
        }
        ((1e-4f64).ln() / r.ln()).ceil() as usize
    }

    /// Zero-phase forward-backward application with odd-extension padding
    /// long enough for start-up transients to decay before the data.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            let mut y = x.to_vec();
            self.run(&mut y, x[0]);
            return y;
        }
        let min_pad = 3 * (2 * self.sections.len() + 1);
        let pad = min_pad.max(self.settle_len()).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

fn angle_of(w_analog: f64, fs2: f64) -> f64 {
    2.0 * (w_analog / fs2).atan()
}

/// Groups z-plane poles into biquad denominators: conjugate pairs first,
/// then real poles two at a time.
fn pair_poles(poles: &[Complex64]) -> Result<Vec<[f64; 3]>> {
    const IMAG_TOL: f64 = 1e-10;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im.abs() <= IMAG_TOL {
            reals.push(p.re);
        } else if p.im > 0.0 {
            out.push([1.0, -2.0 * p.re, p.norm_sqr()]);
        }
    }
    if reals.len() % 2 != 0 {
        return Err(Error::FilterDesign("odd number of real poles".into()));
    }
    reals.sort_by(f64::total_cmp);
    for pair in reals.chunks(2) {
        out.push([1.0, -(pair[0] + pair[1]), pair[0] * pair[1]]);
    }
    Ok(out)
}

/// Designs `spec` at `x.fs` and applies it forward-backward.
pub fn apply_filter(x: &TimeSeries, spec: &FilterSpec) -> Result<TimeSeries> {
    let (_, hi) = spec.edges();
    if x.fs <= 2.0 * hi {
        return Err(Error::FilterDesign(format!(
            "sampling rate {} Hz too low for band edge {hi} Hz",
            x.fs
        )));
    }
    let filter = SosFilter::design(spec, x.fs)?;
    TimeSeries::new(filter.filtfilt(&x.samples), x.fs)
}

/// Default front end: 50 Hz notch followed by the 1-100 Hz bandpass.
pub fn preprocess(x: &TimeSeries) -> Result<TimeSeries> {
    let notched = apply_filter(x, &FilterSpec::notch_50hz())?;
    apply_filter(&notched, &FilterSpec::bandpass_1_100())
}
