//! Classical single-channel comparators.

mod ekf;
mod svd;

pub use ekf::{ekf_denoise, eks_denoise, fit_amplitudes, phase_from_rpeaks, EkfConfig};
pub use svd::{svd_template_subtract, BeatMatrix, HALF_LEN, ROW_LEN};

use crate::TimeSeries;

/// Output of a maternal-cancellation baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    /// The tracked or reconstructed component.
    pub estimate: TimeSeries,
    /// Input minus the estimate; the fetal candidate.
    pub residual: TimeSeries,
}

/// Sub-sample R positions from a parabola through each peak sample and its
/// neighbours. Works for either polarity and is invariant to scaling.
pub fn refine_peaks(x: &[f64], rpeaks: &[usize]) -> Vec<f64> {
    rpeaks
        .iter()
        .map(|&p| {
            if p == 0 || p + 1 >= x.len() {
                return p as f64;
            }
            let (a, b, c) = (x[p - 1], x[p], x[p + 1]);
            let den = a - 2.0 * b + c;
            if den == 0.0 {
                return p as f64;
            }
            p as f64 + (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        })
        .collect()
}

/// Default ranks for the two template-subtraction passes.
pub const MATERNAL_RANK: usize = 1;
pub const FETAL_RANK: usize = 2;
