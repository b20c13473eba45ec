//! R-peak detection and the extraction / detection scores.

mod detect;
mod metrics;

pub use detect::{detect_rpeaks, detect_rpeaks_with, DetectorConfig};
pub use metrics::{
    detection_metrics, hr_error, match_rpeaks, pcc, pcc_centered, prd, score, PeakMatch, RecordScores,
    MATCH_TOLERANCE_S,
};
