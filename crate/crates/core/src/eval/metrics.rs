use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Matching tolerance used throughout the evaluation, seconds.
pub const MATCH_TOLERANCE_S: f64 = 0.05;

/// One-to-one pairing of detected and reference beats.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakMatch {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(reference index, detected index)` sample positions, sorted by reference.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy nearest-neighbour matching: candidate pairs within `tol` seconds
/// are accepted in order of increasing distance when both ends are free.
pub fn match_rpeaks(detected: &[usize], reference: &[usize], fs: f64, tol: f64) -> PeakMatch {
    let limit = tol * fs;
    let mut candidates = Vec::new();
    let mut start = 0;
    for (ri, &r) in reference.iter().enumerate() {
        while start < detected.len() && (detected[start] as f64) < r as f64 - limit {
            start += 1;
        }
        for (di, &d) in detected.iter().enumerate().skip(start) {
            let dist = (d as f64 - r as f64).abs();
            if d as f64 > r as f64 + limit {
                break;
            }
            if dist <= limit {
                candidates.push((d.abs_diff(r), ri, di));
            }
        }
    }
    candidates.sort_unstable();
    let mut ref_used = vec![false; reference.len()];
    let mut det_used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    for (_, ri, di) in candidates {
        if !ref_used[ri] && !det_used[di] {
            ref_used[ri] = true;
            det_used[di] = true;
            pairs.push((reference[ri], detected[di]));
        }
    }
    pairs.sort_unstable();
    let tp = pairs.len();
    PeakMatch {
        tp,
        fp: detected.len() - tp,
        fn_: reference.len() - tp,
        pairs,
    }
}

/// Sensitivity and F-score in percent.
pub fn detection_metrics(m: &PeakMatch) -> Result<(f64, f64)> {
    if m.tp + m.fn_ == 0 {
        return Err(Error::UndefinedMetric("no reference beats".into()));
    }
    let tp = m.tp as f64;
    let se = 100.0 * tp / (tp + m.fn_ as f64);
    let f = 100.0 * 2.0 * tp / (2.0 * tp + m.fn_ as f64 + m.fp as f64);
    Ok((se, f))
}

/// RMS difference (bpm) between reference and detected instantaneous heart
/// rate over consecutive reference beats that are both matched.
pub fn hr_error(m: &PeakMatch, reference: &[usize], fs: f64) -> Result<f64> {
    if m.pairs.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "heart-rate error needs two matched beats, have {}",
            m.pairs.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in m.pairs.windows(2) {
        let (r0, d0) = w[0];
        let (r1, d1) = w[1];
        let i0 = reference.binary_search(&r0).ok();
        let i1 = reference.binary_search(&r1).ok();
        let consecutive = matches!((i0, i1), (Some(a), Some(b)) if b == a + 1);
        if !consecutive || d1 <= d0 {
            continue;
        }
        let hr_ref = 60.0 * fs / (r1 - r0) as f64;
        let hr_det = 60.0 * fs / (d1 - d0) as f64;
        sum += (hr_det - hr_ref).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("no consecutive matched beats".into()));
    }
    Ok((sum / count as f64).sqrt())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "reference has {} samples, estimate {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Percent root-mean-square difference.
pub fn prd(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("PRD of an all-zero reference".into()));
    }
    let num: f64 = reference.iter().zip(estimate).map(|(f, e)| (f - e) * (f - e)).sum();
    Ok(100.0 * (num / den).sqrt())
}

/// Uncentred correlation times 100.
pub fn pcc(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    let ee: f64 = estimate.iter().map(|v| v * v).sum();
    if rr == 0.0 || ee == 0.0 {
        return Err(Error::UndefinedMetric("PCC with an all-zero operand".into()));
    }
    let re: f64 = reference.iter().zip(estimate).map(|(a, b)| a * b).sum();
    // sqrt of the product keeps pcc(f, f) exactly 100
    Ok(100.0 * re / (rr * ee).sqrt())
}

/// Pearson correlation times 100 (means removed first).
pub fn pcc_centered(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let n = reference.len() as f64;
    let mr = reference.iter().sum::<f64>() / n;
    let me = estimate.iter().sum::<f64>() / n;
    let r: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let e: Vec<f64> = estimate.iter().map(|v| v - me).collect();
    pcc(&r, &e)
}

/// All scores for one extracted signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScores {
    pub prd: f64,
    pub pcc: f64,
    pub pcc_centered: f64,
    pub se: f64,
    pub f_score: f64,
    /// `None` when fewer than two consecutive beats were matched.
    pub hr_err: Option<f64>,
    pub counts: PeakMatch,
}

/// Scores `estimate` against `reference` given reference and detected beats.
pub fn score(
    reference: &[f64],
    estimate: &[f64],
    reference_peaks: &[usize],
    detected_peaks: &[usize],
    fs: f64,
) -> Result<RecordScores> {
    let counts = match_rpeaks(detected_peaks, reference_peaks, fs, MATCH_TOLERANCE_S);
    let (se, f_score) = detection_metrics(&counts)?;
    // an all-zero estimate correlates with nothing
    let pcc_or_zero = |r: Result<f64>| match r {
        Err(Error::UndefinedMetric(_)) if estimate.iter().all(|v| *v == 0.0) => Ok(0.0),
        other => other,
    };
    Ok(RecordScores {
        prd: prd(reference, estimate)?,
        pcc: pcc_or_zero(pcc(reference, estimate))?,
        pcc_centered: pcc_or_zero(pcc_centered(reference, estimate))?,
        se,
        f_score,
        hr_err: hr_error(&counts, reference_peaks, fs).ok(),
        counts,
    })
}
