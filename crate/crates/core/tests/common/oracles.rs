//! Straight-line reimplementations of the evaluation metrics, written
//! independently of the library for cross-checking.

use std::collections::BTreeMap;

pub fn prd(f: &[f64], e: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..f.len() {
        num += (f[i] - e[i]).powi(2);
        den += f[i].powi(2);
    }
    100.0 * (num / den).sqrt()
}

pub fn pcc(f: &[f64], e: &[f64]) -> f64 {
    let mut fe = 0.0;
    let mut ff = 0.0;
    let mut ee = 0.0;
    for i in 0..f.len() {
        fe += f[i] * e[i];
        ff += f[i] * f[i];
        ee += e[i] * e[i];
    }
    100.0 * fe / (ff * ee).sqrt()
}

/// Repeatedly takes the closest free (reference, detected) pair within
/// `tol` samples; ties go to the lower reference index, then detected index.
/// Returns the matched pairs as indices into the inputs.
pub fn matching(detected: &[usize], reference: &[usize], tol: f64) -> Vec<(usize, usize)> {
    let mut ref_free = vec![true; reference.len()];
    let mut det_free = vec![true; detected.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for (ri, &r) in reference.iter().enumerate() {
            for (di, &d) in detected.iter().enumerate() {
                let dist = r.abs_diff(d);
                if !ref_free[ri] || !det_free[di] || dist as f64 > tol {
                    continue;
                }
                if best.is_none_or(|b| (dist, ri, di) < b) {
                    best = Some((dist, ri, di));
                }
            }
        }
        let Some((_, ri, di)) = best else { break };
        ref_free[ri] = false;
        det_free[di] = false;
        pairs.push((ri, di));
    }
    pairs
}

pub fn se_f(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let se = 100.0 * tp as f64 / (tp + fn_) as f64;
    let f = 100.0 * (2 * tp) as f64 / (2 * tp + fp + fn_) as f64;
    (se, f)
}

/// RMS heart-rate difference over consecutive reference beats that are both
/// matched to increasing detections; `None` if there are none.
pub fn hr_err(detected: &[usize], reference: &[usize], pairs: &[(usize, usize)], fs: f64) -> Option<f64> {
    let by_ref: BTreeMap<usize, usize> = pairs.iter().copied().collect();
    let mut diffs = Vec::new();
    for i in 0..reference.len().saturating_sub(1) {
        if let (Some(&a), Some(&b)) = (by_ref.get(&i), by_ref.get(&(i + 1))) {
            let (d0, d1) = (detected[a], detected[b]);
            if d1 > d0 {
                let hr_r = 60.0 / ((reference[i + 1] - reference[i]) as f64 / fs);
                let hr_d = 60.0 / ((d1 - d0) as f64 / fs);
                diffs.push(hr_d - hr_r);
            }
        }
    }
    if diffs.is_empty() {
        return None;
    }
    Some((diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt())
}
