//! Beat-synchronous SVD template subtraction.
//!
//! Each beat spans the midpoints to its neighbouring R peaks. The half before
//! and the half after the R peak are resampled separately to [`HALF_LEN`]
//! points so every row of the beat matrix has the R peak at the same column.
//! The rank-r reconstruction's misfit is mapped back to the original sampling
//! and becomes the residual.

use nalgebra::DMatrix;

use crate::{Error, Result, TimeSeries};

use super::{refine_peaks, Separation};

pub const HALF_LEN: usize = 128;
pub const ROW_LEN: usize = 2 * HALF_LEN;

/// Cardiac cycles resampled to a common length, aligned on the R peak at
/// column [`HALF_LEN`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeatMatrix {
    pub rows: DMatrix<f64>,
    /// Entries that fell outside the signal; imputed before decomposition.
    pub missing: Vec<Vec<bool>>,
    spans: Vec<BeatSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BeatSpan {
    /// Nominal start, may lie before the first sample.
    start: f64,
    peak: f64,
    end: f64,
}

fn catmull_rom(at: impl Fn(isize) -> f64, t: f64) -> f64 {
    let i = t.floor() as isize;
    let u = t - i as f64;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    if u == 0.0 {
        return p1;
    }
    0.5 * (2.0 * p1
        + (p2 - p0) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u * u * u)
}

impl BeatSpan {
    /// Absolute sample position of row column `j`.
    fn position(&self, j: usize) -> f64 {
        let h = HALF_LEN as f64;
        if j < HALF_LEN {
            self.start + j as f64 * (self.peak - self.start) / h
        } else {
            self.peak + (j - HALF_LEN) as f64 * (self.end - self.peak) / h
        }
    }

    /// Row coordinate of absolute position `t` (inverse of [`Self::position`]).
    fn column(&self, t: f64) -> f64 {
        let h = HALF_LEN as f64;
        if t < self.peak {
            (t - self.start) * h / (self.peak - self.start)
        } else {
            h + (t - self.peak) * h / (self.end - self.peak)
        }
    }
}

impl BeatMatrix {
    pub fn build(x: &[f64], rpeaks: &[usize]) -> Result<Self> {
        if rpeaks.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "template subtraction needs at least 3 beats, got {}",
                rpeaks.len()
            )));
        }
        if rpeaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("R peaks must be strictly increasing".into()));
        }
        if *rpeaks.last().unwrap() >= x.len() {
            return Err(Error::InvalidInput("R peak beyond the end of the signal".into()));
        }
        let r = refine_peaks(x, rpeaks);
        let k = r.len();
        let spans: Vec<BeatSpan> = (0..k)
            .map(|i| {
                let start = if i == 0 {
                    1.5 * r[0] - 0.5 * r[1]
                } else {
                    0.5 * (r[i - 1] + r[i])
                };
                let end = if i == k - 1 {
                    1.5 * r[k - 1] - 0.5 * r[k - 2]
                } else {
                    0.5 * (r[i] + r[i + 1])
                };
                BeatSpan { start, peak: r[i], end }
            })
            .collect();
        if spans.iter().any(|s| s.peak - s.start < 1.0 || s.end - s.peak < 1.0) {
            return Err(Error::InvalidInput("R peaks too close to split into beats".into()));
        }

        let n = x.len() as isize;
        let at = |i: isize| x[i.clamp(0, n - 1) as usize];
        let mut rows = DMatrix::zeros(k, ROW_LEN);
        let mut missing = vec![vec![false; ROW_LEN]; k];
        for (b, span) in spans.iter().enumerate() {
            for j in 0..ROW_LEN {
                let p = span.position(j);
                if p < 0.0 || p > (n - 1) as f64 {
                    missing[b][j] = true;
                } else {
                    rows[(b, j)] = catmull_rom(at, p);
                }
            }
        }
        // missing columns take the mean of the observed entries in that column
        for j in 0..ROW_LEN {
            let observed: Vec<f64> = (0..k).filter(|&b| !missing[b][j]).map(|b| rows[(b, j)]).collect();
            let fill = if observed.is_empty() {
                0.0
            } else {
                observed.iter().sum::<f64>() / observed.len() as f64
            };
            for b in 0..k {
                if missing[b][j] {
                    rows[(b, j)] = fill;
                }
            }
        }
        Ok(Self { rows, missing, spans })
    }

    pub fn beats(&self) -> usize {
        self.rows.nrows()
    }

    /// Best rank-`rank` approximation of the rows.
    pub fn low_rank(&self, rank: usize) -> DMatrix<f64> {
        let svd = self.rows.clone().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
        let mut out = DMatrix::zeros(self.rows.nrows(), self.rows.ncols());
        for &c in order.iter().take(rank) {
            out += svd.singular_values[c] * u.column(c) * vt.row(c);
        }
        out
    }

    /// Maps row-domain values back onto the original samples; samples outside
    /// every beat are left untouched.
    fn stitch(&self, rows: &DMatrix<f64>, out: &mut [f64]) {
        let n = out.len();
        for (b, span) in self.spans.iter().enumerate() {
            let at = |j: isize| rows[(b, j.clamp(0, ROW_LEN as isize - 1) as usize)];
            let lo = span.start.max(0.0).ceil() as usize;
            let hi = (span.end.ceil().max(0.0) as usize).min(n);
            for i in lo..hi {
                out[i] = catmull_rom(at, span.column(i as f64));
            }
        }
    }
}

/// Subtracts the rank-`rank` beat template. The reconstruction is the input
/// minus the residual, so full rank leaves a zero residual.
pub fn svd_template_subtract(x: &TimeSeries, rpeaks: &[usize], rank: usize) -> Result<Separation> {
    if rank == 0 {
        return Err(Error::InvalidInput("rank must be at least 1".into()));
    }
    let beats = BeatMatrix::build(&x.samples, rpeaks)?;
    let misfit = &beats.rows - beats.low_rank(rank);
    let mut residual = vec![0.0; x.len()];
    beats.stitch(&misfit, &mut residual);
    let reconstruction: Vec<f64> = x.samples.iter().zip(&residual).map(|(a, b)| a - b).collect();
    Ok(Separation {
        estimate: TimeSeries::new(reconstruction, x.fs)?,
        residual: TimeSeries::new(residual, x.fs)?,
    })
}
