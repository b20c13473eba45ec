use num_complex::Complex64;

use crate::spectral::ComplexSpectrogram;
use crate::{Error, Result};

/// Complex feature map stored as split real/imaginary planes, laid out
/// channel-major then frequency then time.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        let n = channels * height * width;
        Self {
            channels,
            height,
            width,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_parts(channels: usize, height: usize, width: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = channels * height * width;
        if re.len() != n || im.len() != n {
            return Err(Error::Shape(format!(
                "planes of {} / {} values do not fit {channels}x{height}x{width}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            re,
            im,
        })
    }

    /// Single-channel tensor holding a spectrogram grid.
    pub fn from_spectrogram(s: &ComplexSpectrogram) -> Self {
        Self {
            channels: 1,
            height: s.n_freqs,
            width: s.n_frames,
            re: s.data.iter().map(|c| c.re).collect(),
            im: s.data.iter().map(|c| c.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| Complex64::new(*r, *i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Zero-pads the spatial dims at the far edges.
    pub fn pad_to(&self, height: usize, width: usize) -> Self {
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..self.height.min(height) {
                for x in 0..self.width.min(width) {
                    let src = (c * self.height + y) * self.width + x;
                    let dst = (c * height + y) * width + x;
                    out.re[dst] = self.re[src];
                    out.im[dst] = self.im[src];
                }
            }
        }
        out
    }

    /// Keeps the leading `height x width` window of every channel.
    pub fn crop_to(&self, height: usize, width: usize) -> Self {
        self.pad_to(height, width)
    }

    /// Stacks `self` and `other` along the channel axis.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Shape("concatenated maps differ in size".into()));
        }
        let mut re = self.re.clone();
        re.extend_from_slice(&other.re);
        let mut im = self.im.clone();
        im.extend_from_slice(&other.im);
        Self::from_parts(self.channels + other.channels, self.height, self.width, re, im)
    }

    /// Splits off the first `channels` channels.
    pub fn split_channels(&self, channels: usize) -> (Self, Self) {
        let cut = channels * self.plane();
        let rest = self.channels - channels;
        (
            Self {
                channels,
                height: self.height,
                width: self.width,
                re: self.re[..cut].to_vec(),
                im: self.im[..cut].to_vec(),
            },
            Self {
                channels: rest,
                height: self.height,
                width: self.width,
                re: self.re[cut..].to_vec(),
                im: self.im[cut..].to_vec(),
            },
        )
    }

    /// Nearest-neighbour x2 upsampling in both spatial dims.
    pub fn upsample2(&self) -> Self {
        let (h, w) = (self.height * 2, self.width * 2);
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let src = (c * self.height + y / 2) * self.width + x / 2;
                    let dst = (c * h + y) * w + x;
                    out.re[dst] = self.re[src];
                    out.im[dst] = self.im[src];
                }
            }
        }
        out
    }

    /// Adjoint of [`Self::upsample2`]: sums each 2x2 block.
    pub fn upsample2_backward(&self) -> Self {
        let (h, w) = (self.height / 2, self.width / 2);
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    let src = (c * self.height + y) * self.width + x;
                    let dst = (c * h + y / 2) * w + x / 2;
                    out.re[dst] += self.re[src];
                    out.im[dst] += self.im[src];
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += b;
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major matrices, where
/// `op(a)` is `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every access made through these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|v| v as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64).sin()).collect();
        let mut c = vec![1.0; m * n];
        gemm(m, k, n, 1.0, &a, false, &b, false, 0.5, &mut c);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|l| a[i * k + l] * b[l * n + j]).sum::<f64>() + 0.5;
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
        // transposed operands
        let at: Vec<f64> = (0..k * m).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &at, true, &b, false, 0.0, &mut c2);
        for (x, y) in c.iter().zip(&c2) {
            assert!((x - 0.5 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_adjoint() {
        let t = ComplexTensor::from_parts(
            2,
            2,
            3,
            (0..12).map(|v| v as f64).collect(),
            (0..12).map(|v| -(v as f64)).collect(),
        )
        .unwrap();
        let up = t.upsample2();
        assert_eq!(up.shape(), (2, 4, 6));
        let g = ComplexTensor::from_parts(
            2,
            4,
            6,
            (0..48).map(|v| (v as f64 * 0.3).cos()).collect(),
            (0..48).map(|v| (v as f64 * 0.7).sin()).collect(),
        )
        .unwrap();
        let lhs: f64 = up
            .re
            .iter()
            .zip(&g.re)
            .chain(up.im.iter().zip(&g.im))
            .map(|(a, b)| a * b)
            .sum();
        let back = g.upsample2_backward();
        let rhs: f64 =
            t.re.iter()
                .zip(&back.re)
                .chain(t.im.iter().zip(&back.im))
                .map(|(a, b)| a * b)
                .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pad_crop_round_trip() {
        let t = ComplexTensor::from_parts(1, 3, 3, vec![1.0; 9], vec![2.0; 9]).unwrap();
        let p = t.pad_to(4, 8);
        assert_eq!(p.re.iter().sum::<f64>(), 9.0);
        assert_eq!(p.crop_to(3, 3), t);
    }
}
