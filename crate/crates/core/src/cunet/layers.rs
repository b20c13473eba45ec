//! Building blocks of the complex UNet and their gradients.
//!
//! Real and imaginary parts are treated as independent real variables for
//! differentiation; every `backward` returns the gradient of a real scalar
//! loss with respect to the layer input and accumulates parameter gradients
//! into a caller-provided buffer of the same layout as the layer.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::tensor::{gemm, ComplexTensor};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    /// `ReLU(Re z) + i ReLU(Im z)`
    CRelu,
    /// Georgiou-Koutsougeras: `z / (1 + |z|)`
    Gk,
    /// GroupSort: `min(Re z, Im z) + i max(Re z, Im z)`
    Gs,
    /// Learnable convex combination of CRelu, Gk and Gs.
    Mixture,
}

/// Unconstrained logits whose normalised exponential gives the convex weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ActivationMixture {
    pub logits: [f64; 3],
}

impl Default for ActivationMixture {
    fn default() -> Self {
        Self { logits: [0.0; 3] }
    }
}

impl ActivationMixture {
    /// Builds logits that map exactly onto the given simplex point.
    /// Zero weights map to `-inf` logits.
    pub fn from_weights(mu: [f64; 3]) -> Self {
        Self {
            logits: mu.map(|m| m.ln()),
        }
    }

    /// Effective weights on the probability simplex.
    pub fn weights(&self) -> [f64; 3] {
        let max = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = self.logits.map(|l| (l - max).exp());
        let s: f64 = e.iter().sum();
        e.map(|v| v / s)
    }
}

#[inline]
fn crelu(re: f64, im: f64) -> (f64, f64) {
    (re.max(0.0), im.max(0.0))
}

#[inline]
fn gk(re: f64, im: f64) -> (f64, f64) {
    let d = 1.0 + (re * re + im * im).sqrt();
    (re / d, im / d)
}

#[inline]
fn gs(re: f64, im: f64) -> (f64, f64) {
    if re <= im {
        (re, im)
    } else {
        (im, re)
    }
}

/// Vector-Jacobian product of CRelu at `(re, im)`.
#[inline]
fn crelu_vjp(re: f64, im: f64, gr: f64, gi: f64) -> (f64, f64) {
    (if re > 0.0 { gr } else { 0.0 }, if im > 0.0 { gi } else { 0.0 })
}

#[inline]
fn gk_vjp(re: f64, im: f64, gr: f64, gi: f64) -> (f64, f64) {
    let r = (re * re + im * im).sqrt();
    let d = 1.0 + r;
    if r == 0.0 {
        return (gr, gi);
    }
    let k = 1.0 / (r * d * d);
    // J = I/d - (z z^T) / (r d^2)
    let dot = gr * re + gi * im;
    (gr / d - re * dot * k, gi / d - im * dot * k)
}

#[inline]
fn gs_vjp(re: f64, im: f64, gr: f64, gi: f64) -> (f64, f64) {
    if re <= im {
        (gr, gi)
    } else {
        (gi, gr)
    }
}

/// Applies `kind` elementwise. `mix` is required for [`ActivationKind::Mixture`].
pub fn activate(kind: ActivationKind, z: &ComplexTensor, mix: Option<&ActivationMixture>) -> Result<ComplexTensor> {
    let mut out = z.clone();
    match kind {
        ActivationKind::Identity => {}
        ActivationKind::CRelu => map_pairs(&mut out, crelu),
        ActivationKind::Gk => map_pairs(&mut out, gk),
        ActivationKind::Gs => map_pairs(&mut out, gs),
        ActivationKind::Mixture => {
            let mix = mix.ok_or_else(|| Error::Config("mixture activation requires mixture weights".into()))?;
            let [m1, m2, m3] = mix.weights();
            map_pairs(&mut out, |re, im| {
                let a = crelu(re, im);
                let b = gk(re, im);
                let c = gs(re, im);
                (m1 * a.0 + m2 * b.0 + m3 * c.0, m1 * a.1 + m2 * b.1 + m3 * c.1)
            });
        }
    }
    Ok(out)
}

fn map_pairs(t: &mut ComplexTensor, f: impl Fn(f64, f64) -> (f64, f64)) {
    for (r, i) in t.re.iter_mut().zip(t.im.iter_mut()) {
        let (a, b) = f(*r, *i);
        *r = a;
        *i = b;
    }
}

/// Gradient through an activation. Returns the input gradient and, for the
/// mixture, the gradient with respect to the three logits.
pub fn activate_backward(
    kind: ActivationKind,
    z: &ComplexTensor,
    mix: Option<&ActivationMixture>,
    grad: &ComplexTensor,
) -> Result<(ComplexTensor, [f64; 3])> {
    let mut gin = grad.clone();
    let mut glogits = [0.0; 3];
    let pairs = z.re.iter().zip(&z.im).zip(gin.re.iter_mut().zip(gin.im.iter_mut()));
    match kind {
        ActivationKind::Identity => {}
        ActivationKind::CRelu => pairs.for_each(|((re, im), (gr, gi))| {
            (*gr, *gi) = crelu_vjp(*re, *im, *gr, *gi);
        }),
        ActivationKind::Gk => pairs.for_each(|((re, im), (gr, gi))| {
            (*gr, *gi) = gk_vjp(*re, *im, *gr, *gi);
        }),
        ActivationKind::Gs => pairs.for_each(|((re, im), (gr, gi))| {
            (*gr, *gi) = gs_vjp(*re, *im, *gr, *gi);
        }),
        ActivationKind::Mixture => {
            let mix = mix.ok_or_else(|| Error::Config("mixture activation requires mixture weights".into()))?;
            let mu = mix.weights();
            let mut gmu = [0.0; 3];
            for ((re, im), (gr, gi)) in pairs {
                let (re, im, r, i) = (*re, *im, *gr, *gi);
                let a = crelu(re, im);
                let b = gk(re, im);
                let c = gs(re, im);
                gmu[0] += r * a.0 + i * a.1;
                gmu[1] += r * b.0 + i * b.1;
                gmu[2] += r * c.0 + i * c.1;
                let va = crelu_vjp(re, im, r, i);
                let vb = gk_vjp(re, im, r, i);
                let vc = gs_vjp(re, im, r, i);
                *gr = mu[0] * va.0 + mu[1] * vb.0 + mu[2] * vc.0;
                *gi = mu[0] * va.1 + mu[1] * vb.1 + mu[2] * vc.1;
            }
            // softmax Jacobian: d mu_j / d l_k = mu_j (delta_jk - mu_k)
            let inner: f64 = (0..3).map(|j| gmu[j] * mu[j]).sum();
            for k in 0..3 {
                glogits[k] = mu[k] * (gmu[k] - inner);
            }
        }
    }
    Ok((gin, glogits))
}

/// Elementwise unit-modulus phase shift `e^{i beta}` over an F x T grid,
/// shared by every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalLayer {
    pub height: usize,
    pub width: usize,
    pub beta: Vec<f64>,
}

impl DiagonalLayer {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            beta: vec![0.0; height * width],
        }
    }

    fn check(&self, x: &ComplexTensor) -> Result<()> {
        if x.height != self.height || x.width != self.width {
            return Err(Error::Shape(format!(
                "diagonal layer is {}x{}, input is {}x{}",
                self.height, self.width, x.height, x.width
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.check(x)?;
        let mut out = x.clone();
        let plane = x.plane();
        for c in 0..x.channels {
            for (j, b) in self.beta.iter().enumerate() {
                let idx = c * plane + j;
                let (s, co) = b.sin_cos();
                let (re, im) = (x.re[idx], x.im[idx]);
                out.re[idx] = co * re - s * im;
                out.im[idx] = s * re + co * im;
            }
        }
        Ok(out)
    }

    /// Returns the input gradient; accumulates `dL/dbeta` into `gbeta`.
    pub fn backward(&self, x: &ComplexTensor, grad: &ComplexTensor, gbeta: &mut [f64]) -> ComplexTensor {
        let mut gin = grad.clone();
        let plane = x.plane();
        for c in 0..x.channels {
            for (j, b) in self.beta.iter().enumerate() {
                let idx = c * plane + j;
                let (s, co) = b.sin_cos();
                let (re, im) = (x.re[idx], x.im[idx]);
                let (gr, gi) = (grad.re[idx], grad.im[idx]);
                let yr = co * re - s * im;
                let yi = s * re + co * im;
                gbeta[j] += -gr * yi + gi * yr;
                gin.re[idx] = co * gr + s * gi;
                gin.im[idx] = -s * gr + co * gi;
            }
        }
        gin
    }

    /// Wraps every phase into [0, 2 pi).
    pub fn wrap(&mut self) {
        let tau = 2.0 * std::f64::consts::PI;
        for b in &mut self.beta {
            *b = b.rem_euclid(tau);
            if *b >= tau {
                *b = 0.0;
            }
        }
    }
}

/// How the complex kernel acts on the complex input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    /// Real kernels act on the real part, imaginary kernels on the imaginary part.
    #[default]
    Split,
    /// Full complex product `(Wr + i Wi)(xr + i xi)`.
    FullProduct,
}

/// Layer-wise RMS scaling applied separately to the real and imaginary
/// planes, followed by a learnable per-channel gain for each plane.
#[derive(Debug, Clone, PartialEq)]
pub struct NormLayer {
    pub gain_re: Vec<f64>,
    pub gain_im: Vec<f64>,
}

pub const NORM_EPS: f64 = 1e-8;

impl NormLayer {
    pub fn new(channels: usize) -> Self {
        Self {
            gain_re: vec![1.0; channels],
            gain_im: vec![1.0; channels],
        }
    }

    fn scale(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + NORM_EPS).sqrt()
    }

    pub fn forward(&self, x: &ComplexTensor) -> ComplexTensor {
        let mut out = x.clone();
        let plane = x.plane();
        let sr = Self::scale(&x.re);
        let si = Self::scale(&x.im);
        for c in 0..x.channels {
            let (gr, gi) = (self.gain_re[c] / sr, self.gain_im[c] / si);
            for j in c * plane..(c + 1) * plane {
                out.re[j] *= gr;
                out.im[j] *= gi;
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &ComplexTensor,
        grad: &ComplexTensor,
        ggain_re: &mut [f64],
        ggain_im: &mut [f64],
    ) -> ComplexTensor {
        let plane = x.plane();
        let mut gin = ComplexTensor::zeros(x.channels, x.height, x.width);
        for (xs, gs_, gains, ggain, out) in [
            (&x.re, &grad.re, &self.gain_re, &mut *ggain_re, &mut gin.re),
            (&x.im, &grad.im, &self.gain_im, &mut *ggain_im, &mut gin.im),
        ] {
            let s = Self::scale(xs);
            let n = xs.len() as f64;
            // gu = gain * g, u = x / s
            let mut dot = 0.0;
            for c in 0..x.channels {
                let mut acc = 0.0;
                for j in c * plane..(c + 1) * plane {
                    let u = xs[j] / s;
                    acc += gs_[j] * u;
                    dot += gains[c] * gs_[j] * u;
                }
                ggain[c] += acc;
            }
            let mean = dot / n;
            for c in 0..x.channels {
                for j in c * plane..(c + 1) * plane {
                    let u = xs[j] / s;
                    out[j] = (gains[c] * gs_[j] - u * mean) / s;
                }
            }
        }
        gin
    }
}

/// Complex convolution with "same" padding, optional stride 2, optional
/// normalisation and an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub mode: ConvMode,
    /// `out x in x k x k`
    pub w_re: Vec<f64>,
    pub w_im: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
    pub norm: Option<NormLayer>,
    pub activation: ActivationKind,
    pub mixture: Option<ActivationMixture>,
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    /// `(channels, height, width)` of the layer input.
    pub input_shape: (usize, usize, usize),
    /// im2col of the input, reused by the backward pass.
    pub cols_re: Vec<f64>,
    pub cols_im: Vec<f64>,
    pub conv_out: ComplexTensor,
    pub pre_activation: ComplexTensor,
}

impl ComplexConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        mode: ConvMode,
        norm: bool,
        activation: ActivationKind,
    ) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size {kernel} must be odd and non-zero")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::Config(format!("stride {stride} must be 1 or 2")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        let n = out_channels * in_channels * kernel * kernel;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            mode,
            w_re: vec![0.0; n],
            w_im: vec![0.0; n],
            b_re: vec![0.0; out_channels],
            b_im: vec![0.0; out_channels],
            norm: norm.then(|| NormLayer::new(out_channels)),
            activation,
            mixture: (activation == ActivationKind::Mixture).then(ActivationMixture::default),
        })
    }

    /// Scaled-normal kernel initialisation, zero biases.
    pub fn init_random(&mut self, rng: &mut Rng) {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let scale = match self.mode {
            ConvMode::Split => (2.0 / fan_in).sqrt(),
            ConvMode::FullProduct => (1.0 / fan_in).sqrt(),
        };
        let normal = Normal::new(0.0, scale).expect("finite scale");
        for w in self.w_re.iter_mut().chain(self.w_im.iter_mut()) {
            *w = normal.sample(rng);
        }
        // keep the generator advancing identically whatever the bias layout
        let _: f64 = rng.random();
    }

    fn kk(&self) -> usize {
        self.kernel * self.kernel
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        (
            (height + 2 * pad - self.kernel) / self.stride + 1,
            (width + 2 * pad - self.kernel) / self.stride + 1,
        )
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride + kx - pad` lies in `0..w`.
    fn valid_cols(&self, kx: usize, w: usize, wo: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        let s = self.stride;
        let lo = pad.saturating_sub(kx).div_ceil(s);
        // one past the largest ox with ox * s + kx - pad <= w - 1
        let hi = (w + pad).checked_sub(kx + 1).map_or(0, |v| (v / s + 1).min(wo));
        (lo.min(hi), hi)
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let pad = k / 2;
        let s = self.stride;
        let p = ho * wo;
        let mut cols = vec![0.0; self.in_channels * k * k * p];
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let (lo, hi) = self.valid_cols(kx, w, wo);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..ho {
                        let iy = oy * s + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let src_row = &x[(c * h + iy - pad) * w..(c * h + iy - pad + 1) * w];
                        let out = &mut dst[oy * wo + lo..oy * wo + hi];
                        let first = lo * s + kx - pad;
                        if s == 1 {
                            out.copy_from_slice(&src_row[first..first + (hi - lo)]);
                        } else {
                            for (o, v) in out.iter_mut().zip(src_row[first..].iter().step_by(s)) {
                                *o = *v;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let pad = k / 2;
        let s = self.stride;
        let p = ho * wo;
        let mut x = vec![0.0; self.in_channels * h * w];
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    let (lo, hi) = self.valid_cols(kx, w, wo);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..ho {
                        let iy = oy * s + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let base = (c * h + iy - pad) * w;
                        let first = lo * s + kx - pad;
                        let dst = &mut x[base + first..base + w];
                        let vals = &src[oy * wo + lo..oy * wo + hi];
                        if s == 1 {
                            for (d, v) in dst.iter_mut().zip(vals) {
                                *d += v;
                            }
                        } else {
                            for (d, v) in dst.iter_mut().step_by(s).zip(vals) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
        x
    }

    /// Linear part only: convolution plus bias.
    pub fn convolve(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(self.convolve_cols(x)?.0)
    }

    fn convolve_cols(&self, x: &ComplexTensor) -> Result<(ComplexTensor, Vec<f64>, Vec<f64>)> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "layer expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        let (ho, wo) = self.output_size(x.height, x.width);
        let p = ho * wo;
        let kdim = self.in_channels * self.kk();
        let cols_re = self.im2col(&x.re, x.height, x.width, ho, wo);
        let cols_im = self.im2col(&x.im, x.height, x.width, ho, wo);
        let mut out = ComplexTensor::zeros(self.out_channels, ho, wo);
        for o in 0..self.out_channels {
            out.re[o * p..(o + 1) * p].fill(self.b_re[o]);
            out.im[o * p..(o + 1) * p].fill(self.b_im[o]);
        }
        let m = self.out_channels;
        match self.mode {
            ConvMode::Split => {
                gemm(m, kdim, p, 1.0, &self.w_re, false, &cols_re, false, 1.0, &mut out.re);
                gemm(m, kdim, p, 1.0, &self.w_im, false, &cols_im, false, 1.0, &mut out.im);
            }
            ConvMode::FullProduct => {
                gemm(m, kdim, p, 1.0, &self.w_re, false, &cols_re, false, 1.0, &mut out.re);
                gemm(m, kdim, p, -1.0, &self.w_im, false, &cols_im, false, 1.0, &mut out.re);
                gemm(m, kdim, p, 1.0, &self.w_re, false, &cols_im, false, 1.0, &mut out.im);
                gemm(m, kdim, p, 1.0, &self.w_im, false, &cols_re, false, 1.0, &mut out.im);
            }
        }
        Ok((out, cols_re, cols_im))
    }

    pub fn forward_cached(&self, x: &ComplexTensor) -> Result<(ComplexTensor, ConvCache)> {
        let (conv_out, cols_re, cols_im) = self.convolve_cols(x)?;
        let pre_activation = match &self.norm {
            Some(norm) => norm.forward(&conv_out),
            None => conv_out.clone(),
        };
        let y = activate(self.activation, &pre_activation, self.mixture.as_ref())?;
        Ok((
            y,
            ConvCache {
                input_shape: (x.channels, x.height, x.width),
                cols_re,
                cols_im,
                conv_out,
                pre_activation,
            },
        ))
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Backpropagates `grad` (w.r.t. the layer output); parameter gradients
    /// are added into `acc`, which must have this layer's shape.
    pub fn backward(
        &self,
        cache: &ConvCache,
        grad: &ComplexTensor,
        acc: &mut ComplexConvLayer,
    ) -> Result<ComplexTensor> {
        let (g_pre, glog) = activate_backward(self.activation, &cache.pre_activation, self.mixture.as_ref(), grad)?;
        if let Some(m) = acc.mixture.as_mut() {
            for (a, g) in m.logits.iter_mut().zip(glog) {
                *a += g;
            }
        }
        let gz = match (&self.norm, acc.norm.as_mut()) {
            (Some(norm), Some(gacc)) => norm.backward(&cache.conv_out, &g_pre, &mut gacc.gain_re, &mut gacc.gain_im),
            _ => g_pre,
        };

        let (channels, height, width) = cache.input_shape;
        let (ho, wo) = (gz.height, gz.width);
        let p = ho * wo;
        let kdim = self.in_channels * self.kk();
        let m = self.out_channels;
        for o in 0..m {
            acc.b_re[o] += gz.re[o * p..(o + 1) * p].iter().sum::<f64>();
            acc.b_im[o] += gz.im[o * p..(o + 1) * p].iter().sum::<f64>();
        }
        let (cols_re, cols_im) = (&cache.cols_re, &cache.cols_im);
        let mut gcols_re = vec![0.0; kdim * p];
        let mut gcols_im = vec![0.0; kdim * p];
        match self.mode {
            ConvMode::Split => {
                gemm(m, p, kdim, 1.0, &gz.re, false, cols_re, true, 1.0, &mut acc.w_re);
                gemm(m, p, kdim, 1.0, &gz.im, false, cols_im, true, 1.0, &mut acc.w_im);
                gemm(kdim, m, p, 1.0, &self.w_re, true, &gz.re, false, 0.0, &mut gcols_re);
                gemm(kdim, m, p, 1.0, &self.w_im, true, &gz.im, false, 0.0, &mut gcols_im);
            }
            ConvMode::FullProduct => {
                gemm(m, p, kdim, 1.0, &gz.re, false, cols_re, true, 1.0, &mut acc.w_re);
                gemm(m, p, kdim, 1.0, &gz.im, false, cols_im, true, 1.0, &mut acc.w_re);
                gemm(m, p, kdim, -1.0, &gz.re, false, cols_im, true, 1.0, &mut acc.w_im);
                gemm(m, p, kdim, 1.0, &gz.im, false, cols_re, true, 1.0, &mut acc.w_im);
                gemm(kdim, m, p, 1.0, &self.w_re, true, &gz.re, false, 0.0, &mut gcols_re);
                gemm(kdim, m, p, 1.0, &self.w_im, true, &gz.im, false, 1.0, &mut gcols_re);
                gemm(kdim, m, p, -1.0, &self.w_im, true, &gz.re, false, 0.0, &mut gcols_im);
                gemm(kdim, m, p, 1.0, &self.w_re, true, &gz.im, false, 1.0, &mut gcols_im);
            }
        }
        ComplexTensor::from_parts(
            channels,
            height,
            width,
            self.col2im(&gcols_re, height, width, ho, wo),
            self.col2im(&gcols_im, height, width, ho, wo),
        )
    }

    /// Zeroed copy with the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for v in z
            .w_re
            .iter_mut()
            .chain(z.w_im.iter_mut())
            .chain(z.b_re.iter_mut())
            .chain(z.b_im.iter_mut())
        {
            *v = 0.0;
        }
        if let Some(n) = z.norm.as_mut() {
            n.gain_re.fill(0.0);
            n.gain_im.fill(0.0);
        }
        if let Some(m) = z.mixture.as_mut() {
            m.logits = [0.0; 3];
        }
        z
    }
}
