use serde::{Deserialize, Serialize};

use super::layers::{ActivationKind, ComplexConvLayer, ConvCache, ConvMode, DiagonalLayer};
use super::tensor::ComplexTensor;
use crate::rng::seeded;
use crate::spectral::ComplexSpectrogram;
use crate::{Error, Result};

/// Architecture description; everything needed to rebuild an empty network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Spectrogram rows (frequency bins) the diagonal layers are sized for.
    pub height: usize,
    /// Spectrogram columns (frames) the diagonal layers are sized for.
    pub width: usize,
    /// Encoder feature widths; its length is the depth.
    pub channels: Vec<usize>,
    pub bottleneck_channels: usize,
    pub kernel: usize,
    pub activation: ActivationKind,
    pub conv_mode: ConvMode,
    pub norm: bool,
}

impl NetConfig {
    /// Default toy architecture for a spectrogram of `height x width`.
    pub fn toy(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            channels: vec![8, 16, 32],
            bottleneck_channels: 32,
            kernel: 3,
            activation: ActivationKind::Mixture,
            conv_mode: ConvMode::Split,
            norm: true,
        }
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("network depth must be at least 1".into()));
        }
        if self.channels.contains(&0) || self.bottleneck_channels == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("input grid must be non-empty".into()));
        }
        Ok(())
    }

    /// Grid size after padding to multiples of `2^depth`.
    pub fn padded_size(&self) -> (usize, usize) {
        let m = 1usize << self.depth();
        (self.height.div_ceil(m) * m, self.width.div_ceil(m) * m)
    }
}

/// One encoder level: two convolutions producing the skip tensor, then a
/// stride-2 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DownBlock {
    pub conv_a: ComplexConvLayer,
    pub conv_b: ComplexConvLayer,
    pub down: ComplexConvLayer,
}

/// One decoder level: x2 upsampling followed by a convolution, then a merge
/// convolution over the concatenation `[upsampled, skip]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpBlock {
    pub up: ComplexConvLayer,
    pub merge: ComplexConvLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CUNetParams {
    pub config: NetConfig,
    pub entry_diag: DiagonalLayer,
    pub down_blocks: Vec<DownBlock>,
    pub bottleneck: Vec<ComplexConvLayer>,
    /// Indexed by level like `down_blocks`; evaluated deepest first.
    pub up_blocks: Vec<UpBlock>,
    pub head: ComplexConvLayer,
    pub exit_diag: DiagonalLayer,
}

/// Activations kept from [`CUNetParams::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: ComplexTensor,
    enc: Vec<[ConvCache; 3]>,
    bottleneck: Vec<ConvCache>,
    dec: Vec<[ConvCache; 2]>,
    head: ConvCache,
    head_cropped: ComplexTensor,
}

impl CUNetParams {
    /// Network with the right shapes and all kernels zero.
    pub fn empty(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let act = config.activation;
        let mode = config.conv_mode;
        let norm = config.norm;
        let mut down_blocks = Vec::new();
        let mut prev = 1;
        for &c in &config.channels {
            down_blocks.push(DownBlock {
                conv_a: ComplexConvLayer::new(prev, c, k, 1, mode, norm, act)?,
                conv_b: ComplexConvLayer::new(c, c, k, 1, mode, norm, act)?,
                down: ComplexConvLayer::new(c, c, k, 2, mode, false, act)?,
            });
            prev = c;
        }
        let b = config.bottleneck_channels;
        let bottleneck = vec![
            ComplexConvLayer::new(prev, b, k, 1, mode, norm, act)?,
            ComplexConvLayer::new(b, b, k, 1, mode, norm, act)?,
        ];
        let mut up_blocks = Vec::new();
        for (i, &c) in config.channels.iter().enumerate() {
            let below = config.channels.get(i + 1).copied().unwrap_or(b);
            up_blocks.push(UpBlock {
                up: ComplexConvLayer::new(below, c, k, 1, mode, false, act)?,
                merge: ComplexConvLayer::new(2 * c, c, k, 1, mode, norm, act)?,
            });
        }
        let head = ComplexConvLayer::new(config.channels[0], 1, 1, 1, mode, false, ActivationKind::Identity)?;
        Ok(Self {
            entry_diag: DiagonalLayer::identity(config.height, config.width),
            exit_diag: DiagonalLayer::identity(config.height, config.width),
            down_blocks,
            bottleneck,
            up_blocks,
            head,
            config,
        })
    }

    /// Randomly initialised kernels, zero biases and phases, uniform mixture.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::empty(config)?;
        let mut rng = seeded(seed);
        net.for_each_conv_mut(|layer| layer.init_random(&mut rng));
        Ok(net)
    }

    /// Linear network whose output equals its input: identity activations, no
    /// normalisation, unit centre taps routing channel 0 through the level-0
    /// skip path.
    pub fn identity(mut config: NetConfig) -> Result<Self> {
        config.activation = ActivationKind::Identity;
        config.norm = false;
        let mut net = Self::empty(config)?;
        let k = net.config.kernel;
        let centre = (k / 2) * k + k / 2;
        let tap = |layer: &mut ComplexConvLayer, o: usize, i: usize| {
            let idx = (o * layer.in_channels + i) * k * k + centre;
            layer.w_re[idx] = 1.0;
            layer.w_im[idx] = 1.0;
        };
        tap(&mut net.down_blocks[0].conv_a, 0, 0);
        tap(&mut net.down_blocks[0].conv_b, 0, 0);
        let c0 = net.config.channels[0];
        tap(&mut net.up_blocks[0].merge, 0, c0);
        net.head.w_re[0] = 1.0;
        net.head.w_im[0] = 1.0;
        Ok(net)
    }

    fn for_each_conv_mut(&mut self, mut f: impl FnMut(&mut ComplexConvLayer)) {
        for b in &mut self.down_blocks {
            f(&mut b.conv_a);
            f(&mut b.conv_b);
            f(&mut b.down);
        }
        for l in &mut self.bottleneck {
            f(l);
        }
        for b in &mut self.up_blocks {
            f(&mut b.up);
            f(&mut b.merge);
        }
        f(&mut self.head);
    }

    fn convs(&self) -> Vec<(String, &ComplexConvLayer)> {
        let mut out = Vec::new();
        for (i, b) in self.down_blocks.iter().enumerate() {
            out.push((format!("down{i}.conv_a"), &b.conv_a));
            out.push((format!("down{i}.conv_b"), &b.conv_b));
            out.push((format!("down{i}.down"), &b.down));
        }
        for (i, l) in self.bottleneck.iter().enumerate() {
            out.push((format!("bottleneck{i}"), l));
        }
        for (i, b) in self.up_blocks.iter().enumerate() {
            out.push((format!("up{i}.up"), &b.up));
            out.push((format!("up{i}.merge"), &b.merge));
        }
        out.push(("head".to_string(), &self.head));
        out
    }

    /// Visits every learnable block in the fixed declaration order.
    pub fn visit(&self, mut f: impl FnMut(&str, &[f64])) {
        f("entry_diag.beta", &self.entry_diag.beta);
        for (name, l) in self.convs() {
            f(&format!("{name}.w_re"), &l.w_re);
            f(&format!("{name}.w_im"), &l.w_im);
            f(&format!("{name}.b_re"), &l.b_re);
            f(&format!("{name}.b_im"), &l.b_im);
            if let Some(n) = &l.norm {
                f(&format!("{name}.gain_re"), &n.gain_re);
                f(&format!("{name}.gain_im"), &n.gain_im);
            }
            if let Some(m) = &l.mixture {
                f(&format!("{name}.mix_logits"), &m.logits);
            }
        }
        f("exit_diag.beta", &self.exit_diag.beta);
    }

    /// Mutable counterpart of [`Self::visit`], same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(&mut self.entry_diag.beta);
        self.for_each_conv_mut(|l| {
            f(&mut l.w_re);
            f(&mut l.w_im);
            f(&mut l.b_re);
            f(&mut l.b_im);
            if let Some(n) = l.norm.as_mut() {
                f(&mut n.gain_re);
                f(&mut n.gain_im);
            }
            if let Some(m) = l.mixture.as_mut() {
                f(&mut m.logits);
            }
        });
        f(&mut self.exit_diag.beta);
    }

    /// `(name, length)` of every parameter block.
    pub fn block_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit(|name, v| out.push((name.to_string(), v.len())));
        out
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(|_, v| n += v.len());
        n
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(|_, v| out.extend_from_slice(v));
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::Shape(format!(
                "{} parameter values for a network with {n}",
                flat.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut(|v| {
            v.copy_from_slice(&flat[offset..offset + v.len()]);
            offset += v.len();
        });
        Ok(())
    }

    /// Copy with every parameter set to zero, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|v| v.fill(0.0));
        z
    }

    /// Keeps diagonal phases in [0, 2 pi).
    pub fn wrap_phases(&mut self) {
        self.entry_diag.wrap();
        self.exit_diag.wrap();
    }

    fn check_input(&self, x: &ComplexTensor) -> Result<()> {
        if x.channels != 1 || x.height != self.config.height || x.width != self.config.width {
            return Err(Error::Shape(format!(
                "network expects 1x{}x{}, got {}x{}x{}",
                self.config.height, self.config.width, x.channels, x.height, x.width
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &ComplexTensor) -> Result<(ComplexTensor, ForwardCache)> {
        self.check_input(x)?;
        let (ph, pw) = self.config.padded_size();
        let mut h = self.entry_diag.forward(x)?.pad_to(ph, pw);
        let mut enc = Vec::with_capacity(self.down_blocks.len());
        // conv_b outputs, concatenated back in by the decoder
        let mut skips = Vec::with_capacity(self.down_blocks.len());
        for block in &self.down_blocks {
            let (a, ca) = block.conv_a.forward_cached(&h)?;
            let (b, cb) = block.conv_b.forward_cached(&a)?;
            let (d, cd) = block.down.forward_cached(&b)?;
            enc.push([ca, cb, cd]);
            skips.push(b);
            h = d;
        }
        let mut bottleneck = Vec::with_capacity(self.bottleneck.len());
        for layer in &self.bottleneck {
            let (y, c) = layer.forward_cached(&h)?;
            bottleneck.push(c);
            h = y;
        }
        let mut dec: Vec<Option<[ConvCache; 2]>> = vec![None; self.up_blocks.len()];
        for (i, block) in self.up_blocks.iter().enumerate().rev() {
            let (u, cu) = block.up.forward_cached(&h.upsample2())?;
            let (m, cm) = block.merge.forward_cached(&u.concat(&skips[i])?)?;
            dec[i] = Some([cu, cm]);
            h = m;
        }
        let (out, head) = self.head.forward_cached(&h)?;
        let head_cropped = out.crop_to(self.config.height, self.config.width);
        let y = self.exit_diag.forward(&head_cropped)?;
        Ok((
            y,
            ForwardCache {
                input: x.clone(),
                enc,
                bottleneck,
                dec: dec.into_iter().map(|d| d.expect("every level visited")).collect(),
                head,
                head_cropped,
            },
        ))
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Spectrogram in, spectrogram out (same grid and metadata).
    pub fn forward_spectrogram(&self, s: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        let y = self.forward(&ComplexTensor::from_spectrogram(s))?;
        let mut out = s.clone();
        out.data = y.to_complex();
        Ok(out)
    }

    /// Backpropagates `grad` (with respect to the network output) and adds the
    /// parameter gradients into `acc`. Returns the gradient with respect to the
    /// network input.
    pub fn backward(&self, cache: &ForwardCache, grad: &ComplexTensor, acc: &mut CUNetParams) -> Result<ComplexTensor> {
        let (ph, pw) = self.config.padded_size();
        let g = self
            .exit_diag
            .backward(&cache.head_cropped, grad, &mut acc.exit_diag.beta);
        let mut g = self.head.backward(&cache.head, &g.pad_to(ph, pw), &mut acc.head)?;

        let depth = self.down_blocks.len();
        let mut skip_grads = Vec::with_capacity(depth);
        for i in 0..depth {
            let block = &self.up_blocks[i];
            let [cu, cm] = &cache.dec[i];
            let gcat = block.merge.backward(cm, &g, &mut acc.up_blocks[i].merge)?;
            let (gu, gskip) = gcat.split_channels(block.up.out_channels);
            skip_grads.push(gskip);
            g = block
                .up
                .backward(cu, &gu, &mut acc.up_blocks[i].up)?
                .upsample2_backward();
        }
        for (layer, (c, a)) in self
            .bottleneck
            .iter()
            .zip(cache.bottleneck.iter().zip(acc.bottleneck.iter_mut()))
            .rev()
        {
            g = layer.backward(c, &g, a)?;
        }
        for i in (0..depth).rev() {
            let block = &self.down_blocks[i];
            let [ca, cb, cd] = &cache.enc[i];
            let acc_b = &mut acc.down_blocks[i];
            let mut gb = block.down.backward(cd, &g, &mut acc_b.down)?;
            gb.add_assign(&skip_grads[i]);
            let ga = block.conv_b.backward(cb, &gb, &mut acc_b.conv_b)?;
            g = block.conv_a.backward(ca, &ga, &mut acc_b.conv_a)?;
        }
        let g = g.crop_to(self.config.height, self.config.width);
        Ok(self.entry_diag.backward(&cache.input, &g, &mut acc.entry_diag.beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use rand::Rng as _;

    fn small_config(h: usize, w: usize) -> NetConfig {
        NetConfig {
            height: h,
            width: w,
            channels: vec![2],
            bottleneck_channels: 2,
            kernel: 3,
            activation: ActivationKind::Mixture,
            conv_mode: ConvMode::Split,
            norm: true,
        }
    }

    fn random_input(h: usize, w: usize, rng: &mut Rng) -> ComplexTensor {
        ComplexTensor::from_parts(
            1,
            h,
            w,
            (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let net = CUNetParams::init(NetConfig::toy(20, 12), 3).unwrap();
        let y = net.forward(&ComplexTensor::zeros(1, 20, 12)).unwrap();
        assert!(y.re.iter().chain(&y.im).all(|v| *v == 0.0));
    }

    #[test]
    fn output_shape_matches_input() {
        for h in [64, 128] {
            for w in [64, 128, 256] {
                let net = CUNetParams::init(NetConfig::toy(h, w), 1).unwrap();
                let y = net.forward(&ComplexTensor::zeros(1, h, w)).unwrap();
                assert_eq!(y.shape(), (1, h, w));
            }
        }
        let net = CUNetParams::init(NetConfig::toy(129, 33), 1).unwrap();
        assert_eq!(net.config.padded_size(), (136, 40));
        assert!(matches!(
            net.forward(&ComplexTensor::zeros(1, 128, 33)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn identity_network_passes_input() {
        let mut rng = seeded(9);
        let net = CUNetParams::identity(NetConfig::toy(17, 9)).unwrap();
        let x = random_input(17, 9, &mut rng);
        let y = net.forward(&x).unwrap();
        for (a, b) in y.re.iter().chain(&y.im).zip(x.re.iter().chain(&x.im)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_one_matches_manual_composition() {
        let mut rng = seeded(10);
        let net = CUNetParams::init(small_config(6, 4), 5).unwrap();
        let mut net = net;
        net.entry_diag
            .beta
            .iter_mut()
            .for_each(|b| *b = rng.random_range(0.0..6.0));
        net.exit_diag
            .beta
            .iter_mut()
            .for_each(|b| *b = rng.random_range(0.0..6.0));
        let x = random_input(6, 4, &mut rng);

        let d = &net.down_blocks[0];
        let h = net.entry_diag.forward(&x).unwrap().pad_to(6, 4);
        let a = d.conv_a.forward(&h).unwrap();
        let skip = d.conv_b.forward(&a).unwrap();
        let mut t = d.down.forward(&skip).unwrap();
        assert_eq!(t.shape(), (2, 3, 2));
        for l in &net.bottleneck {
            t = l.forward(&t).unwrap();
        }
        let u = net.up_blocks[0].up.forward(&t.upsample2()).unwrap();
        let m = net.up_blocks[0].merge.forward(&u.concat(&skip).unwrap()).unwrap();
        let o = net.head.forward(&m).unwrap();
        let want = net.exit_diag.forward(&o).unwrap();

        let got = net.forward(&x).unwrap();
        for (a, b) in got.re.iter().chain(&got.im).zip(want.re.iter().chain(&want.im)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn flatten_round_trip() {
        let net = CUNetParams::init(NetConfig::toy(16, 8), 2).unwrap();
        let flat = net.flatten();
        let mut other = net.zeros_like();
        other.load_flat(&flat).unwrap();
        assert_eq!(other, net);
        assert_eq!(
            net.block_layout().iter().map(|(_, n)| n).sum::<usize>(),
            net.num_params()
        );
    }
}
