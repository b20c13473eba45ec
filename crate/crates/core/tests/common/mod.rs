#![allow(dead_code)]

pub mod oracles;
pub mod synthetic;

use fecg_core::cunet::{
    example_loss, ActivationKind, CUNetParams, ComplexTensor, ConvMode, NetConfig, TrainingExample,
};
use fecg_core::rng::{seeded, Rng};
use fecg_core::spectral::{Stft, StftConfig};
use rand::Rng as _;

/// Worst finite-difference mismatch found in one parameter block.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub name: String,
    pub worst_rel: f64,
    pub analytic: f64,
    pub numeric: f64,
}

pub const FD_EPS: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn depth1_config(activation: ActivationKind, mode: ConvMode, height: usize, width: usize) -> NetConfig {
    NetConfig {
        height,
        width,
        channels: vec![2],
        bottleneck_channels: 3,
        kernel: 3,
        activation,
        conv_mode: mode,
        norm: true,
    }
}

/// Random network with every parameter class moved away from its
/// initial value so no gradient is trivially zero.
pub fn randomized_net(cfg: NetConfig, seed: u64) -> CUNetParams {
    let mut net = CUNetParams::init(cfg, seed).unwrap();
    let mut rng = seeded(seed ^ 0xabcdef);
    let mut flat = net.flatten();
    for v in flat.iter_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    net.load_flat(&flat).unwrap();
    net
}

pub fn random_example(len: usize, rng: &mut Rng) -> TrainingExample {
    let input: Vec<f64> = (0..len).map(|_| rng.random_range(-1.5..1.5)).collect();
    let target: Vec<f64> = input.iter().map(|v| 0.3 * v + rng.random_range(-0.2..0.2)).collect();
    TrainingExample { input, target }
}

/// Smooth scalar readout of a network output: random linear weights plus a
/// quadratic term, so every output element carries a distinct weight.
pub struct Readout {
    pub w_re: Vec<f64>,
    pub w_im: Vec<f64>,
}

impl Readout {
    pub fn random(n: usize, rng: &mut Rng) -> Self {
        Self {
            w_re: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            w_im: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    pub fn loss(&self, y: &ComplexTensor) -> f64 {
        (0..y.len())
            .map(|j| self.w_re[j] * y.re[j] + self.w_im[j] * y.im[j] + 0.5 * (y.re[j] * y.re[j] + y.im[j] * y.im[j]))
            .sum()
    }

    pub fn grad(&self, y: &ComplexTensor) -> ComplexTensor {
        let mut g = y.clone();
        for j in 0..y.len() {
            g.re[j] = self.w_re[j] + y.re[j];
            g.im[j] = self.w_im[j] + y.im[j];
        }
        g
    }
}

pub fn random_tensor(channels: usize, h: usize, w: usize, rng: &mut Rng) -> ComplexTensor {
    let n = channels * h * w;
    ComplexTensor::from_parts(
        channels,
        h,
        w,
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Central differences against the analytic gradient for every parameter
/// of a depth-1 network on a random input, returning the worst element per block.
pub fn check_net_gradients(seed: u64, activation: ActivationKind, mode: ConvMode) -> Vec<BlockCheck> {
    let (h, w) = (6, 8);
    let net = randomized_net(depth1_config(activation, mode, h, w), seed);
    let mut rng = seeded(seed + 100);
    let x = random_tensor(1, h, w, &mut rng);
    let readout = Readout::random(h * w, &mut rng);

    let (y, cache) = net.forward_cached(&x).unwrap();
    let mut acc = net.zeros_like();
    net.backward(&cache, &readout.grad(&y), &mut acc).unwrap();
    let analytic = acc.flatten();

    let mut probe = net.clone();
    let loss_at = |probe: &mut CUNetParams, flat: &[f64]| {
        probe.load_flat(flat).unwrap();
        readout.loss(&probe.forward(&x).unwrap())
    };
    let base = net.flatten();
    let mut flat = base.clone();
    let mut out = Vec::new();
    let mut offset = 0;
    for (name, len) in net.block_layout() {
        let mut worst = BlockCheck {
            name: name.clone(),
            worst_rel: 0.0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in offset..offset + len {
            flat[i] = base[i] + FD_EPS;
            let up = loss_at(&mut probe, &flat);
            flat[i] = base[i] - FD_EPS;
            let down = loss_at(&mut probe, &flat);
            flat[i] = base[i];
            let numeric = (up - down) / (2.0 * FD_EPS);
            let r = rel_err(analytic[i], numeric);
            if r >= worst.worst_rel {
                worst = BlockCheck {
                    name: name.clone(),
                    worst_rel: r,
                    analytic: analytic[i],
                    numeric,
                };
            }
        }
        out.push(worst);
        offset += len;
    }
    out
}

/// Checks the training loss gradient with respect to the network output
/// spectrogram on `probes` randomly chosen coefficients; returns the worst
/// relative error.
pub fn check_loss_gradient(seed: u64, probes: usize) -> f64 {
    let stft = Stft::new(StftConfig::default()).unwrap();
    let len = 512;
    let (h, w) = (stft.config().n_freqs(), stft.config().n_frames(len));
    let mut rng = seeded(seed);
    let ex = random_example(len, &mut rng);
    // linear single-layer "network" so the output spectrogram is a free variable
    let mut cfg = depth1_config(ActivationKind::Identity, ConvMode::Split, h, w);
    cfg.norm = false;
    let net = CUNetParams::identity(cfg).unwrap();
    let mut acc = net.zeros_like();
    example_loss(&net, &stft, &ex, 1.0, 1.0, Some(&mut acc)).unwrap();
    // with an identity network the exit-phase gradient at beta = 0 is
    // -g_re * y_im + g_im * y_re; recover it from a perturbed evaluation instead
    let analytic = acc.exit_diag.beta.clone();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let j = rng.random_range(0..h * w);
        probe.exit_diag.beta[j] = FD_EPS;
        let up = example_loss(&probe, &stft, &ex, 1.0, 1.0, None).unwrap();
        probe.exit_diag.beta[j] = -FD_EPS;
        let down = example_loss(&probe, &stft, &ex, 1.0, 1.0, None).unwrap();
        probe.exit_diag.beta[j] = 0.0;
        let numeric = (up - down) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(analytic[j], numeric));
    }
    worst
}

/// Least-squares slope of log10 periodogram power against log10 frequency
/// over `[lo, hi]` Hz, for one noise component synthesised alone.
pub fn periodogram_slope(weights: fecg_core::noise::NoiseWeights, lo: f64, hi: f64, seed: u64) -> f64 {
    use fecg_core::noise::{synthesize_noise, MixtureParams, NoiseBands};
    use fecg_core::spectral::RealFft;
    let n = 1 << 17;
    let fs = 250.0;
    let bands = NoiseBands {
        pink_hi: 12.0,
        white_hi: 90.0,
    };
    let x = synthesize_noise(n, fs, &bands, &weights, &MixtureParams::default(), &mut seeded(seed)).unwrap();
    let spec = RealFft::new(n).forward(&x.samples);
    let df = fs / n as f64;
    let pts: Vec<(f64, f64)> = spec
        .iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * df, c.norm_sqr()))
        .filter(|(f, p)| *f >= lo && *f <= hi && *p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
