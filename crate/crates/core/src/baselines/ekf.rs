//! Extended Kalman filter and Rauch-Tung-Striebel smoother tracking the
//! maternal ECG with the Gaussian-sum phase model.
//!
//! State is `(theta, z)`: cardiac phase and ECG amplitude. Phase advances at
//! the rate implied by the R-peak spacing; amplitude changes by the model's
//! increment over that phase step. Both the phase (interpolated between R peaks) and the
//! signal are observed.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::synth::{wrap_phase, EcgModelParams};
use crate::{Error, Result, TimeSeries};

use super::{refine_peaks, Separation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig {
    /// Phase process noise variance per sample (rad^2).
    pub phase_process_var: f64,
    /// Phase observation noise variance (rad^2).
    pub phase_obs_var: f64,
    /// Amplitude process variance as a fraction of the observation variance.
    pub amplitude_ratio: f64,
    /// Lower bound on the observation variance relative to the signal variance.
    pub obs_floor: f64,
}

// tuned once on a held-out noiseless record and frozen
impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            phase_process_var: 1e-8,
            phase_obs_var: 1e-4,
            amplitude_ratio: 1e-4,
            obs_floor: 1e-6,
        }
    }
}

/// Phase ramp with `theta = r_theta` at every R peak and one full turn per
/// beat; the first and last intervals are extrapolated. Also returns the
/// angular rate (rad/sample).
pub fn phase_from_rpeaks(n: usize, rpeaks: &[f64], r_theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rpeaks.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "phase tracking needs at least 2 R peaks, got {}",
            rpeaks.len()
        )));
    }
    if rpeaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("R peaks must be strictly increasing".into()));
    }
    let mut theta = vec![0.0; n];
    let mut rate = vec![0.0; n];
    let mut k = 0;
    for i in 0..n {
        while k + 2 < rpeaks.len() && i as f64 >= rpeaks[k + 1] {
            k += 1;
        }
        let (a, b) = (rpeaks[k], rpeaks[k + 1]);
        let w = 2.0 * PI / (b - a);
        theta[i] = wrap_phase(r_theta + w * (i as f64 - a));
        rate[i] = w;
    }
    Ok((theta, rate))
}

fn basis(model: &EcgModelParams, theta: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (o, w) in out.iter_mut().zip(&model.waves) {
        let d = wrap_phase(theta - w.theta);
        *o = (-d * d / (2.0 * w.width * w.width)).exp();
    }
    out
}

/// Least-squares wave amplitudes (with an intercept) for `x` observed at
/// phases `theta`, keeping the model's centres and widths.
pub fn fit_amplitudes(model: &EcgModelParams, x: &[f64], theta: &[f64]) -> EcgModelParams {
    let n = x.len();
    let mut a = DMatrix::<f64>::zeros(n, 6);
    for i in 0..n {
        let g = basis(model, theta[i]);
        for j in 0..5 {
            a[(i, j)] = g[j];
        }
        a[(i, 5)] = 1.0;
    }
    let b = DVector::from_column_slice(x);
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let svd = ata.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let coef = svd.solve(&atb, tol).unwrap_or_else(|_| DVector::zeros(6));
    let mut fitted = model.clone();
    fitted.base_amplitude_scale = 1.0;
    for (w, c) in fitted.waves.iter_mut().zip(coef.iter()) {
        w.amplitude = *c;
    }
    fitted
}

/// Symmetrises `p` and floors its eigenvalues; returns whether anything changed
/// beyond symmetrisation.
fn stabilize(p: &mut Matrix2<f64>, floor: f64) -> bool {
    let sym = 0.5 * (*p + p.transpose());
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|v| *v >= floor) {
        *p = sym;
        return false;
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    *p = eig.eigenvectors * Matrix2::from_diagonal(&vals) * eig.eigenvectors.transpose();
    true
}

struct Pass {
    prior: Vec<Vector2<f64>>,
    prior_cov: Vec<Matrix2<f64>>,
    post: Vec<Vector2<f64>>,
    post_cov: Vec<Matrix2<f64>>,
    transition: Vec<Matrix2<f64>>,
    stabilized: usize,
}

fn forward_pass(
    x: &[f64],
    phase: &[f64],
    rate: &[f64],
    model: &EcgModelParams,
    q: Matrix2<f64>,
    r: Matrix2<f64>,
    floor: f64,
) -> Pass {
    let n = x.len();
    let mut pass = Pass {
        prior: Vec::with_capacity(n),
        prior_cov: Vec::with_capacity(n),
        post: Vec::with_capacity(n),
        post_cov: Vec::with_capacity(n),
        transition: Vec::with_capacity(n),
        stabilized: 0,
    };
    let mut s = Vector2::new(phase[0], x[0]);
    let mut p = r;
    for i in 0..n {
        let (s_pred, f) = if i == 0 {
            (s, Matrix2::identity())
        } else {
            let w = rate[i - 1];
            let th = s[0];
            // the amplitude ODE integrated exactly over one phase step
            let pred = Vector2::new(wrap_phase(th + w), s[1] + model.value(th + w) - model.value(th));
            let f = Matrix2::new(1.0, 0.0, model.derivative(th + w) - model.derivative(th), 1.0);
            (pred, f)
        };
        let mut p_pred = if i == 0 { p } else { f * p * f.transpose() + q };
        if stabilize(&mut p_pred, floor) {
            pass.stabilized += 1;
        }
        let innov = Vector2::new(wrap_phase(phase[i] - s_pred[0]), x[i] - s_pred[1]);
        let sm = p_pred + r;
        let k = p_pred * sm.try_inverse().unwrap_or_else(Matrix2::zeros);
        s = s_pred + k * innov;
        s[0] = wrap_phase(s[0]);
        let ik = Matrix2::identity() - k;
        // Joseph form
        p = ik * p_pred * ik.transpose() + k * r * k.transpose();
        if stabilize(&mut p, floor) {
            pass.stabilized += 1;
        }
        pass.prior.push(s_pred);
        pass.prior_cov.push(p_pred);
        pass.post.push(s);
        pass.post_cov.push(p);
        pass.transition.push(f);
    }
    pass
}

fn smooth(pass: &Pass, floor: f64) -> (Vec<Vector2<f64>>, usize) {
    let n = pass.post.len();
    let mut out = pass.post.clone();
    let mut cov = pass.post_cov[n - 1];
    let mut stabilized = 0;
    for i in (0..n - 1).rev() {
        let f = pass.transition[i + 1];
        let inv = pass.prior_cov[i + 1].try_inverse().unwrap_or_else(Matrix2::zeros);
        let c = pass.post_cov[i] * f.transpose() * inv;
        let mut d = out[i + 1] - pass.prior[i + 1];
        d[0] = wrap_phase(d[0]);
        let mut s = pass.post[i] + c * d;
        s[0] = wrap_phase(s[0]);
        out[i] = s;
        cov = pass.post_cov[i] + c * (cov - pass.prior_cov[i + 1]) * c.transpose();
        if stabilize(&mut cov, floor) {
            stabilized += 1;
        }
    }
    (out, stabilized)
}

fn run(
    x: &TimeSeries,
    rpeaks: &[usize],
    model: &EcgModelParams,
    cfg: &EkfConfig,
    smooth_pass: bool,
) -> Result<Separation> {
    model.validate()?;
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    if rpeaks.is_empty() {
        return Err(Error::InvalidInput("no R peaks given".into()));
    }
    if rpeaks.iter().any(|&p| p >= n) {
        return Err(Error::InvalidInput("R peak beyond the end of the signal".into()));
    }
    let (phase, rate) = phase_from_rpeaks(n, &refine_peaks(&x.samples, rpeaks), model.r_theta())?;
    let fitted = fit_amplitudes(model, &x.samples, &phase);
    let template: Vec<f64> = phase.iter().map(|t| fitted.value(*t)).collect();
    let tmean = template.iter().sum::<f64>() / n as f64;
    let xmean = x.samples.iter().sum::<f64>() / n as f64;
    let signal_var = x.samples.iter().map(|v| (v - xmean).powi(2)).sum::<f64>() / n as f64;
    let misfit = x
        .samples
        .iter()
        .zip(&template)
        .map(|(v, t)| (v - xmean - (t - tmean)).powi(2))
        .sum::<f64>()
        / n as f64;
    if signal_var == 0.0 {
        return Ok(Separation {
            estimate: x.clone(),
            residual: TimeSeries::zeros(n, x.fs)?,
        });
    }
    let r_amp = misfit.max(cfg.obs_floor * signal_var);
    let q = Matrix2::new(cfg.phase_process_var, 0.0, 0.0, cfg.amplitude_ratio * r_amp);
    let r = Matrix2::new(cfg.phase_obs_var, 0.0, 0.0, r_amp);
    let floor = 1e-12 * r_amp.min(cfg.phase_obs_var);

    let pass = forward_pass(&x.samples, &phase, &rate, &fitted, q, r, floor);
    let (states, extra) = if smooth_pass {
        smooth(&pass, floor)
    } else {
        (pass.post.clone(), 0)
    };
    let events = pass.stabilized + extra;
    if events > 0 {
        log::debug!("covariance stabilised {events} times");
    }
    let est: Vec<f64> = states.iter().map(|s| s[1]).collect();
    let residual: Vec<f64> = x.samples.iter().zip(&est).map(|(a, b)| a - b).collect();
    Ok(Separation {
        estimate: TimeSeries::new(est, x.fs)?,
        residual: TimeSeries::new(residual, x.fs)?,
    })
}

/// Forward EKF; the residual is the fetal candidate.
pub fn ekf_denoise(x: &TimeSeries, rpeaks: &[usize], model: &EcgModelParams, cfg: &EkfConfig) -> Result<Separation> {
    run(x, rpeaks, model, cfg, false)
}

/// Forward EKF followed by an RTS backward pass.
pub fn eks_denoise(x: &TimeSeries, rpeaks: &[usize], model: &EcgModelParams, cfg: &EkfConfig) -> Result<Separation> {
    run(x, rpeaks, model, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_is_r_theta_at_peaks_and_wraps() {
        let (th, rate) = phase_from_rpeaks(1000, &[100.0, 300.0, 500.0], 0.0).unwrap();
        assert!(th[100].abs() < 1e-12 && th[300].abs() < 1e-12);
        assert!((th[200] - PI).abs() < 1e-9 || (th[200] + PI).abs() < 1e-9);
        assert!(th.iter().all(|t| *t > -PI - 1e-12 && *t <= PI + 1e-12));
        assert!((rate[0] - 2.0 * PI / 200.0).abs() < 1e-15);
        assert!(phase_from_rpeaks(10, &[3.0], 0.0).is_err());
    }

    #[test]
    fn amplitude_fit_recovers_model() {
        let model = EcgModelParams::default();
        let (th, _) = phase_from_rpeaks(2000, &[100.0, 300.0, 500.0, 700.0], 0.0).unwrap();
        let x: Vec<f64> = th.iter().map(|t| 3.0 * model.value(*t) + 0.5).collect();
        let fit = fit_amplitudes(&model, &x, &th);
        for (a, b) in fit.waves.iter().zip(&model.waves) {
            assert!((a.amplitude - 3.0 * b.amplitude * model.base_amplitude_scale).abs() < 1e-8);
        }
    }

    #[test]
    fn stabilize_floors_negative_eigenvalues() {
        let mut p = Matrix2::new(1.0, 2.0, 2.0, 1.0);
        assert!(stabilize(&mut p, 1e-9));
        let e = SymmetricEigen::new(p).eigenvalues;
        assert!(e.iter().all(|v| *v >= 1e-9 - 1e-15));
    }

    #[test]
    fn covariances_stay_symmetric_psd() {
        let model = EcgModelParams::default();
        let peaks: Vec<f64> = (0..12).map(|k| 40.0 + 187.5 * k as f64).collect();
        let n = 2200;
        let (th, rate) = phase_from_rpeaks(n, &peaks, 0.0).unwrap();
        // a signal the model cannot explain, to push the filter around
        let x: Vec<f64> = (0..n)
            .map(|i| model.value(th[i]) + ((i * 7919) % 13) as f64 - 6.0)
            .collect();
        let q = Matrix2::new(1e-8, 0.0, 0.0, 1e-4);
        let r = Matrix2::new(1e-4, 0.0, 0.0, 1.0);
        let pass = forward_pass(&x, &th, &rate, &model, q, r, 1e-16);
        for p in pass.post_cov.iter().chain(&pass.prior_cov) {
            assert_eq!(p[(0, 1)], p[(1, 0)]);
            assert!(SymmetricEigen::new(*p).eigenvalues.iter().all(|v| *v >= -1e-12));
        }
    }
}
