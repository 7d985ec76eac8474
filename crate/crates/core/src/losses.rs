//! Training objectives: waveform squared error and the noise-robust
//! magnitude-spectrum loss.
//!
//! The spectral loss frames the residual `r = y_hat - s * h`, and for each
//! frame accumulates `(|R(w)| - |N(w)|)^2` over the full two-sided spectrum,
//! scaled by `1/fft_len`. With `|N| = 0` and one rectangular frame covering the
//! residual this is exactly `sum_t r(t)^2`. Frame losses are averaged.

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{convolve_slices, RealFft, SourceConvolver};
use crate::error::{check_dim, check_finite, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralLossConfig {
    pub fft_len: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for SpectralLossConfig {
    fn default() -> Self {
        Self {
            fft_len: 2048,
            frame_len: 2048,
            hop: 2048,
            window: Window::Rectangular,
        }
    }
}

impl SpectralLossConfig {
    /// One rectangular frame spanning a residual of `len` samples.
    pub fn single_frame(len: usize) -> Self {
        let n = (len + len % 2).max(2);
        Self {
            fft_len: n,
            frame_len: n,
            hop: n,
            window: Window::Rectangular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_len == 0 || !self.fft_len.is_multiple_of(2) {
            return invalid(format!("fft_len must be even and positive, got {}", self.fft_len));
        }
        if self.frame_len == 0 || self.frame_len > self.fft_len {
            return invalid("frame_len must be in 1..=fft_len");
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return invalid("hop must be in 1..=frame_len");
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len <= self.frame_len {
            1
        } else {
            1 + (len - self.frame_len).div_ceil(self.hop)
        }
    }

    pub(crate) fn window_values(&self) -> Vec<f64> {
        match self.window {
            Window::Rectangular => vec![1.0; self.frame_len],
            Window::Hann => (0..self.frame_len)
                .map(|i| {
                    let x = std::f64::consts::PI * i as f64 / self.frame_len as f64;
                    x.sin() * x.sin()
                })
                .collect(),
        }
    }
}

/// Squared error `sum_t (y_hat - y)^2` and its gradient `2 (y - y_hat)` with respect to `y`.
pub fn l2_loss(y_hat: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim("l2 operands", y_hat.len(), y.len())?;
    let grad: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| 2.0 * (a - b)).collect();
    let loss = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEval {
    pub loss: f64,
    /// Bins (summed over frames) where `|R|` vanished (below `1e-13` of the
    /// frame's peak bin) and the zero subgradient was used.
    pub zero_bins: usize,
}

/// Reusable framing/FFT state for the noise-robust loss.
pub struct SpectralLoss {
    cfg: SpectralLossConfig,
    fft: RealFft,
    window: Vec<f64>,
    frame: Vec<f64>,
    spec: Vec<Complex64>,
    back: Vec<f64>,
}

impl SpectralLoss {
    pub fn new(cfg: SpectralLossConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = RealFft::new(cfg.fft_len)?;
        Ok(Self {
            window: cfg.window_values(),
            frame: vec![0.0; cfg.frame_len],
            spec: vec![Complex64::default(); cfg.bins()],
            back: vec![0.0; cfg.fft_len],
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &SpectralLossConfig {
        &self.cfg
    }

    /// Evaluates the loss of `residual` against `noise_amp`, accumulating
    /// gradients into `grad_residual` and `grad_noise`. Bins with
    /// `mask[k] == false` are excluded from the loss.
    pub fn evaluate(
        &mut self,
        residual: &[f64],
        noise_amp: &[f64],
        grad_residual: &mut [f64],
        grad_noise: &mut [f64],
        mask: Option<&[bool]>,
    ) -> Result<SpectralEval> {
        let k_bins = self.cfg.bins();
        check_dim("noise amplitude bins", k_bins, noise_amp.len())?;
        check_dim("noise gradient", k_bins, grad_noise.len())?;
        check_dim("residual gradient", residual.len(), grad_residual.len())?;
        if residual.is_empty() {
            return invalid("residual is empty");
        }
        if let Some(m) = mask {
            check_dim("bin mask", k_bins, m.len())?;
        }
        let frames = self.cfg.num_frames(residual.len());
        let inv_frames = 1.0 / frames as f64;
        let inv_n = 1.0 / self.cfg.fft_len as f64;
        let mut loss = 0.0;
        let mut zero_bins = 0;
        for f in 0..frames {
            let start = f * self.cfg.hop;
            let end = (start + self.cfg.frame_len).min(residual.len());
            let seg = &residual[start..end];
            for (i, v) in self.frame.iter_mut().enumerate() {
                *v = seg.get(i).map_or(0.0, |r| r * self.window[i]);
            }
            self.fft.forward(&self.frame, &mut self.spec);
            let peak = self.spec.iter().fold(0.0f64, |m, x| m.max(x.norm()));
            let zero_tol = 1e-13 * peak;
            for k in 0..k_bins {
                if mask.is_some_and(|m| !m[k]) {
                    self.spec[k] = Complex64::default();
                    continue;
                }
                let w = if k == 0 || k == k_bins - 1 { 1.0 } else { 2.0 };
                let x = self.spec[k];
                let a = x.norm();
                let diff = a - noise_amp[k];
                loss += w * diff * diff * inv_n * inv_frames;
                grad_noise[k] -= 2.0 * w * diff * inv_n * inv_frames;
                // d/dX (|X| - m)^2 = 2 (|X| - m) X / |X|; zero subgradient at |X| = 0.
                self.spec[k] = if a > zero_tol {
                    x * (2.0 * diff * inv_frames / a)
                } else {
                    zero_bins += 1;
                    Complex64::default()
                };
            }
            self.fft.inverse(&self.spec, &mut self.back);
            for (i, g) in grad_residual[start..end].iter_mut().enumerate() {
                *g += self.back[i] * self.window[i];
            }
        }
        Ok(SpectralEval { loss, zero_bins })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRobustLoss {
    pub loss: f64,
    pub grad_taps: Vec<f64>,
    pub grad_noise: Vec<f64>,
    pub zero_bins: usize,
}

/// Noise-robust loss of one channel: `y_hat` against `s * h` with noise
/// amplitude spectrum `noise_amp`; `y_hat.len()` must be `s.len() + h.len() - 1`.
pub fn noise_robust_loss(
    y_hat: &[f64],
    s: &[f64],
    h: &[f64],
    noise_amp: &[f64],
    cfg: &SpectralLossConfig,
) -> Result<NoiseRobustLoss> {
    noise_robust_loss_masked(y_hat, s, h, noise_amp, cfg, None)
}

pub(crate) fn noise_robust_loss_masked(
    y_hat: &[f64],
    s: &[f64],
    h: &[f64],
    noise_amp: &[f64],
    cfg: &SpectralLossConfig,
    mask: Option<&[bool]>,
) -> Result<NoiseRobustLoss> {
    if s.is_empty() || h.is_empty() {
        return invalid("source and filter must be non-empty");
    }
    check_dim("observed signal length", s.len() + h.len() - 1, y_hat.len())?;
    check_finite("observed signal", y_hat)?;
    check_finite("filter taps", h)?;
    let residual = residual(y_hat, &convolve_slices(s, h));
    let mut engine = SpectralLoss::new(*cfg)?;
    let mut grad_r = vec![0.0; residual.len()];
    let mut grad_noise = vec![0.0; cfg.bins()];
    let eval = engine.evaluate(&residual, noise_amp, &mut grad_r, &mut grad_noise, mask)?;
    // r = y_hat - s * h  =>  dL/dh = -corr(dL/dr, s).
    let mut conv = SourceConvolver::new(s, h.len())?;
    let mut grad_taps = vec![0.0; h.len()];
    conv.correlate(&grad_r, &mut grad_taps);
    grad_taps.iter_mut().for_each(|g| *g = -*g);
    Ok(NoiseRobustLoss {
        loss: eval.loss,
        grad_taps,
        grad_noise,
        zero_bins: eval.zero_bins,
    })
}

pub(crate) fn residual(y_hat: &[f64], y: &[f64]) -> Vec<f64> {
    y_hat.iter().zip(y).map(|(a, b)| a - b).collect()
}
