//! Central finite-difference checks of the analytic gradients: the spectral
//! loss with respect to taps and noise amplitudes, and the full training chain
//! (MLP parameters -> taps -> loss, noise model -> amplitudes -> loss).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{convolve_slices, fft_real, Signal, Spectrum};
use crate::error::{invalid, Result};
use crate::losses::{noise_robust_loss_masked, residual, SpectralLossConfig, Window};
use crate::nn::{EncoderConfig, IrMlp};
use crate::noise::{NoiseModel, NoiseModelKind};
use crate::synth::mix_seed;
use crate::train::{batch_gradients, LossKind, TrainingSet};

/// Bins whose magnitude is at most this fraction of the frame peak count as
/// vanishing and are excluded from the tap check.
pub const ZERO_BIN_TOLERANCE: f64 = 1e-9;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Floor used when comparing a gradient vector: a millionth of its largest
/// entry or of the loss value, whichever is larger. Central differences with
/// step `1e-5` carry a rounding error near `2e-11 |loss|`, which stays below
/// `1e-4` of this floor.
pub fn comparison_floor(grads: &[f64], loss: f64) -> f64 {
    let g = grads.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    1e-6 * g.max(loss.abs()).max(f64::MIN_POSITIVE)
}

fn central_difference(mut f: impl FnMut(f64) -> Result<f64>, x: f64, step: f64) -> Result<f64> {
    Ok((f(x + step)? - f(x - step)?) / (2.0 * step))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub taps: usize,
    pub signal_len: usize,
    pub spectral: SpectralLossConfig,
    /// Use `|N| = 0` instead of random amplitudes.
    pub zero_noise: bool,
    /// Force `|R| = 0` at this bin (requires a single frame covering the residual).
    pub zero_bin: Option<usize>,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            taps: 16,
            signal_len: 48,
            spectral: SpectralLossConfig {
                fft_len: 32,
                frame_len: 24,
                hop: 12,
                window: Window::Hann,
            },
            zero_noise: false,
            zero_bin: None,
            step: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_rel_error_taps: f64,
    pub max_rel_error_noise: f64,
    /// Bins where `|R|` vanished in some frame; the tap check excludes them.
    pub skipped_bins: Vec<usize>,
}

/// Bins whose magnitude vanishes in any frame of `r`.
fn vanishing_bins(r: &[f64], cfg: &SpectralLossConfig) -> Result<Vec<bool>> {
    let window = cfg.window_values();
    let mut zero = vec![false; cfg.bins()];
    for f in 0..cfg.num_frames(r.len()) {
        let start = f * cfg.hop;
        let frame: Vec<f64> = (0..cfg.frame_len)
            .map(|i| r.get(start + i).map_or(0.0, |v| v * window[i]))
            .collect();
        let spec = fft_real(&frame, cfg.fft_len)?;
        let mags = spec.magnitudes();
        let peak = mags.iter().fold(0.0f64, |m, v| m.max(*v));
        for (z, m) in zero.iter_mut().zip(&mags) {
            *z |= *m <= ZERO_BIN_TOLERANCE * peak;
        }
    }
    Ok(zero)
}

/// Checks the noise-robust loss gradients with respect to taps and noise
/// amplitudes on one random instance.
pub fn loss_grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    cfg.spectral.validate()?;
    if cfg.taps == 0 || cfg.signal_len == 0 {
        return invalid("grad check needs taps and a signal");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bins = cfg.spectral.bins();
    let s: Vec<f64> = (0..cfg.signal_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..cfg.taps).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out_len = cfg.signal_len + cfg.taps - 1;
    let mut noise: Vec<f64> = (0..bins).map(|_| rng.gen_range(0.1..2.0)).collect();
    if cfg.zero_noise {
        noise.fill(0.0);
    }
    let mut r0: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if let Some(k) = cfg.zero_bin {
        if cfg.spectral.num_frames(out_len) != 1 || cfg.spectral.window != Window::Rectangular {
            return invalid("a forced zero bin needs one rectangular frame covering the residual");
        }
        if k >= bins {
            return invalid("zero bin out of range");
        }
        if cfg.spectral.fft_len != out_len {
            // Zeroing a bin of a zero-padded frame would leak into the padding.
            return invalid("a forced zero bin needs fft_len equal to the residual length");
        }
        let mut spec = fft_real(&r0, cfg.spectral.fft_len)?;
        spec.bins[k] = Complex64::default();
        r0 = crate::dsp::ifft_real(&Spectrum {
            bins: spec.bins,
            fft_len: spec.fft_len,
        })?;
    }
    let y_hat: Vec<f64> = convolve_slices(&s, &h).iter().zip(&r0).map(|(a, b)| a + b).collect();

    let zero = vanishing_bins(&residual(&y_hat, &convolve_slices(&s, &h)), &cfg.spectral)?;
    let mask: Vec<bool> = zero.iter().map(|z| !z).collect();
    let skipped_bins: Vec<usize> = zero.iter().enumerate().filter(|(_, z)| **z).map(|(k, _)| k).collect();
    let mask_opt = if skipped_bins.is_empty() { None } else { Some(&mask[..]) };

    let analytic = noise_robust_loss_masked(&y_hat, &s, &h, &noise, &cfg.spectral, None)?;
    let floor_taps = comparison_floor(&analytic.grad_taps, analytic.loss);
    let mut max_taps = 0.0f64;
    let mut hp = h.clone();
    for i in 0..h.len() {
        let fd = central_difference(
            |v| {
                hp[i] = v;
                Ok(noise_robust_loss_masked(&y_hat, &s, &hp, &noise, &cfg.spectral, mask_opt)?.loss)
            },
            h[i],
            cfg.step,
        )?;
        hp[i] = h[i];
        max_taps = max_taps.max(relative_error(analytic.grad_taps[i], fd, floor_taps));
    }
    let floor_noise = comparison_floor(&analytic.grad_noise, analytic.loss);
    let mut max_noise = 0.0f64;
    let mut np = noise.clone();
    for k in 0..bins {
        let fd = central_difference(
            |v| {
                np[k] = v;
                Ok(noise_robust_loss_masked(&y_hat, &s, &h, &np, &cfg.spectral, None)?.loss)
            },
            noise[k],
            cfg.step,
        )?;
        np[k] = noise[k];
        max_noise = max_noise.max(relative_error(analytic.grad_noise[k], fd, floor_noise));
    }
    Ok(GradCheckReport {
        max_rel_error: max_taps.max(max_noise),
        max_rel_error_taps: max_taps,
        max_rel_error_noise: max_noise,
        skipped_bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainCheckConfig {
    pub taps: usize,
    pub signal_len: usize,
    pub channels: usize,
    pub positions: usize,
    pub loss: LossKind,
    pub noise: NoiseModelKind,
    pub spectral: SpectralLossConfig,
    pub hidden: usize,
    pub layers: usize,
    pub num_octaves: usize,
    /// Parameters checked per block (IR-MLP, noise model); all when larger.
    pub max_params: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for ChainCheckConfig {
    fn default() -> Self {
        Self {
            taps: 12,
            signal_len: 40,
            channels: 2,
            positions: 2,
            loss: LossKind::NoiseRobust,
            noise: NoiseModelKind::Static,
            spectral: SpectralLossConfig {
                fft_len: 32,
                frame_len: 32,
                hop: 16,
                window: Window::Rectangular,
            },
            hidden: 8,
            layers: 3,
            num_octaves: 3,
            max_params: 400,
            step: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckReport {
    pub max_rel_error_mlp: f64,
    pub max_rel_error_noise: f64,
    pub checked_params: usize,
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn checked_indices(len: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut idx = sample(rng, len, max).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Checks gradients of the training objective with respect to the IR-MLP
/// and noise-model parameters on a random instance.
pub fn chain_grad_check(cfg: &ChainCheckConfig) -> Result<ChainCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let source: Vec<f64> = (0..cfg.signal_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out_len = cfg.signal_len + cfg.taps - 1;
    let positions: Vec<[f64; 3]> = (0..cfg.positions).map(|_| random_unit(&mut rng)).collect();
    let targets: Vec<Vec<Vec<f64>>> = (0..cfg.positions)
        .map(|_| {
            (0..cfg.channels)
                .map(|_| (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    let data = TrainingSet {
        source: Signal::new(crate::dsp::DEFAULT_SAMPLE_RATE, source)?,
        positions,
        targets,
        num_taps: cfg.taps,
        noise_amplitudes: Vec::new(),
    };
    let mut model = IrMlp::init(
        EncoderConfig::new(4, cfg.num_octaves),
        cfg.hidden,
        cfg.layers,
        cfg.channels,
        cfg.taps,
        mix_seed(cfg.seed, 1),
    )?;
    // Non-zero biases so every unit is exercised on both sides of the kink.
    for v in model.params.as_mut_slice() {
        *v += rng.gen_range(-0.1..0.1);
    }
    let bins = cfg.spectral.bins();
    let mut noise = match cfg.noise {
        NoiseModelKind::None => None,
        NoiseModelKind::Static => Some(NoiseModel::from_log_amplitudes(
            (0..bins).map(|_| rng.gen_range(-1.5..0.5)).collect(),
        )?),
        NoiseModelKind::Positional => Some(NoiseModel::new_positional(bins, 2, mix_seed(cfg.seed, 2))?),
    };
    let all: Vec<usize> = (0..cfg.positions).collect();
    let g = batch_gradients(&model, noise.as_ref(), &data, &all, cfg.loss, cfg.spectral)?;

    let mlp_idx = checked_indices(model.params.len(), cfg.max_params, &mut rng);
    let floor = comparison_floor(&g.mlp, g.loss);
    let mut max_mlp = 0.0f64;
    for &i in &mlp_idx {
        let orig = model.params.as_slice()[i];
        let fd = central_difference(
            |v| {
                model.params.as_mut_slice()[i] = v;
                Ok(batch_gradients(&model, noise.as_ref(), &data, &all, cfg.loss, cfg.spectral)?.loss)
            },
            orig,
            cfg.step,
        )?;
        model.params.as_mut_slice()[i] = orig;
        max_mlp = max_mlp.max(relative_error(g.mlp[i], fd, floor));
    }

    let mut max_noise = 0.0f64;
    let mut checked = mlp_idx.len();
    if let Some(len) = noise.as_ref().map(|n| n.params().len()) {
        let noise_idx = checked_indices(len, cfg.max_params, &mut rng);
        let floor = comparison_floor(&g.noise, g.loss);
        let set = |noise: &mut Option<NoiseModel>, i: usize, v: f64| {
            if let Some(n) = noise.as_mut() {
                n.params_mut()[i] = v;
            }
        };
        for &i in &noise_idx {
            let orig = noise.as_ref().map_or(0.0, |n| n.params()[i]);
            let fd = central_difference(
                |v| {
                    set(&mut noise, i, v);
                    Ok(batch_gradients(&model, noise.as_ref(), &data, &all, cfg.loss, cfg.spectral)?.loss)
                },
                orig,
                cfg.step,
            )?;
            set(&mut noise, i, orig);
            max_noise = max_noise.max(relative_error(g.noise[i], fd, floor));
        }
        checked += noise_idx.len();
    }
    Ok(ChainCheckReport {
        max_rel_error_mlp: max_mlp,
        max_rel_error_noise: max_noise,
        checked_params: checked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub instances: usize,
    pub max_rel_error: f64,
    pub max_rel_error_taps: f64,
    pub max_rel_error_noise: f64,
    pub max_rel_error_mlp: f64,
}

/// `instances` random checks cycling through both losses, both noise model
/// variants, zero and random noise, framed and single-frame configurations.
pub fn grad_check_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        instances,
        max_rel_error: 0.0,
        max_rel_error_taps: 0.0,
        max_rel_error_noise: 0.0,
        max_rel_error_mlp: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let inst_seed = mix_seed(seed, i as u64);
        let taps = rng.gen_range(2..=16);
        let signal_len = rng.gen_range(taps..=64);
        let window = if i % 2 == 0 { Window::Rectangular } else { Window::Hann };
        let spectral = if i % 3 == 0 {
            SpectralLossConfig::single_frame(signal_len + taps - 1)
        } else {
            let frame_len = 2 * rng.gen_range(4..=16);
            SpectralLossConfig {
                fft_len: frame_len,
                frame_len,
                hop: frame_len / 2,
                window,
            }
        };
        let loss = loss_grad_check(&GradCheckConfig {
            taps,
            signal_len,
            spectral,
            zero_noise: i % 4 == 1,
            zero_bin: None,
            step: 1e-5,
            seed: inst_seed,
        })?;
        report.max_rel_error_taps = report.max_rel_error_taps.max(loss.max_rel_error_taps);
        report.max_rel_error_noise = report.max_rel_error_noise.max(loss.max_rel_error_noise);

        let (loss_kind, noise) = match i % 3 {
            0 => (LossKind::L2, NoiseModelKind::None),
            1 => (LossKind::NoiseRobust, NoiseModelKind::Static),
            _ => (LossKind::NoiseRobust, NoiseModelKind::Positional),
        };
        let chain = chain_grad_check(&ChainCheckConfig {
            taps,
            signal_len,
            loss: loss_kind,
            noise,
            spectral,
            max_params: 120,
            seed: inst_seed,
            ..Default::default()
        })?;
        report.max_rel_error_mlp = report.max_rel_error_mlp.max(chain.max_rel_error_mlp);
        report.max_rel_error_noise = report.max_rel_error_noise.max(chain.max_rel_error_noise);
    }
    report.max_rel_error = report
        .max_rel_error_taps
        .max(report.max_rel_error_noise)
        .max(report.max_rel_error_mlp);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-8) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
        assert!((comparison_floor(&[0.5, -2.0], 1.0) - 2e-6).abs() < 1e-20);
        assert!((comparison_floor(&[0.5], 10.0) - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn default_instance_passes() {
        let r = loss_grad_check(&GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
        assert!(r.skipped_bins.is_empty());
    }

    #[test]
    fn zero_noise_instance_passes() {
        let r = loss_grad_check(&GradCheckConfig {
            zero_noise: true,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn forced_zero_bin_is_flagged_and_skipped() {
        let r = loss_grad_check(&GradCheckConfig {
            taps: 8,
            signal_len: 25,
            spectral: SpectralLossConfig::single_frame(32),
            zero_bin: Some(5),
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.skipped_bins, vec![5]);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn chain_checks_pass_for_every_variant() {
        for (loss, noise) in [
            (LossKind::L2, NoiseModelKind::None),
            (LossKind::NoiseRobust, NoiseModelKind::Static),
            (LossKind::NoiseRobust, NoiseModelKind::Positional),
        ] {
            let r = chain_grad_check(&ChainCheckConfig {
                loss,
                noise,
                max_params: 150,
                ..Default::default()
            })
            .unwrap();
            assert!(r.max_rel_error_mlp <= 1e-4 && r.max_rel_error_noise <= 1e-4, "{loss:?} {r:?}");
        }
    }
}
