//! Synthetic ground-truth filter fields on a sphere and noisy observations.
//!
//! Each node carries a `channels`-channel FIR built from band-limited
//! fractional-delay pulses: a direct path whose delay and gain follow the
//! lateral angle towards each channel's "ear", plus decaying reflections whose
//! delays and gains vary linearly with position. Filters are normalized to unit
//! peak.
//!
//! Noise is synthesized frame by frame: a fixed amplitude spectrum with fresh
//! random phases in every non-overlapping frame, so each frame's magnitude
//! spectrum equals the amplitude spectrum exactly.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baselines::{MeasuredIrSet, SphereAngle};
use crate::dsp::{energy, snr_gain, ImpulseResponse, RealFft, Signal, DEFAULT_SAMPLE_RATE};
use crate::error::{check_dim, invalid, Result};

/// Mixes an item index into a base seed (splitmix64 finalizer).
pub fn mix_seed(seed: u64, item: u64) -> u64 {
    let mut z = seed ^ item.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterFieldSpec {
    pub azimuth_count: usize,
    pub elevation_count: usize,
    pub taps: usize,
    pub channels: usize,
    pub sample_rate: u32,
    /// Direct-path delay range (ms) from the nearest to the farthest lateral angle.
    pub delay_range_ms: (f64, f64),
    /// Reflection amplitude decay, in nepers per millisecond.
    pub decay_per_ms: f64,
    pub reflections: usize,
    /// Upper band edge of every pulse.
    pub bandwidth_hz: f64,
    pub seed: u64,
}

impl Default for FilterFieldSpec {
    fn default() -> Self {
        Self {
            azimuth_count: 24,
            elevation_count: 12,
            taps: 400,
            channels: 2,
            sample_rate: DEFAULT_SAMPLE_RATE,
            delay_range_ms: (0.3, 0.9),
            decay_per_ms: 0.5,
            reflections: 8,
            bandwidth_hz: 16_000.0,
            seed: 1,
        }
    }
}

/// Half-width (samples) of the windowed-sinc pulse.
const PULSE_HALF_WIDTH: f64 = 16.0;

/// Largest per-position delay slope of a reflection (ms per unit distance).
const REFLECTION_DELAY_SLOPE_MS: f64 = 0.2;

impl FilterFieldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_count < 2 || self.elevation_count < 2 {
            return invalid("filter field grid must be at least 2 x 2");
        }
        if self.taps == 0 || self.channels == 0 {
            return invalid("filter field needs taps and channels");
        }
        let (lo, hi) = self.delay_range_ms;
        if !(lo >= 0.0 && hi >= lo) {
            return invalid("delay range must satisfy 0 <= min <= max");
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz < nyquist) {
            return invalid("pulse bandwidth must lie inside (0, nyquist)");
        }
        let last_direct = hi * self.sample_rate as f64 / 1000.0 + PULSE_HALF_WIDTH;
        if (self.taps as f64) <= last_direct {
            return invalid(format!(
                "{} taps cannot hold a direct path delayed by up to {hi} ms",
                self.taps
            ));
        }
        Ok(())
    }

    /// Grid angles, elevation-major: ring `j` at `-90 + 180 (j + 1/2) / n_el`,
    /// azimuth `360 i / n_az`.
    pub fn angles(&self) -> Vec<SphereAngle> {
        let mut out = Vec::with_capacity(self.azimuth_count * self.elevation_count);
        for j in 0..self.elevation_count {
            let el = -90.0 + 180.0 * (j as f64 + 0.5) / self.elevation_count as f64;
            for i in 0..self.azimuth_count {
                out.push(SphereAngle::new(360.0 * i as f64 / self.azimuth_count as f64, el));
            }
        }
        out
    }

    /// Ear direction of channel `c` in the horizontal plane.
    fn ear(&self, c: usize) -> [f64; 3] {
        let phi = if self.channels == 1 {
            0.0
        } else {
            PI / 2.0 - PI * c as f64 / (self.channels - 1) as f64
        };
        [phi.cos(), phi.sin(), 0.0]
    }

    /// Bound on `|h_a - h_b| / max(|h_a|, |h_b|)` for grid neighbours, from the
    /// Bernstein inequality for band-limited pulses and the linear drift of the
    /// delays and gains with position.
    pub fn neighbor_bound(&self) -> f64 {
        let step = 2.0 * PI / self.azimuth_count as f64;
        let el_step = PI / self.elevation_count as f64;
        let chord = 2.0 * (step.max(el_step) / 2.0).sin();
        let sr_ms = self.sample_rate as f64 / 1000.0;
        let (lo, hi) = self.delay_range_ms;
        let max_delay_shift = ((hi - lo) / 2.0).max(REFLECTION_DELAY_SLOPE_MS) * chord * sr_ms;
        let omega = 2.0 * PI * self.bandwidth_hz / self.sample_rate as f64;
        let shift = omega * max_delay_shift;
        // Gains move by at most half their value per unit distance.
        let gain = 0.5 * chord;
        // Unit-peak normalization can add at most the same relative change again.
        2.0 * (shift + gain)
    }
}

/// Band-limited fractional-delay pulse `2 fc sinc(2 fc (n - d))`, Hann-tapered.
fn add_pulse(taps: &mut [f64], delay: f64, gain: f64, cutoff: f64) {
    let start = (delay - PULSE_HALF_WIDTH).ceil().max(0.0) as usize;
    let end = ((delay + PULSE_HALF_WIDTH).floor() as usize).min(taps.len().saturating_sub(1));
    for (n, tap) in taps.iter_mut().enumerate().take(end + 1).skip(start) {
        let x = n as f64 - delay;
        let arg = 2.0 * cutoff * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
        let win = 0.5 + 0.5 * (PI * x / PULSE_HALF_WIDTH).cos();
        *tap += gain * 2.0 * cutoff * sinc * win;
    }
}

struct Reflection {
    offset_ms: f64,
    sign: f64,
    gain: f64,
    delay_dir: [f64; 3],
    gain_dir: [f64; 3],
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Filter of one node at `position` (unit sphere).
pub fn synth_filter(spec: &FilterFieldSpec, position: [f64; 3]) -> Result<ImpulseResponse> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sr_ms = spec.sample_rate as f64 / 1000.0;
    let length_ms = spec.taps as f64 / sr_ms;
    let cutoff = spec.bandwidth_hz / spec.sample_rate as f64;
    let per_channel: Vec<Vec<Reflection>> = (0..spec.channels)
        .map(|_| {
            (0..spec.reflections)
                .map(|_| Reflection {
                    offset_ms: rng.gen_range(0.15..(0.8 * length_ms).max(0.2)),
                    sign: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                    gain: rng.gen_range(0.2..0.7),
                    delay_dir: random_unit(&mut rng),
                    gain_dir: random_unit(&mut rng),
                })
                .collect()
        })
        .collect();

    let (lo, hi) = spec.delay_range_ms;
    let mut taps = vec![vec![0.0; spec.taps]; spec.channels];
    for (c, out) in taps.iter_mut().enumerate() {
        let lateral = dot(position, spec.ear(c));
        let direct_ms = lo + (hi - lo) * (1.0 - lateral) / 2.0;
        let direct_gain = 0.55 + 0.45 * (1.0 + lateral) / 2.0;
        add_pulse(out, direct_ms * sr_ms, direct_gain, cutoff);
        for r in &per_channel[c] {
            let delay_ms = direct_ms + r.offset_ms + REFLECTION_DELAY_SLOPE_MS * dot(position, r.delay_dir);
            let gain = r.sign
                * r.gain
                * (1.0 + 0.5 * dot(position, r.gain_dir)) / 1.5
                * (-spec.decay_per_ms * (delay_ms - direct_ms)).exp();
            add_pulse(out, delay_ms * sr_ms, gain, cutoff);
        }
    }
    let peak = taps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    taps.iter_mut().flatten().for_each(|v| *v /= peak);
    ImpulseResponse::new(position, spec.sample_rate, taps)
}

pub fn make_filter_field(spec: &FilterFieldSpec) -> Result<MeasuredIrSet> {
    spec.validate()?;
    let angles = spec.angles();
    let irs = angles
        .iter()
        .map(|a| synth_filter(spec, a.to_position()))
        .collect::<Result<Vec<_>>>()?;
    MeasuredIrSet::new(irs, Some(angles))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// One amplitude spectrum for every position.
    Independent,
    /// Two bands whose centres move with the position.
    Dependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub target_snr_db: f64,
    pub band_width_hz: f64,
    /// Frame length of the synthesized noise spectrogram.
    pub frame_len: usize,
    pub sample_rate: u32,
    /// Seeds the amplitude spectrum; phases come from the per-target realization.
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, target_snr_db: f64, seed: u64) -> Self {
        Self {
            kind,
            target_snr_db,
            band_width_hz: 3000.0,
            frame_len: 2048,
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed,
        }
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || !self.frame_len.is_multiple_of(2) {
            return invalid("noise frame length must be even");
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.band_width_hz > 0.0 && self.band_width_hz < nyquist) {
            return invalid("noise band must fit inside (0, nyquist)");
        }
        Ok(())
    }

    /// Unscaled amplitude spectrum at `position`, one value per frame bin.
    pub fn amplitude_spectrum(&self, position: [f64; 3]) -> Result<Vec<f64>> {
        self.validate()?;
        let bins = self.bins();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 0xa3d1));
        let unit = Uniform::new(0.0, 1.0);
        match self.kind {
            NoiseKind::Independent => Ok((0..bins).map(|_| unit.sample(&mut rng)).collect()),
            NoiseKind::Dependent => {
                let (c1, c2) = band_mapping(position, self.band_width_hz, self.sample_rate);
                let bin_hz = self.sample_rate as f64 / self.frame_len as f64;
                let width_bins = (self.band_width_hz / bin_hz).round() as usize;
                let profiles: [Vec<f64>; 2] = [
                    (0..width_bins).map(|_| 0.25 + 0.75 * unit.sample(&mut rng)).collect(),
                    (0..width_bins).map(|_| 0.25 + 0.75 * unit.sample(&mut rng)).collect(),
                ];
                let mut amp = vec![0.0f64; bins];
                for (center, profile) in [c1, c2].into_iter().zip(&profiles) {
                    let first = ((center - self.band_width_hz / 2.0) / bin_hz).ceil() as usize;
                    for (i, p) in profile.iter().enumerate() {
                        let k = first + i;
                        if k > 0 && k < bins - 1 && (k as f64) * bin_hz < center + self.band_width_hz / 2.0 {
                            amp[k] = f64::max(amp[k], *p);
                        }
                    }
                }
                Ok(amp)
            }
        }
    }
}

/// Band centres for the position-dependent noise: azimuth moves the first band
/// over 3..18 kHz, elevation the second over 6..18 kHz. Both are clamped so the
/// band stays inside `(0, nyquist)`.
pub fn band_mapping(position: [f64; 3], band_width_hz: f64, sample_rate: u32) -> (f64, f64) {
    let a = SphereAngle::from_position(position);
    let az_norm = a.azimuth_deg / 360.0;
    let el_norm = (a.elevation_deg + 90.0) / 180.0;
    let nyquist = sample_rate as f64 / 2.0;
    let lo = band_width_hz / 2.0 + 1.0;
    let hi = nyquist - band_width_hz / 2.0 - 1.0;
    let c1 = (3000.0 + az_norm * 15_000.0).clamp(lo, hi);
    let c2 = (6000.0 + el_norm * 12_000.0).clamp(lo, hi);
    (c1, c2)
}

/// Framewise noise with magnitude `amplitude` in every frame and phases drawn
/// from `seed`. DC and Nyquist bins get a random sign.
pub fn synthesize_noise(amplitude: &[f64], frame_len: usize, len: usize, seed: u64) -> Result<Vec<f64>> {
    check_dim("noise amplitude bins", frame_len / 2 + 1, amplitude.len())?;
    let mut fft = RealFft::new(frame_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = Uniform::new(0.0, 2.0 * PI);
    let mut spec = vec![Complex64::default(); amplitude.len()];
    let mut frame = vec![0.0; frame_len];
    let mut out = Vec::with_capacity(len + frame_len);
    let last = amplitude.len() - 1;
    while out.len() < len {
        for (k, (s, a)) in spec.iter_mut().zip(amplitude).enumerate() {
            *s = if k == 0 || k == last {
                Complex64::new(if rng.gen_bool(0.5) { *a } else { -*a }, 0.0)
            } else {
                Complex64::from_polar(*a, phase.sample(&mut rng))
            };
        }
        fft.inverse(&spec, &mut frame);
        out.extend_from_slice(&frame);
    }
    out.truncate(len);
    Ok(out)
}

/// Observation of one filter: per channel `s * h_c + n_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTarget {
    pub observed: Vec<Signal>,
    pub clean: Vec<Vec<f64>>,
    /// Injected `|N(w)|` per frame bin (shared by all channels).
    pub noise_amplitude: Vec<f64>,
}

/// Raw (unscaled) noise for every channel of one target.
pub(crate) fn raw_noise(
    noise: &NoiseSpec,
    position: [f64; 3],
    len: usize,
    channels: usize,
    realization: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let amp = noise.amplitude_spectrum(position)?;
    if amp.iter().all(|a| *a == 0.0) {
        return invalid("noise band fell outside the spectrum");
    }
    let base = mix_seed(noise.seed, realization);
    let n = (0..channels)
        .map(|c| synthesize_noise(&amp, noise.frame_len, len, mix_seed(base, c as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((amp, n))
}

pub(crate) fn assemble_target(
    sample_rate: u32,
    clean: Vec<Vec<f64>>,
    noise: &[Vec<f64>],
    amplitude: &[f64],
    gain: f64,
) -> Result<NoisyTarget> {
    let observed = clean
        .iter()
        .zip(noise)
        .map(|(c, n)| Signal::new(sample_rate, c.iter().zip(n).map(|(a, b)| a + gain * b).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoisyTarget {
        observed,
        clean,
        noise_amplitude: amplitude.iter().map(|a| a * gain).collect(),
    })
}

/// `y_c = s * h_c + n_c` with the noise scaled so that the total SNR over all
/// channels equals `noise.target_snr_db`. `realization` seeds the phases.
pub fn make_target(
    s: &Signal,
    h: &ImpulseResponse,
    noise: &NoiseSpec,
    position: [f64; 3],
    realization: u64,
) -> Result<NoisyTarget> {
    if s.sample_rate() != h.sample_rate || s.sample_rate() != noise.sample_rate {
        return Err(crate::Error::SampleRate(s.sample_rate(), h.sample_rate));
    }
    let clean: Vec<Vec<f64>> = (0..h.channels())
        .map(|c| crate::dsp::convolve_slices(s.samples(), h.channel(c)))
        .collect();
    let len = clean[0].len();
    let (amp, n) = raw_noise(noise, position, len, h.channels(), realization)?;
    let gain = snr_gain(&clean.concat(), &n.concat(), noise.target_snr_db)?;
    assemble_target(s.sample_rate(), clean, &n, &amp, gain)
}

/// Sweep length (samples) such that the filtered sweep spans exactly `frames`
/// noise frames for filters of `taps` taps.
pub fn frame_aligned_sweep_len(frames: usize, frame_len: usize, taps: usize) -> usize {
    frames * frame_len + 1 - taps
}

/// Unit-variance uniform white noise.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = 3f64.sqrt();
    (0..len).map(|_| rng.gen_range(-a..a)).collect()
}

pub fn total_energy(xs: &[Vec<f64>]) -> f64 {
    xs.iter().map(|x| energy(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{fft_real, log_sine_sweep, snr_db};

    fn small_spec() -> FilterFieldSpec {
        FilterFieldSpec {
            azimuth_count: 8,
            elevation_count: 4,
            ..Default::default()
        }
    }

    #[test]
    fn field_is_deterministic_and_unit_peak() {
        let a = make_filter_field(&small_spec()).unwrap();
        let b = make_filter_field(&small_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        for ir in a.irs() {
            assert_eq!((ir.channels(), ir.num_taps()), (2, 400));
            assert!((ir.peak() - 1.0).abs() < 1e-15);
        }
        let other = make_filter_field(&FilterFieldSpec { seed: 2, ..small_spec() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn neighbours_within_smoothness_bound() {
        let spec = FilterFieldSpec::default();
        let field = make_filter_field(&spec).unwrap();
        let bound = spec.neighbor_bound();
        let (na, ne) = (spec.azimuth_count, spec.elevation_count);
        let norm = |ir: &ImpulseResponse| ir.taps().iter().map(|c| energy(c)).sum::<f64>().sqrt();
        let dist = |a: &ImpulseResponse, b: &ImpulseResponse| {
            a.taps()
                .iter()
                .zip(b.taps())
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        };
        let mut worst = 0.0f64;
        for j in 0..ne {
            for i in 0..na {
                let a = field.get(j * na + i);
                let mut nbrs = vec![field.get(j * na + (i + 1) % na)];
                if j + 1 < ne {
                    nbrs.push(field.get((j + 1) * na + i));
                }
                for b in nbrs {
                    let rel = dist(a, b) / norm(a).max(norm(b));
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst <= bound, "worst {worst} bound {bound}");
    }

    #[test]
    fn band_mapping_endpoints_and_range() {
        let (c1, c2) = band_mapping(SphereAngle::new(0.0, -90.0).to_position(), 3000.0, 48_000);
        assert!((c1 - 3000.0).abs() < 1e-6 && (c2 - 6000.0).abs() < 1e-6);
        let (c1, _) = band_mapping(SphereAngle::new(359.999_999_9, 0.0).to_position(), 3000.0, 48_000);
        assert!((c1 - 18_000.0).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = random_unit(&mut rng);
            let (c1, c2) = band_mapping(p, 3000.0, 48_000);
            for c in [c1, c2] {
                assert!(c - 1500.0 > 0.0 && c + 1500.0 < 24_000.0);
            }
        }
    }

    #[test]
    fn synthesized_noise_frames_have_exact_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let amp: Vec<f64> = (0..33).map(|_| rng.gen_range(0.0..1.0)).collect();
        let n = synthesize_noise(&amp, 64, 64 * 3, 9).unwrap();
        for f in 0..3 {
            let spec = fft_real(&n[f * 64..(f + 1) * 64], 64).unwrap();
            for (a, b) in spec.magnitudes().iter().zip(&amp) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_noise_and_measured_snr() {
        let spec = small_spec();
        let field = make_filter_field(&spec).unwrap();
        let s = log_sine_sweep(20.0, 20_000.0, 0.1, 48_000).unwrap();
        let ir = field.get(3);
        let quiet = NoiseSpec::new(NoiseKind::Independent, 200.0, 4);
        let t = make_target(&s, ir, &quiet, ir.position, 0).unwrap();
        for (o, c) in t.observed.iter().zip(&t.clean) {
            let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(o.samples().iter().zip(c).all(|(a, b)| (a - b).abs() <= 1e-8 * scale));
            assert_eq!(o.len(), s.len() + spec.taps - 1);
        }
        for kind in [NoiseKind::Independent, NoiseKind::Dependent] {
            let ns = NoiseSpec::new(kind, -10.0, 5);
            let t = make_target(&s, ir, &ns, ir.position, 1).unwrap();
            let noise: Vec<f64> = t
                .observed
                .iter()
                .zip(&t.clean)
                .flat_map(|(o, c)| o.samples().iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>())
                .collect();
            assert!((snr_db(&t.clean.concat(), &noise) + 10.0).abs() < 0.1);
        }
    }

    #[test]
    fn independent_noise_ignores_position() {
        let field = make_filter_field(&small_spec()).unwrap();
        let s = log_sine_sweep(20.0, 20_000.0, 0.05, 48_000).unwrap();
        let ir = field.get(0);
        let ns = NoiseSpec::new(NoiseKind::Independent, 0.0, 6);
        let a = make_target(&s, ir, &ns, field.get(1).position, 3).unwrap();
        let b = make_target(&s, ir, &ns, field.get(9).position, 3).unwrap();
        assert_eq!(a, b);
        let ds = NoiseSpec::new(NoiseKind::Dependent, 0.0, 6);
        let a = make_target(&s, ir, &ds, field.get(1).position, 3).unwrap();
        let b = make_target(&s, ir, &ds, field.get(9).position, 3).unwrap();
        assert_ne!(a.noise_amplitude, b.noise_amplitude);
    }

    #[test]
    fn dependent_noise_energy_sits_in_predicted_bands() {
        let ns = NoiseSpec::new(NoiseKind::Dependent, 0.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = random_unit(&mut rng);
            let amp = ns.amplitude_spectrum(p).unwrap();
            let n = synthesize_noise(&amp, 2048, 4096, 1).unwrap();
            let spec = fft_real(&n[..2048], 2048).unwrap();
            let (c1, c2) = band_mapping(p, 3000.0, 48_000);
            let bin_hz = 48_000.0 / 2048.0;
            let in_band = |f: f64| (f - c1).abs() <= 1500.0 || (f - c2).abs() <= 1500.0;
            let mut total = 0.0;
            let mut inside = 0.0;
            let mut moments = [(0.0, 0.0); 2];
            for (k, b) in spec.bins.iter().enumerate() {
                let f = k as f64 * bin_hz;
                let e = b.norm_sqr();
                total += e;
                if in_band(f) {
                    inside += e;
                }
                for (m, c) in moments.iter_mut().zip([c1, c2]) {
                    if (f - c).abs() <= 1500.0 {
                        m.0 += e * f;
                        m.1 += e;
                    }
                }
            }
            assert!(inside / total > 0.999);
            for (m, c) in moments.iter().zip([c1, c2]) {
                let centroid = m.0 / m.1;
                assert!((centroid - c).abs() < 1500.0);
            }
        }
    }
}
