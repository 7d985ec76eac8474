//! Signal-processing primitives: real FFT contract, FFT convolution, excitation
//! signals, SNR scaling and the signal-to-distortion ratio.
//!
//! FFT convention: unnormalized forward transform, `1/N` inverse. Under it the
//! one-sided energy identity reads
//! `sum_t x(t)^2 = (|X_0|^2 + 2 sum_{k=1}^{K-2} |X_k|^2 + |X_{N/2}|^2) / N`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{check_finite, invalid, Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 48_000;

/// SDR reported when the estimate matches the reference exactly.
pub const SDR_CAP_DB: f64 = 200.0;

/// Sample-rate-tagged, finite, non-empty mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    sample_rate: u32,
    samples: Vec<f64>,
}

impl Signal {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return invalid("sample rate must be positive");
        }
        if samples.is_empty() {
            return invalid("signal must contain at least one sample");
        }
        check_finite("signal", &samples)?;
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }
}

/// Multi-channel FIR filter attached to a 3-D position.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub position: [f64; 3],
    pub sample_rate: u32,
    taps: Vec<Vec<f64>>,
}

impl ImpulseResponse {
    pub fn new(position: [f64; 3], sample_rate: u32, taps: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = taps.first() else {
            return invalid("impulse response needs at least one channel");
        };
        let len = first.len();
        if len == 0 {
            return invalid("impulse response needs at least one tap");
        }
        if taps.iter().any(|c| c.len() != len) {
            return invalid("all channels must have the same tap count");
        }
        for c in &taps {
            check_finite("impulse response taps", c)?;
        }
        check_finite("impulse response position", &position)?;
        Ok(Self {
            position,
            sample_rate,
            taps,
        })
    }

    pub fn channels(&self) -> usize {
        self.taps.len()
    }

    pub fn num_taps(&self) -> usize {
        self.taps[0].len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.taps[c]
    }

    pub fn taps(&self) -> &[Vec<f64>] {
        &self.taps
    }

    pub fn channel_signal(&self, c: usize) -> Signal {
        Signal {
            sample_rate: self.sample_rate,
            samples: self.taps[c].clone(),
        }
    }

    pub fn peak(&self) -> f64 {
        self.taps
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// One-sided spectrum of a real signal; `bins.len() == fft_len / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub fft_len: usize,
}

impl Spectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.norm()).collect()
    }

    /// Energy of the time-domain signal recovered through the one-sided identity.
    pub fn parseval_energy(&self) -> f64 {
        let k = self.bins.len();
        let mut acc = 0.0;
        for (i, b) in self.bins.iter().enumerate() {
            let w = if i == 0 || i == k - 1 { 1.0 } else { 2.0 };
            acc += w * b.norm_sqr();
        }
        acc / self.fft_len as f64
    }
}

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// Forward/inverse real FFT pair of a fixed length with owned scratch space.
pub struct RealFft {
    len: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    time: Vec<f64>,
    freq: Vec<Complex64>,
    fwd_scratch: Vec<Complex64>,
    inv_scratch: Vec<Complex64>,
}

impl RealFft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_multiple_of(2) {
            return invalid(format!("fft length must be even and positive, got {len}"));
        }
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(len), p.plan_fft_inverse(len))
        });
        let fwd_scratch = forward.make_scratch_vec();
        let inv_scratch = inverse.make_scratch_vec();
        Ok(Self {
            len,
            time: vec![0.0; len],
            freq: vec![Complex64::default(); len / 2 + 1],
            forward,
            inverse,
            fwd_scratch,
            inv_scratch,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// Zero-pads `x` to the transform length and writes the one-sided spectrum into `out`.
    pub fn forward(&mut self, x: &[f64], out: &mut [Complex64]) {
        assert!(x.len() <= self.len, "input longer than fft length");
        assert_eq!(out.len(), self.bins());
        self.time[..x.len()].copy_from_slice(x);
        self.time[x.len()..].fill(0.0);
        self.forward
            .process_with_scratch(&mut self.time, out, &mut self.fwd_scratch)
            .expect("buffer sizes fixed at construction");
    }

    /// Inverse transform including the `1/N` factor. The imaginary parts of the
    /// DC and Nyquist bins are ignored.
    pub fn inverse(&mut self, spec: &[Complex64], out: &mut [f64]) {
        assert_eq!(spec.len(), self.bins());
        assert_eq!(out.len(), self.len);
        self.freq.copy_from_slice(spec);
        let last = self.freq.len() - 1;
        self.freq[0].im = 0.0;
        self.freq[last].im = 0.0;
        self.inverse
            .process_with_scratch(&mut self.freq, out, &mut self.inv_scratch)
            .expect("buffer sizes fixed at construction");
        let scale = 1.0 / self.len as f64;
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn fft_real(x: &[f64], fft_len: usize) -> Result<Spectrum> {
    if fft_len == 0 || !fft_len.is_multiple_of(2) {
        return invalid(format!("fft length must be even and positive, got {fft_len}"));
    }
    if x.len() > fft_len {
        return invalid(format!(
            "input of length {} does not fit fft length {fft_len}",
            x.len()
        ));
    }
    check_finite("fft input", x)?;
    let mut fft = RealFft::new(fft_len)?;
    let mut bins = vec![Complex64::default(); fft.bins()];
    fft.forward(x, &mut bins);
    Ok(Spectrum { bins, fft_len })
}

pub fn ifft_real(spec: &Spectrum) -> Result<Vec<f64>> {
    let mut fft = RealFft::new(spec.fft_len)?;
    if spec.bins.len() != fft.bins() {
        return Err(Error::Dimension {
            what: "spectrum bins",
            expected: fft.bins(),
            actual: spec.bins.len(),
        });
    }
    let mut out = vec![0.0; spec.fft_len];
    fft.inverse(&spec.bins, &mut out);
    Ok(out)
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn conv_fft_len(a: usize, b: usize) -> usize {
    (a + b - 1).next_power_of_two().max(2)
}

/// Full linear convolution of two real sequences through one zero-padded FFT.
pub fn convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert!(!a.is_empty() && !b.is_empty());
    let out_len = a.len() + b.len() - 1;
    let n = conv_fft_len(a.len(), b.len());
    let mut fft = RealFft::new(n).expect("power of two");
    let mut fa = vec![Complex64::default(); fft.bins()];
    let mut fb = vec![Complex64::default(); fft.bins()];
    fft.forward(a, &mut fa);
    fft.forward(b, &mut fb);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    let mut out = vec![0.0; n];
    fft.inverse(&fa, &mut out);
    out.truncate(out_len);
    out
}

pub fn convolve(s: &Signal, h: &Signal) -> Result<Signal> {
    if s.sample_rate != h.sample_rate {
        return Err(Error::SampleRate(s.sample_rate, h.sample_rate));
    }
    Ok(Signal {
        sample_rate: s.sample_rate,
        samples: convolve_slices(&s.samples, &h.samples),
    })
}

/// Convolution and its adjoint against a fixed source signal, for filters of
/// at most `max_taps` taps.
pub struct SourceConvolver {
    source_len: usize,
    max_taps: usize,
    fft: RealFft,
    source_spec: Vec<Complex64>,
    work: Vec<Complex64>,
    time: Vec<f64>,
}

impl SourceConvolver {
    pub fn new(source: &[f64], max_taps: usize) -> Result<Self> {
        if source.is_empty() || max_taps == 0 {
            return invalid("convolver needs a non-empty source and at least one tap");
        }
        let n = conv_fft_len(source.len(), max_taps);
        let mut fft = RealFft::new(n)?;
        let mut source_spec = vec![Complex64::default(); fft.bins()];
        fft.forward(source, &mut source_spec);
        Ok(Self {
            source_len: source.len(),
            max_taps,
            work: vec![Complex64::default(); fft.bins()],
            time: vec![0.0; n],
            fft,
            source_spec,
        })
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn output_len(&self, taps: usize) -> usize {
        self.source_len + taps - 1
    }

    /// `out = source * h`, `out.len() == source_len + h.len() - 1`.
    pub fn convolve(&mut self, h: &[f64], out: &mut [f64]) {
        assert!(!h.is_empty() && h.len() <= self.max_taps);
        assert_eq!(out.len(), self.output_len(h.len()));
        self.fft.forward(h, &mut self.work);
        self.work
            .iter_mut()
            .zip(&self.source_spec)
            .for_each(|(x, s)| *x *= s);
        self.fft.inverse(&self.work, &mut self.time);
        out.copy_from_slice(&self.time[..out.len()]);
    }

    /// Adjoint of [`Self::convolve`]: `out[k] = sum_t g[t] * source[t - k]` for `k < out.len()`.
    pub fn correlate(&mut self, g: &[f64], out: &mut [f64]) {
        assert!(!out.is_empty() && out.len() <= self.max_taps);
        assert!(g.len() <= self.output_len(out.len()));
        self.fft.forward(g, &mut self.work);
        self.work
            .iter_mut()
            .zip(&self.source_spec)
            .for_each(|(x, s)| *x *= s.conj());
        self.fft.inverse(&self.work, &mut self.time);
        out.copy_from_slice(&self.time[..out.len()]);
    }
}

/// Exponential sine sweep `sin(2 pi f0 T / ln(f1/f0) * (exp(t ln(f1/f0) / T) - 1))`.
pub fn log_sine_sweep(f0_hz: f64, f1_hz: f64, duration_s: f64, sample_rate: u32) -> Result<Signal> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f0_hz > 0.0 && f0_hz < f1_hz && f1_hz < nyquist) {
        return invalid(format!(
            "sweep band must satisfy 0 < f0 < f1 < {nyquist} Hz, got {f0_hz}..{f1_hz}"
        ));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return invalid("sweep duration must be positive");
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    if n == 0 {
        return invalid("sweep shorter than one sample");
    }
    let samples = (0..n)
        .map(|i| (sweep_phase(f0_hz, f1_hz, duration_s, i as f64 / sample_rate as f64)).sin())
        .collect();
    Signal::new(sample_rate, samples)
}

/// Phase argument of the exponential sweep at time `t` seconds.
pub fn sweep_phase(f0_hz: f64, f1_hz: f64, duration_s: f64, t: f64) -> f64 {
    let rate = (f1_hz / f0_hz).ln();
    2.0 * PI * f0_hz * duration_s / rate * ((t * rate / duration_s).exp() - 1.0)
}

/// `10 log10(|h_true|^2 / |h_true - h_est|^2)`, capped at [`SDR_CAP_DB`].
pub fn sdr_db(h_true: &[f64], h_est: &[f64]) -> Result<f64> {
    if h_true.len() != h_est.len() {
        return Err(Error::Dimension {
            what: "sdr operands",
            expected: h_true.len(),
            actual: h_est.len(),
        });
    }
    let reference = energy(h_true);
    if reference == 0.0 {
        return invalid("reference filter is all zeros");
    }
    let distortion: f64 = h_true
        .iter()
        .zip(h_est)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if distortion == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (reference / distortion).log10()).min(SDR_CAP_DB))
}

pub fn snr_db(clean: &[f64], noise: &[f64]) -> f64 {
    10.0 * (energy(clean) / energy(noise)).log10()
}

/// Scales `noise` so that `10 log10(E_clean / E_noise) == target_snr_db`.
pub fn scale_to_snr(clean: &Signal, noise: &Signal, target_snr_db: f64) -> Result<Signal> {
    if clean.len() != noise.len() {
        return Err(Error::Dimension {
            what: "snr operands",
            expected: clean.len(),
            actual: noise.len(),
        });
    }
    let gain = snr_gain(clean.samples(), noise.samples(), target_snr_db)?;
    Ok(Signal {
        sample_rate: noise.sample_rate,
        samples: noise.samples.iter().map(|v| v * gain).collect(),
    })
}

/// Gain to apply to `noise` to reach the target SNR against `clean`.
pub fn snr_gain(clean: &[f64], noise: &[f64], target_snr_db: f64) -> Result<f64> {
    let ec = energy(clean);
    let en = energy(noise);
    if ec == 0.0 || en == 0.0 {
        return invalid("clean and noise signals must have nonzero energy");
    }
    if !target_snr_db.is_finite() {
        return invalid("target SNR must be finite");
    }
    Ok((ec / en * 10f64.powf(-target_snr_db / 10.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dft_oracle(x: &[f64], n: usize) -> Vec<Complex64> {
        (0..=n / 2)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::default(), |acc, (t, v)| {
                    let th = -2.0 * PI * (k * t) as f64 / n as f64;
                    acc + Complex64::new(th.cos(), th.sin()) * *v
                })
            })
            .collect()
    }

    fn conv_oracle(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn delta_and_dc_spectra() {
        let s = fft_real(&[1.0, 0.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(s.bins.len(), 3);
        for b in &s.bins {
            assert_relative_eq!(b.re, 1.0);
            assert_eq!(b.im, 0.0);
        }
        let s = fft_real(&[1.0; 4], 4).unwrap();
        assert_relative_eq!(s.bins[0].re, 4.0);
        assert!(s.bins[1].norm() < 1e-15 && s.bins[2].norm() < 1e-15);
    }

    #[test]
    fn fft_matches_direct_dft_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = fft_real(&x, 16).unwrap();
        for (a, b) in s.bins.iter().zip(dft_oracle(&x, 16)) {
            assert!((a - b).norm() < 1e-12);
        }
        let e = energy(&x);
        assert!((s.parseval_energy() - e).abs() / e <= 1e-12);
    }

    #[test]
    fn fft_rejects_bad_lengths() {
        assert!(fft_real(&[1.0], 3).is_err());
        assert!(fft_real(&[1.0], 0).is_err());
        assert!(fft_real(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(fft_real(&[f64::NAN], 2).is_err());
    }

    #[test]
    fn convolution_examples() {
        let s = Signal::new(48_000, vec![0.3, -1.0, 2.5]).unwrap();
        let id = Signal::new(48_000, vec![1.0]).unwrap();
        let y = convolve(&s, &id).unwrap();
        for (a, b) in y.samples().iter().zip(s.samples()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let ones = Signal::new(48_000, vec![1.0, 1.0]).unwrap();
        let y = convolve(&ones, &ones).unwrap();
        for (a, b) in y.samples().iter().zip([1.0, 2.0, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        let other = Signal::new(44_100, vec![1.0]).unwrap();
        assert!(matches!(convolve(&s, &other), Err(Error::SampleRate(..))));
    }

    #[test]
    fn fft_convolution_matches_time_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..257).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = convolve_slices(&a, &b);
        let slow = conv_oracle(&a, &b);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn source_convolver_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..13).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..112).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut conv = SourceConvolver::new(&s, 13).unwrap();
        let mut y = vec![0.0; 112];
        conv.convolve(&h, &mut y);
        let mut c = vec![0.0; 13];
        conv.correlate(&g, &mut c);
        // <g, s*h> == <corr(g, s), h>
        let lhs: f64 = g.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = c.iter().zip(&h).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-11);
        for (a, b) in y.iter().zip(conv_oracle(&s, &h)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_contract() {
        let s = log_sine_sweep(20.0, 20_000.0, 1.0, 48_000).unwrap();
        assert_eq!(s.len(), 48_000);
        assert_eq!(s.samples()[0], 0.0);
        assert!(s.samples().iter().all(|v| v.abs() <= 1.0));
        assert!(log_sine_sweep(20.0, 30_000.0, 1.0, 48_000).is_err());
        assert!(log_sine_sweep(200.0, 100.0, 1.0, 48_000).is_err());
        assert!(log_sine_sweep(20.0, 200.0, 0.0, 48_000).is_err());
    }

    #[test]
    fn sweep_instantaneous_frequency_endpoints() {
        let (f0, f1, dur) = (20.0, 20_000.0, 1.0);
        let d = 1e-7;
        let inst = |t: f64| {
            (sweep_phase(f0, f1, dur, t + d) - sweep_phase(f0, f1, dur, t - d)) / (2.0 * d)
                / (2.0 * PI)
        };
        assert_relative_eq!(inst(0.0), f0, max_relative = 1e-6);
        assert_relative_eq!(inst(dur), f1, max_relative = 1e-6);
    }

    #[test]
    fn sdr_examples() {
        let h = [0.5, -1.0, 0.25, 2.0];
        let half: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
        assert_relative_eq!(sdr_db(&h, &half).unwrap(), 10.0 * 4f64.log10(), epsilon = 1e-12);
        assert_eq!(sdr_db(&h, &h).unwrap(), SDR_CAP_DB);
        assert!(sdr_db(&[0.0; 4], &h).is_err());
        assert!(sdr_db(&h, &h[..3]).is_err());
    }

    #[test]
    fn sdr_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Compensated summation as an extended-precision reference.
        let kahan = |it: &mut dyn Iterator<Item = f64>| {
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for v in it {
                let y = v - c;
                let t = s + y;
                c = (t - s) - y;
                s = t;
            }
            s
        };
        let num = kahan(&mut a.iter().map(|v| v * v));
        let den = kahan(&mut a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)));
        assert_relative_eq!(sdr_db(&a, &b).unwrap(), 10.0 * (num / den).log10(), epsilon = 1e-12);
    }

    #[test]
    fn snr_scaling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = Signal::new(48_000, (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let n = Signal::new(48_000, (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let z = scale_to_snr(&c, &n, 0.0).unwrap();
        assert_relative_eq!(z.energy(), c.energy(), max_relative = 1e-12);
        let z = scale_to_snr(&c, &n, -30.0).unwrap();
        assert_relative_eq!(z.energy(), 1000.0 * c.energy(), max_relative = 1e-12);
        for target in [-30.0, -7.5, 0.0, 12.0] {
            let z = scale_to_snr(&c, &n, target).unwrap();
            assert!((snr_db(c.samples(), z.samples()) - target).abs() < 1e-9);
        }
        let zero = Signal::new(48_000, vec![0.0; 300]).unwrap();
        assert!(scale_to_snr(&c, &zero, 0.0).is_err());
        assert!(scale_to_snr(&zero, &n, 0.0).is_err());
    }

    #[test]
    fn signal_and_ir_validation() {
        assert!(Signal::new(48_000, vec![]).is_err());
        assert!(Signal::new(48_000, vec![f64::INFINITY]).is_err());
        assert!(ImpulseResponse::new([0.0; 3], 48_000, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ImpulseResponse::new([0.0; 3], 48_000, vec![]).is_err());
    }
}
