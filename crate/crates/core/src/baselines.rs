//! Classical comparison systems: Wiener deconvolution with a tail-based noise
//! estimate, NLMS system identification, and nearest-neighbour / bilinear
//! interpolation of measured filters on a sphere.

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{ImpulseResponse, RealFft};
use crate::error::{check_finite, invalid, Error, Result};

/// Azimuth/elevation of a node on the measurement sphere, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereAngle {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl SphereAngle {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    /// Unit vector; azimuth counter-clockwise from +x, elevation towards +z.
    pub fn to_position(self) -> [f64; 3] {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    }

    pub fn from_position(p: [f64; 3]) -> Self {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let el = (p[2] / r).clamp(-1.0, 1.0).asin().to_degrees();
        let az = p[1].atan2(p[0]).to_degrees().rem_euclid(360.0);
        Self::new(az, el)
    }
}

/// A set of measured filters with pairwise distinct positions and optional
/// sphere-grid angles (one per entry).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredIrSet {
    irs: Vec<ImpulseResponse>,
    angles: Option<Vec<SphereAngle>>,
}

impl MeasuredIrSet {
    pub fn new(irs: Vec<ImpulseResponse>, angles: Option<Vec<SphereAngle>>) -> Result<Self> {
        if let Some(a) = &angles {
            if a.len() != irs.len() {
                return invalid("one grid angle per impulse response required");
            }
        }
        for i in 0..irs.len() {
            for j in 0..i {
                if irs[i].position == irs[j].position {
                    return invalid(format!("entries {j} and {i} share a position"));
                }
            }
        }
        Ok(Self { irs, angles })
    }

    pub fn len(&self) -> usize {
        self.irs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.irs.is_empty()
    }

    pub fn irs(&self) -> &[ImpulseResponse] {
        &self.irs
    }

    pub fn get(&self, i: usize) -> &ImpulseResponse {
        &self.irs[i]
    }

    pub fn angles(&self) -> Option<&[SphereAngle]> {
        self.angles.as_deref()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.irs.iter().map(|ir| ir.position).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.irs.len()) {
            return invalid(format!("index {bad} out of range"));
        }
        Ok(Self {
            irs: indices.iter().map(|&i| self.irs[i].clone()).collect(),
            angles: self
                .angles
                .as_ref()
                .map(|a| indices.iter().map(|&i| a[i]).collect()),
        })
    }

    /// Entries grouped by elevation, each ring sorted by azimuth.
    fn rings(&self) -> Result<Vec<Ring>> {
        let Some(angles) = &self.angles else {
            return invalid("bilinear interpolation needs grid angles");
        };
        let mut rings: Vec<Ring> = Vec::new();
        for (i, a) in angles.iter().enumerate() {
            let az = a.azimuth_deg.rem_euclid(360.0);
            match rings.iter_mut().find(|r| r.elevation == a.elevation_deg) {
                Some(r) => r.nodes.push((az, i)),
                None => rings.push(Ring {
                    elevation: a.elevation_deg,
                    nodes: vec![(az, i)],
                }),
            }
        }
        rings.sort_by(|a, b| a.elevation.total_cmp(&b.elevation));
        for r in &mut rings {
            r.nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Ok(rings)
    }
}

struct Ring {
    elevation: f64,
    nodes: Vec<(f64, usize)>,
}

impl Ring {
    /// Linear weights of the two azimuth neighbours of `az`, wrapping at 360.
    fn weights(&self, az: f64) -> Vec<(usize, f64)> {
        let n = self.nodes.len();
        if n == 1 {
            return vec![(self.nodes[0].1, 1.0)];
        }
        // Last node at or below `az` (cyclically), and its successor.
        let lo = match self.nodes.iter().rposition(|(a, _)| *a <= az) {
            Some(i) => i,
            None => n - 1,
        };
        let hi = (lo + 1) % n;
        let (a_lo, i_lo) = self.nodes[lo];
        let (a_hi, i_hi) = self.nodes[hi];
        let span = (a_hi - a_lo).rem_euclid(360.0);
        let offset = (az - a_lo).rem_euclid(360.0);
        if offset == 0.0 || span == 0.0 {
            return vec![(i_lo, 1.0)];
        }
        let t = offset / span;
        vec![(i_lo, 1.0 - t), (i_hi, t)]
    }
}

/// Blend weights of the (up to four) grid entries surrounding `query`.
pub fn bilinear_weights(set: &MeasuredIrSet, query: SphereAngle) -> Result<Vec<(usize, f64)>> {
    let rings = set.rings()?;
    if rings.is_empty() {
        return invalid("empty set");
    }
    let el = query.elevation_deg;
    let (first, last) = (rings[0].elevation, rings[rings.len() - 1].elevation);
    if !(first..=last).contains(&el) {
        return invalid(format!(
            "elevation {el} outside the measured range {first}..={last}"
        ));
    }
    let az = query.azimuth_deg.rem_euclid(360.0);
    let hi = rings.iter().position(|r| r.elevation >= el).unwrap();
    if rings[hi].elevation == el {
        return Ok(rings[hi].weights(az));
    }
    let lo = hi - 1;
    let t = (el - rings[lo].elevation) / (rings[hi].elevation - rings[lo].elevation);
    let mut out: Vec<(usize, f64)> = rings[lo]
        .weights(az)
        .into_iter()
        .map(|(i, w)| (i, w * (1.0 - t)))
        .collect();
    out.extend(rings[hi].weights(az).into_iter().map(|(i, w)| (i, w * t)));
    Ok(out)
}

/// Tap-wise bilinear blend in (azimuth, elevation). On a full grid this is
/// the standard four-corner cell interpolation; on thinned rings azimuth
/// interpolation uses the nearest remaining nodes of each ring.
pub fn bilinear_ir(set: &MeasuredIrSet, query: SphereAngle) -> Result<ImpulseResponse> {
    let weights = bilinear_weights(set, query)?;
    let first = set.get(weights[0].0);
    let mut taps = vec![vec![0.0; first.num_taps()]; first.channels()];
    for (i, w) in weights {
        for (acc, src) in taps.iter_mut().zip(set.get(i).taps()) {
            acc.iter_mut().zip(src).for_each(|(a, s)| *a += w * s);
        }
    }
    ImpulseResponse::new(query.to_position(), first.sample_rate, taps)
}

pub fn nearest_index(set: &MeasuredIrSet, query: [f64; 3]) -> Result<usize> {
    if set.is_empty() {
        return invalid("nearest neighbour on an empty set");
    }
    let dist = |p: [f64; 3]| (0..3).map(|k| (p[k] - query[k]).powi(2)).sum::<f64>();
    let mut best = (0, dist(set.irs[0].position));
    for (i, ir) in set.irs.iter().enumerate().skip(1) {
        let d = dist(ir.position);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Entry closest to `query` (Euclidean); ties go to the lowest index.
pub fn nearest_neighbor_ir(set: &MeasuredIrSet, query: [f64; 3]) -> Result<ImpulseResponse> {
    Ok(set.get(nearest_index(set, query)?).clone())
}

/// Relative spectral floor applied to `|S|` before deconvolution.
pub const SPECTRAL_FLOOR: f64 = 1e-4;

/// Deconvolution is rejected when more than this fraction of bins is floored.
pub const MAX_FLOORED_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct WienerEstimate {
    pub taps: Vec<f64>,
    /// Estimated `|N(w)|` on the `fft_len` grid.
    pub noise_amplitude: Vec<f64>,
    pub floored_bins: usize,
}

/// Wiener estimate of a `num_taps` filter from source `s` and observation `y_hat`.
///
/// 1. `H_n = Y / S` with `|S|` floored at `1e-4 max|S|`.
/// 2. The last 10% of `h_n = IFFT(H_n)` is treated as noise; its zero-padded
///    spectrum, rescaled for the segment length and multiplied by `|S|`,
///    estimates `|N|`.
/// 3. `G = |H_n|^2 / (|H_n|^2 + |N / S|^2)` is applied to `H_n` and the
///    result truncated to `num_taps`.
pub fn wiener_estimate(
    s: &[f64],
    y_hat: &[f64],
    num_taps: usize,
    fft_len: usize,
) -> Result<WienerEstimate> {
    if s.is_empty() || num_taps == 0 {
        return invalid("wiener estimate needs a source and at least one tap");
    }
    if y_hat.len() < s.len() {
        return invalid("observation shorter than the source");
    }
    if fft_len < y_hat.len() || num_taps > fft_len {
        return invalid(format!(
            "fft length {fft_len} must cover the observation ({}) and the taps",
            y_hat.len()
        ));
    }
    check_finite("source", s)?;
    check_finite("observation", y_hat)?;
    let mut fft = RealFft::new(fft_len)?;
    let bins = fft.bins();
    let mut sp = vec![Complex64::default(); bins];
    let mut yp = vec![Complex64::default(); bins];
    fft.forward(s, &mut sp);
    fft.forward(y_hat, &mut yp);

    let peak = sp.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if peak == 0.0 {
        return invalid("source has no spectral energy");
    }
    let floor = SPECTRAL_FLOOR * peak;
    let mut floored = 0;
    let s_reg: Vec<Complex64> = sp
        .iter()
        .map(|v| {
            let m = v.norm();
            if m >= floor {
                *v
            } else {
                floored += 1;
                if m == 0.0 {
                    Complex64::new(floor, 0.0)
                } else {
                    v * (floor / m)
                }
            }
        })
        .collect();
    if floored as f64 > MAX_FLOORED_FRACTION * bins as f64 {
        return Err(Error::IllConditioned {
            floored,
            total: bins,
        });
    }

    let h_noisy: Vec<Complex64> = yp.iter().zip(&s_reg).map(|(y, s)| y / s).collect();
    let mut hn = vec![0.0; fft_len];
    fft.inverse(&h_noisy, &mut hn);

    let seg_len = (fft_len / 10).max(1);
    let tail = &hn[fft_len - seg_len..];
    let mut tail_spec = vec![Complex64::default(); bins];
    fft.forward(tail, &mut tail_spec);
    let comp = (fft_len as f64 / seg_len as f64).sqrt();
    // |N / S| in the deconvolved domain and |N| itself.
    let noise_over_s: Vec<f64> = tail_spec.iter().map(|v| v.norm() * comp).collect();
    let noise_amplitude: Vec<f64> = noise_over_s
        .iter()
        .zip(&sp)
        .map(|(e, s)| e * s.norm())
        .collect();

    let cleaned: Vec<Complex64> = h_noisy
        .iter()
        .zip(&noise_over_s)
        .map(|(h, e)| {
            let p = h.norm_sqr();
            let d = p + e * e;
            if d > 0.0 {
                h * (p / d)
            } else {
                Complex64::default()
            }
        })
        .collect();
    let mut out = vec![0.0; fft_len];
    fft.inverse(&cleaned, &mut out);
    out.truncate(num_taps);
    Ok(WienerEstimate {
        taps: out,
        noise_amplitude,
        floored_bins: floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlmsConfig {
    pub filter_len: usize,
    pub step_size: f64,
    pub regularization: f64,
}

impl NlmsConfig {
    pub fn new(filter_len: usize) -> Self {
        Self {
            filter_len,
            step_size: 0.5,
            regularization: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 {
            return invalid("NLMS filter length must be positive");
        }
        if !(self.step_size > 0.0 && self.step_size < 2.0) {
            return invalid(format!("NLMS step size {} outside (0, 2)", self.step_size));
        }
        if self.regularization.is_nan() || self.regularization <= 0.0 {
            return invalid("NLMS regularization must be positive");
        }
        Ok(())
    }
}

/// Weight norm beyond which NLMS is declared divergent.
pub const NLMS_DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct NlmsRun {
    pub weights: Vec<f64>,
    /// A-priori error `e(t) = y(t) - w^T x(t)` per sample.
    pub errors: Vec<f64>,
}

/// Normalized LMS identification of the filter mapping `s` to `y_hat`:
/// `w += mu e(t) x(t) / (delta + |x(t)|^2)`, starting from zero weights.
pub fn nlms_run(s: &[f64], y_hat: &[f64], cfg: &NlmsConfig) -> Result<NlmsRun> {
    cfg.validate()?;
    check_finite("source", s)?;
    check_finite("observation", y_hat)?;
    let n = cfg.filter_len;
    let mut w = vec![0.0; n];
    // Input history doubled so the newest-first window is always contiguous.
    let mut hist = vec![0.0; 2 * n];
    let mut pos = 0usize;
    let mut power = 0.0f64;
    let mut errors = Vec::with_capacity(y_hat.len());
    for (t, &d) in y_hat.iter().enumerate() {
        let x_new = s.get(t).copied().unwrap_or(0.0);
        pos = if pos == 0 { n - 1 } else { pos - 1 };
        let x_old = hist[pos];
        hist[pos] = x_new;
        hist[pos + n] = x_new;
        power += x_new * x_new - x_old * x_old;
        if t % 4096 == 0 {
            power = hist[pos..pos + n].iter().map(|v| v * v).sum();
        }
        let x = &hist[pos..pos + n];
        let y: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let e = d - y;
        errors.push(e);
        let k = cfg.step_size * e / (cfg.regularization + power.max(0.0));
        w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += k * xi);
        if t % 256 == 0 || t + 1 == y_hat.len() {
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > NLMS_DIVERGENCE_NORM {
                return Err(Error::Diverged { step: t });
            }
        }
    }
    Ok(NlmsRun { weights: w, errors })
}

pub fn nlms_estimate(s: &[f64], y_hat: &[f64], cfg: &NlmsConfig) -> Result<Vec<f64>> {
    Ok(nlms_run(s, y_hat, cfg)?.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{convolve_slices, log_sine_sweep, sdr_db};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n_az: usize, els: &[f64]) -> MeasuredIrSet {
        let mut irs = Vec::new();
        let mut angles = Vec::new();
        for &el in els {
            for i in 0..n_az {
                let a = SphereAngle::new(360.0 * i as f64 / n_az as f64, el);
                let v = irs.len() as f64;
                irs.push(ImpulseResponse::new(a.to_position(), 48_000, vec![vec![v, 2.0 * v]]).unwrap());
                angles.push(a);
            }
        }
        MeasuredIrSet::new(irs, Some(angles)).unwrap()
    }

    #[test]
    fn nearest_neighbor_examples() {
        let set = grid(4, &[0.0]);
        let q = set.get(2).position;
        assert_eq!(nearest_neighbor_ir(&set, q).unwrap(), *set.get(2));
        // Halfway between azimuth 0 and 90: equidistant, lower index wins.
        let q = SphereAngle::new(45.0, 0.0).to_position();
        assert_eq!(nearest_index(&set, q).unwrap(), 0);
        let empty = MeasuredIrSet::new(vec![], None).unwrap();
        assert!(nearest_neighbor_ir(&empty, q).is_err());
    }

    #[test]
    fn nearest_neighbor_matches_scan() {
        let set = grid(7, &[-40.0, 10.0, 50.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let q = SphereAngle::new(rng.gen_range(0.0..360.0), rng.gen_range(-90.0..90.0)).to_position();
            let d: Vec<f64> = set
                .positions()
                .iter()
                .map(|p| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum())
                .collect();
            let best = (0..d.len()).fold(0, |b, i| if d[i] < d[b] { i } else { b });
            assert_eq!(nearest_index(&set, q).unwrap(), best);
        }
    }

    #[test]
    fn bilinear_examples() {
        let set = grid(4, &[-30.0, 30.0]);
        let node = bilinear_ir(&set, SphereAngle::new(90.0, 30.0)).unwrap();
        assert_eq!(node.taps(), set.get(5).taps());
        let center = bilinear_ir(&set, SphereAngle::new(45.0, 0.0)).unwrap();
        let expect = (0.0 + 1.0 + 4.0 + 5.0) / 4.0;
        assert!((center.channel(0)[0] - expect).abs() < 1e-12);
        // Wrap between azimuth 270 and 0.
        let wrap = bilinear_ir(&set, SphereAngle::new(315.0, -30.0)).unwrap();
        assert!((wrap.channel(0)[0] - 1.5).abs() < 1e-12);
        assert!(bilinear_ir(&set, SphereAngle::new(0.0, 45.0)).is_err());
        let no_grid = MeasuredIrSet::new(set.irs().to_vec(), None).unwrap();
        assert!(bilinear_ir(&no_grid, SphereAngle::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn bilinear_weights_formula() {
        let set = grid(6, &[-50.0, -10.0, 30.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let az = rng.gen_range(0.0..360.0);
            let el = rng.gen_range(-50.0..30.0);
            let w = bilinear_weights(&set, SphereAngle::new(az, el)).unwrap();
            let total: f64 = w.iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|x| (0.0..=1.0).contains(&x.1)));
            // Direct cell formula.
            let (ia, fa) = ((az / 60.0).floor() as usize, (az / 60.0).fract());
            let ring = if el < -10.0 { 0 } else { 1 };
            let lo = [-50.0, -10.0, 30.0][ring];
            let fe = (el - lo) / 40.0;
            let idx = |r: usize, a: usize| r * 6 + a % 6;
            let expect = [
                (idx(ring, ia), (1.0 - fa) * (1.0 - fe)),
                (idx(ring, ia + 1), fa * (1.0 - fe)),
                (idx(ring + 1, ia), (1.0 - fa) * fe),
                (idx(ring + 1, ia + 1), fa * fe),
            ];
            for (i, we) in expect {
                let got: f64 = w.iter().filter(|x| x.0 == i).map(|x| x.1).sum();
                assert!((got - we).abs() < 1e-9, "{az} {el}");
            }
        }
    }

    fn random_filter(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn wiener_noiseless_recovery() {
        let s = log_sine_sweep(20.0, 20_000.0, 0.25, 48_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_filter(&mut rng, 64);
        let y = convolve_slices(s.samples(), &h);
        let est = wiener_estimate(s.samples(), &y, 64, 16_384).unwrap();
        let sdr = sdr_db(&h, &est.taps).unwrap();
        assert!(sdr >= 40.0, "sdr {sdr}");
    }

    #[test]
    fn wiener_pure_noise_is_suppressed() {
        let s = log_sine_sweep(20.0, 20_000.0, 0.25, 48_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_filter(&mut rng, 64);
        let clean = convolve_slices(s.samples(), &h);
        let noise: Vec<f64> = (0..clean.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let est = wiener_estimate(s.samples(), &noise, 64, 16_384).unwrap();
        let e_est: f64 = est.taps.iter().map(|v| v * v).sum();
        let e_target: f64 = noise.iter().map(|v| v * v).sum();
        assert!(e_est <= 0.01 * e_target, "{e_est} vs {e_target}");
    }

    #[test]
    fn wiener_rejects_silent_source() {
        let s = vec![0.0; 100];
        assert!(wiener_estimate(&s, &vec![0.0; 120], 8, 128).is_err());
        let mut s = vec![0.0; 100];
        s[0] = 1.0;
        assert!(wiener_estimate(&s, &vec![0.0; 80], 8, 128).is_err());
    }

    #[test]
    fn nlms_clean_identification() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_filter(&mut rng, 64);
        let x: Vec<f64> = (0..50 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = convolve_slices(&x, &h);
        let w = nlms_estimate(&x, &y[..x.len()], &NlmsConfig::new(64)).unwrap();
        assert!(sdr_db(&h, &w).unwrap() >= 30.0);
    }

    #[test]
    fn nlms_tiny_step_stays_at_init_and_error_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_filter(&mut rng, 16);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = convolve_slices(&x, &h);
        let cfg = NlmsConfig {
            step_size: 1e-12,
            ..NlmsConfig::new(16)
        };
        let w = nlms_estimate(&x, &y, &cfg).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-9));

        let run = nlms_run(&x, &y[..4000], &NlmsConfig::new(16)).unwrap();
        let p = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
        assert!(p(&run.errors[3600..]) < p(&run.errors[..400]));
        let bad = NlmsConfig {
            step_size: 2.0,
            ..NlmsConfig::new(16)
        };
        assert!(nlms_estimate(&x, &y, &bad).is_err());
    }
}
