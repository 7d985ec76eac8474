//! Experiment harness: SDR against SNR for every estimator, and interpolation
//! quality against the number of measured positions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{bilinear_ir, nearest_neighbor_ir, nlms_estimate, wiener_estimate, NlmsConfig};
use crate::dsp::{log_sine_sweep, sdr_db, ImpulseResponse, Signal};
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseModelKind;
use crate::synth::{
    frame_aligned_sweep_len, make_filter_field, mix_seed, white_noise, FilterFieldSpec, NoiseKind, NoiseSpec,
};
use crate::train::{
    cosine_similarity, eval_with, ir_sdr_db, mean_std, train, EvalReport, LossKind, LrSchedule, TrainConfig,
    TrainingSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wiener,
    Nlms,
    MlpL2,
    MlpNoiseRobust,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Wiener, Method::Nlms, Method::MlpL2, Method::MlpNoiseRobust];

    pub fn name(self) -> &'static str {
        match self {
            Self::Wiener => "wiener",
            Self::Nlms => "nlms",
            Self::MlpL2 => "mlp_l2",
            Self::MlpNoiseRobust => "mlp_noise_robust",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMethod {
    Mlp,
    Nn,
    Bilinear,
}

impl InterpMethod {
    pub const ALL: [InterpMethod; 3] = [InterpMethod::Mlp, InterpMethod::Nn, InterpMethod::Bilinear];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Nn => "nn",
            Self::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown interpolation method '{s}'")))
    }
}

/// Excitation used by the sweep-based methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub f0_hz: f64,
    pub f1_hz: f64,
    /// Length in noise/loss frames: the filtered sweep spans exactly this many.
    pub frames: usize,
    pub frame_len: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            f0_hz: 20.0,
            f1_hz: 23_500.0,
            frames: 12,
            frame_len: 2048,
        }
    }
}

impl SweepSpec {
    pub fn signal(&self, taps: usize, sample_rate: u32) -> Result<Signal> {
        if self.frames * self.frame_len <= taps {
            return invalid("sweep must be longer than the filters");
        }
        let n = frame_aligned_sweep_len(self.frames, self.frame_len, taps);
        log_sine_sweep(self.f0_hz, self.f1_hz, n as f64 / sample_rate as f64, sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStudyConfig {
    pub field: FilterFieldSpec,
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    pub noise_kind: NoiseKind,
    pub sweep: SweepSpec,
    /// Base configuration of both MLP methods (loss and noise model are set per method).
    pub train: TrainConfig,
    pub nlms_step_size: f64,
    pub nlms_regularization: f64,
    /// White-noise excitation length for NLMS.
    pub nlms_len: usize,
    pub seed: u64,
}

impl Default for NoiseStudyConfig {
    fn default() -> Self {
        Self {
            field: FilterFieldSpec {
                azimuth_count: 4,
                elevation_count: 4,
                ..Default::default()
            },
            snr_db: vec![0.0, -10.0, -20.0, -30.0],
            methods: Method::ALL.to_vec(),
            noise_kind: NoiseKind::Independent,
            sweep: SweepSpec::default(),
            train: TrainConfig {
                steps: 6000,
                learning_rate: 1e-3,
                schedule: LrSchedule::Cosine { final_factor: 0.05 },
                ..Default::default()
            },
            nlms_step_size: 0.1,
            nlms_regularization: 1e-6,
            nlms_len: 12 * 2048,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub snr_db: f64,
    pub method: Method,
    pub mean_sdr_db: f64,
    pub std_sdr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub snr_db: f64,
    /// Mean over positions of the cosine similarity between the learned and
    /// the injected noise amplitude spectra.
    pub noise_cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyResult {
    pub rows: Vec<StudyRow>,
    pub fidelity: Vec<FidelityRow>,
}

impl NoiseStudyResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,method,mean_sdr_db,std_sdr_db\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", r.snr_db, r.method, r.mean_sdr_db, r.std_sdr_db));
        }
        out
    }

    pub fn mean(&self, snr_db: f64, method: Method) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.method == method)
            .map(|r| r.mean_sdr_db)
    }
}

fn per_channel_sdr(truth: &ImpulseResponse, estimates: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (c, est) in estimates.iter().enumerate() {
        total += sdr_db(truth.channel(c), est)?;
    }
    Ok(total / estimates.len() as f64)
}

fn row(snr_db: f64, method: Method, sdrs: &[f64]) -> StudyRow {
    let (mean, std) = mean_std(sdrs);
    StudyRow {
        snr_db,
        method,
        mean_sdr_db: mean,
        std_sdr_db: std,
    }
}

/// Runs every method at every SNR on one synthetic field.
pub fn noise_sweep_study(cfg: &NoiseStudyConfig) -> Result<NoiseStudyResult> {
    if cfg.snr_db.is_empty() || cfg.methods.is_empty() {
        return invalid("noise study needs at least one SNR and one method");
    }
    let field = make_filter_field(&cfg.field)?;
    let taps = cfg.field.taps;
    let rate = cfg.field.sample_rate;
    let sweep = cfg.sweep.signal(taps, rate)?;
    let mut rows = Vec::new();
    let mut fidelity = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let noise = NoiseSpec {
            frame_len: cfg.sweep.frame_len,
            sample_rate: rate,
            ..NoiseSpec::new(cfg.noise_kind, snr, mix_seed(cfg.seed, si as u64))
        };
        let data = TrainingSet::noisy(&field, &sweep, &noise)?;
        for &method in &cfg.methods {
            let sdrs = match method {
                Method::Wiener => {
                    let fft_len = data.targets[0][0].len().next_power_of_two();
                    field
                        .irs()
                        .iter()
                        .zip(&data.targets)
                        .map(|(ir, ys)| {
                            let est = ys
                                .iter()
                                .map(|y| Ok(wiener_estimate(sweep.samples(), y, taps, fft_len)?.taps))
                                .collect::<Result<Vec<_>>>()?;
                            per_channel_sdr(ir, &est)
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                Method::Nlms => {
                    let excitation = Signal::new(rate, white_noise(cfg.nlms_len, mix_seed(noise.seed, 0x776e)))?;
                    let nlms_noise = NoiseSpec {
                        seed: mix_seed(noise.seed, 0x6e6c),
                        ..noise.clone()
                    };
                    let observed = TrainingSet::noisy(&field, &excitation, &nlms_noise)?;
                    let nlms = NlmsConfig {
                        filter_len: taps,
                        step_size: cfg.nlms_step_size,
                        regularization: cfg.nlms_regularization,
                    };
                    field
                        .irs()
                        .iter()
                        .zip(&observed.targets)
                        .map(|(ir, ys)| {
                            let est = ys
                                .iter()
                                .map(|y| nlms_estimate(excitation.samples(), y, &nlms))
                                .collect::<Result<Vec<_>>>()?;
                            per_channel_sdr(ir, &est)
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                Method::MlpL2 | Method::MlpNoiseRobust => {
                    let mut tc = cfg.train.clone();
                    tc.spectral.frame_len = cfg.sweep.frame_len;
                    tc.spectral.hop = cfg.sweep.frame_len;
                    tc.spectral.fft_len = cfg.sweep.frame_len;
                    if method == Method::MlpL2 {
                        tc.loss = LossKind::L2;
                        tc.noise_model = NoiseModelKind::None;
                    } else {
                        tc.loss = LossKind::NoiseRobust;
                        tc.noise_model = match cfg.noise_kind {
                            NoiseKind::Independent => NoiseModelKind::Static,
                            NoiseKind::Dependent => NoiseModelKind::Positional,
                        };
                    }
                    let out = train(&data, None, &tc)?;
                    if let Some(n) = &out.noise {
                        let mut cos = 0.0;
                        for (p, a) in data.positions.iter().zip(&data.noise_amplitudes) {
                            cos += cosine_similarity(&n.noise_amplitude(Some(*p))?, a);
                        }
                        fidelity.push(FidelityRow {
                            snr_db: snr,
                            noise_cosine: cos / data.len() as f64,
                        });
                    }
                    let idx: Vec<usize> = (0..field.len()).collect();
                    eval_with(&field, &idx, |ir| out.model.predict_ir(ir.position))?.sdr_db
                }
            };
            rows.push(row(snr, method, &sdrs));
        }
    }
    Ok(NoiseStudyResult { rows, fidelity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpStudyConfig {
    pub field: FilterFieldSpec,
    pub train_counts: Vec<usize>,
    pub methods: Vec<InterpMethod>,
    pub sweep: SweepSpec,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for InterpStudyConfig {
    fn default() -> Self {
        Self {
            field: FilterFieldSpec::default(),
            train_counts: vec![72, 144, 180, 216],
            methods: InterpMethod::ALL.to_vec(),
            sweep: SweepSpec::default(),
            train: TrainConfig {
                steps: 8000,
                learning_rate: 1e-3,
                schedule: LrSchedule::Cosine { final_factor: 0.05 },
                num_octaves: 4,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpRow {
    pub train_count: usize,
    pub method: InterpMethod,
    pub mean_sdr_db: f64,
    pub std_sdr_db: f64,
}

pub fn interp_csv(rows: &[InterpRow]) -> String {
    let mut out = String::from("train_count,method,mean_sdr_db,std_sdr_db\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.train_count, r.method, r.mean_sdr_db, r.std_sdr_db));
    }
    out
}

/// Picks `count` nodes from `rings` (each listed in azimuth order): rings get
/// a share proportional to their size (largest remainder, ties broken by the
/// seeded shuffle) and each share is spread uniformly over the ring from a
/// seeded offset.
fn pick_stratified(rings: &[Vec<usize>], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let total: usize = rings.iter().map(Vec::len).sum();
    if count > total {
        return invalid(format!("training count {count} exceeds the {total} available nodes"));
    }
    if count < rings.len() {
        return invalid("training count must cover every elevation ring");
    }
    let exact: Vec<f64> = rings.iter().map(|r| count as f64 * r.len() as f64 / total as f64).collect();
    let mut share: Vec<usize> = exact.iter().zip(rings).map(|(e, r)| (e.floor() as usize).clamp(1, r.len())).collect();
    let mut order: Vec<usize> = (0..rings.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], rng);
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    while share.iter().sum::<usize>() < count {
        let r = *order
            .iter()
            .find(|&&r| share[r] < rings[r].len())
            .expect("count does not exceed the node total");
        share[r] += 1;
        order.rotate_left(1);
    }
    while share.iter().sum::<usize>() > count {
        let r = (0..rings.len()).filter(|&r| share[r] > 1).max_by_key(|&r| share[r]).expect("count covers every ring");
        share[r] -= 1;
    }
    let mut out = Vec::with_capacity(count);
    for (ring, &k) in rings.iter().zip(&share) {
        let n = ring.len();
        let offset: f64 = rng.gen_range(0.0..1.0);
        let mut picked: Vec<usize> = (0..k)
            .map(|i| (((i as f64 + offset) * n as f64 / k as f64).floor() as usize) % n)
            .collect();
        picked.sort_unstable();
        picked.dedup();
        out.extend(picked.into_iter().map(|i| ring[i]));
    }
    out.sort_unstable();
    Ok(out)
}

fn grid_rings(azimuth_count: usize, elevation_count: usize) -> Vec<Vec<usize>> {
    (0..elevation_count)
        .map(|e| (0..azimuth_count).map(|a| e * azimuth_count + a).collect())
        .collect()
}

/// Stratified `count`-node subset of an elevation-major grid.
pub fn stratified_subset(azimuth_count: usize, elevation_count: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pick_stratified(&grid_rings(azimuth_count, elevation_count), count, &mut rng)
}

/// Training subsets for every count plus the shared held-out set. The densest
/// subset is drawn from the grid; smaller ones are stratified draws from the
/// densest, so every size is scored on the nodes the densest never sees. When
/// the densest subset is the whole grid, scoring falls back to training nodes.
pub fn interpolation_splits(
    azimuth_count: usize,
    elevation_count: usize,
    counts: &[usize],
    seed: u64,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let Some(&densest) = counts.iter().max() else {
        return invalid("no training counts");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = grid_rings(azimuth_count, elevation_count);
    let dense = pick_stratified(&grid, densest, &mut rng)?;
    let dense_rings: Vec<Vec<usize>> = grid
        .iter()
        .map(|ring| ring.iter().copied().filter(|i| dense.binary_search(i).is_ok()).collect())
        .collect();
    let subsets = counts
        .iter()
        .map(|&c| {
            if c == densest {
                Ok(dense.clone())
            } else {
                pick_stratified(&dense_rings, c, &mut rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut held: Vec<usize> = (0..azimuth_count * elevation_count)
        .filter(|i| dense.binary_search(i).is_err())
        .collect();
    if held.is_empty() {
        held = dense;
    }
    Ok((subsets, held))
}

pub fn interpolation_study(cfg: &InterpStudyConfig) -> Result<Vec<InterpRow>> {
    if cfg.train_counts.is_empty() || cfg.methods.is_empty() {
        return invalid("interpolation study needs training counts and methods");
    }
    let field = make_filter_field(&cfg.field)?;
    let (na, ne) = (cfg.field.azimuth_count, cfg.field.elevation_count);
    let sweep = cfg.sweep.signal(cfg.field.taps, cfg.field.sample_rate)?;
    let full = TrainingSet::clean(&field, &sweep)?;
    let mut rows = Vec::new();
    let (subsets, held) = interpolation_splits(na, ne, &cfg.train_counts, cfg.seed)?;
    for (&count, train_idx) in cfg.train_counts.iter().zip(&subsets) {
        let measured = field.subset(train_idx)?;
        for &method in &cfg.methods {
            let report = match method {
                InterpMethod::Nn => eval_with(&field, &held, |ir| nearest_neighbor_ir(&measured, ir.position))?,
                InterpMethod::Bilinear => {
                    let angles = field.angles().expect("synthetic grid carries its angles");
                    let sdrs = held
                        .iter()
                        .map(|&i| ir_sdr_db(field.get(i), &bilinear_ir(&measured, angles[i])?))
                        .collect::<Result<Vec<_>>>()?;
                    EvalReport::from_sdrs(held.clone(), sdrs)?
                }
                InterpMethod::Mlp => {
                    let data = full.subset(train_idx);
                    let mut tc = cfg.train.clone();
                    tc.loss = LossKind::L2;
                    tc.noise_model = NoiseModelKind::None;
                    tc.seed = mix_seed(cfg.seed, 0x6d6c);
                    let out = train(&data, None, &tc)?;
                    eval_with(&field, &held, |ir| out.model.predict_ir(ir.position))?
                }
            };
            rows.push(InterpRow {
                train_count: count,
                method,
                mean_sdr_db: report.mean_sdr_db,
                std_sdr_db: report.std_sdr_db,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        for m in InterpMethod::ALL {
            assert_eq!(m.name().parse::<InterpMethod>().unwrap(), m);
        }
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn stratified_subset_counts_and_coverage() {
        for count in [12, 50, 144, 216, 288] {
            let s = stratified_subset(24, 12, count, 3).unwrap();
            assert_eq!(s.len(), count);
            let mut d = s.clone();
            d.dedup();
            assert_eq!(d.len(), count);
            for ring in 0..12 {
                assert!(s.iter().any(|i| i / 24 == ring));
            }
        }
        assert!(stratified_subset(24, 12, 289, 0).is_err());
        assert!(stratified_subset(24, 12, 11, 0).is_err());
        assert_eq!(stratified_subset(4, 2, 8, 1).unwrap(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn splits_share_one_held_out_set() {
        let counts = [72, 144, 180, 216];
        let (subsets, held) = interpolation_splits(24, 12, &counts, 9).unwrap();
        assert_eq!(held.len(), 288 - 216);
        for (s, c) in subsets.iter().zip(counts) {
            assert_eq!(s.len(), c);
            assert!(s.iter().all(|i| subsets[3].contains(i)));
            assert!(s.iter().all(|i| !held.contains(i)));
        }
        let (all, held) = interpolation_splits(4, 2, &[4, 8], 0).unwrap();
        assert_eq!(held, all[1]);
    }

    #[test]
    fn sweep_spans_whole_frames() {
        let s = SweepSpec::default().signal(400, 48_000).unwrap();
        assert_eq!((s.len() + 399) % 2048, 0);
    }
}
