//! Training loops for the IR-MLP and SDR evaluation.
//!
//! Each step samples whole positions, predicts all taps, and scores the
//! prediction through the source convolution. The waveform objective uses the
//! Gram form `|y|^2 - 2 h.b + h'Ah` (with `b = corr(y, s)` and `A` the source
//! autocorrelation Toeplitz matrix), which is exactly `|y - s*h|^2` but costs
//! `O(T^2)` per channel instead of a long convolution.
//!
//! Tap gradients can be preconditioned with `(A + lambda I)^-1` before they
//! enter the network. A sweep concentrates its energy at low frequencies, so
//! without it the high-frequency part of a filter is fitted orders of magnitude
//! more slowly than the rest. The preconditioner changes the descent direction
//! only; losses and reported gradients are unaffected.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::MeasuredIrSet;
use crate::dsp::{sdr_db, ImpulseResponse, Signal, SourceConvolver};
use crate::error::{check_dim, invalid, Error, Result};
use crate::losses::{SpectralLoss, SpectralLossConfig};
use crate::nn::{self, AdamConfig, AdamState, EncoderConfig, IrMlp};
use crate::noise::{NoiseModel, NoiseModelKind};
use crate::synth::{assemble_target, mix_seed, raw_noise, total_energy, NoiseKind, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L2,
    NoiseRobust,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to `base * final_factor` at the last step.
    Cosine { final_factor: f64 },
}

impl LrSchedule {
    pub fn factor(&self, step: usize, steps: usize) -> f64 {
        match *self {
            Self::Constant => 1.0,
            Self::Cosine { final_factor } => {
                let p = if steps <= 1 { 0.0 } else { step as f64 / (steps - 1) as f64 };
                final_factor + (1.0 - final_factor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub positions_per_batch: usize,
    pub learning_rate: f64,
    /// Adam rate of the noise model; `None` picks the per-kind default.
    pub noise_learning_rate: Option<f64>,
    pub schedule: LrSchedule,
    pub loss: LossKind,
    pub noise_model: NoiseModelKind,
    pub seed: u64,
    /// Evaluate SDR every this many steps (0 disables periodic evaluation).
    pub eval_every: usize,
    pub hidden: usize,
    pub layers: usize,
    pub num_octaves: usize,
    pub noise_octaves: usize,
    pub spectral: SpectralLossConfig,
    /// `lambda / r[0]` of the tap-gradient preconditioner; `None` disables it.
    pub precondition: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            positions_per_batch: 1,
            learning_rate: AdamConfig::default().learning_rate,
            noise_learning_rate: None,
            schedule: LrSchedule::Constant,
            loss: LossKind::L2,
            noise_model: NoiseModelKind::None,
            seed: 0,
            eval_every: 0,
            hidden: 128,
            layers: 6,
            num_octaves: 10,
            noise_octaves: 4,
            spectral: SpectralLossConfig::default(),
            precondition: Some(1e-3),
        }
    }
}

impl TrainConfig {
    /// Static spectra are raw log-amplitudes and take a larger step than the
    /// positional MLP.
    pub fn noise_rate(&self) -> f64 {
        self.noise_learning_rate.unwrap_or(match self.noise_model {
            NoiseModelKind::Positional => 1e-3,
            _ => 1e-2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions_per_batch == 0 {
            return invalid("positions_per_batch must be at least 1");
        }
        if self.layers == 0 || self.hidden == 0 || self.num_octaves == 0 {
            return invalid("network needs layers, hidden units and octaves");
        }
        if !(self.learning_rate > 0.0 && self.noise_learning_rate.is_none_or(|r| r > 0.0)) {
            return invalid("learning rates must be positive");
        }
        if self.precondition.is_some_and(|l| l.is_nan() || l <= 0.0) {
            return invalid("preconditioner regularization must be positive");
        }
        match (self.loss, self.noise_model) {
            (LossKind::NoiseRobust, NoiseModelKind::None) => {
                invalid("noise_robust loss requires a static or positional noise model")
            }
            (LossKind::L2, k) if k != NoiseModelKind::None => {
                invalid("l2 loss does not use a noise model")
            }
            _ => self.spectral.validate(),
        }
    }
}

/// Noisy observations of a filter field under one source signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub source: Signal,
    pub positions: Vec<[f64; 3]>,
    /// `targets[position][channel]`, each `len(source) + taps - 1` samples.
    pub targets: Vec<Vec<Vec<f64>>>,
    pub num_taps: usize,
    /// Injected noise amplitude per position and frame bin (empty when clean).
    pub noise_amplitudes: Vec<Vec<f64>>,
}

impl TrainingSet {
    /// Noise-free targets `s * h` for every entry of `field`.
    pub fn clean(field: &MeasuredIrSet, source: &Signal) -> Result<Self> {
        let mut conv = convolver_for(field, source)?;
        let targets = field.irs().iter().map(|ir| clean_channels(&mut conv, ir)).collect();
        Ok(Self {
            source: source.clone(),
            positions: field.positions(),
            targets,
            num_taps: field.get(0).num_taps(),
            noise_amplitudes: Vec::new(),
        })
    }

    /// Noisy targets. Position-independent noise uses one gain for the whole
    /// set (so a single spectrum explains every position), reaching the target
    /// SNR on the total energy; position-dependent noise is scaled per position.
    pub fn noisy(field: &MeasuredIrSet, source: &Signal, noise: &NoiseSpec) -> Result<Self> {
        if source.sample_rate() != noise.sample_rate {
            return Err(Error::SampleRate(source.sample_rate(), noise.sample_rate));
        }
        let mut conv = convolver_for(field, source)?;
        let mut clean = Vec::with_capacity(field.len());
        let mut raw = Vec::with_capacity(field.len());
        for (i, ir) in field.irs().iter().enumerate() {
            let c = clean_channels(&mut conv, ir);
            raw.push(raw_noise(noise, ir.position, c[0].len(), ir.channels(), i as u64)?);
            clean.push(c);
        }
        let gains: Vec<f64> = match noise.kind {
            NoiseKind::Independent => {
                let ec: f64 = clean.iter().map(|c| total_energy(c)).sum();
                let en: f64 = raw.iter().map(|(_, n)| total_energy(n)).sum();
                vec![(ec / en / 10f64.powf(noise.target_snr_db / 10.0)).sqrt(); field.len()]
            }
            NoiseKind::Dependent => clean
                .iter()
                .zip(&raw)
                .map(|(c, (_, n))| {
                    (total_energy(c) / total_energy(n) / 10f64.powf(noise.target_snr_db / 10.0)).sqrt()
                })
                .collect(),
        };
        let mut targets = Vec::with_capacity(field.len());
        let mut noise_amplitudes = Vec::with_capacity(field.len());
        for ((c, (amp, n)), g) in clean.into_iter().zip(&raw).zip(gains) {
            let t = assemble_target(source.sample_rate(), c, n, amp, g)?;
            targets.push(t.observed.into_iter().map(Signal::into_samples).collect());
            noise_amplitudes.push(t.noise_amplitude);
        }
        Ok(Self {
            source: source.clone(),
            positions: field.positions(),
            targets,
            num_taps: field.get(0).num_taps(),
            noise_amplitudes,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            source: self.source.clone(),
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            num_taps: self.num_taps,
            noise_amplitudes: if self.noise_amplitudes.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.noise_amplitudes[i].clone()).collect()
            },
        }
    }
}

fn convolver_for(field: &MeasuredIrSet, source: &Signal) -> Result<SourceConvolver> {
    if field.is_empty() {
        return invalid("filter field is empty");
    }
    let rate = field.get(0).sample_rate;
    if rate != source.sample_rate() {
        return Err(Error::SampleRate(source.sample_rate(), rate));
    }
    SourceConvolver::new(source.samples(), field.get(0).num_taps())
}

fn clean_channels(conv: &mut SourceConvolver, ir: &ImpulseResponse) -> Vec<Vec<f64>> {
    ir.taps()
        .iter()
        .map(|h| {
            let mut y = vec![0.0; conv.output_len(h.len())];
            conv.convolve(h, &mut y);
            y
        })
        .collect()
}

/// Autocorrelation `r[l] = sum_n s[n] s[n + l]` for lags `0..lags`.
pub fn autocorrelation(s: &[f64], lags: usize) -> Vec<f64> {
    (0..lags)
        .map(|l| {
            if l >= s.len() {
                0.0
            } else {
                s[..s.len() - l].iter().zip(&s[l..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// `out = A h` with `A[j][k] = r[|j - k|]`.
fn toeplitz_mul(r: &[f64], h: &[f64], out: &mut [f64]) {
    let t = h.len();
    for (j, o) in out.iter_mut().enumerate().take(t) {
        let mut acc = 0.0;
        for (k, hk) in h.iter().enumerate() {
            acc += r[j.abs_diff(k)] * hk;
        }
        *o = acc;
    }
}

/// Cholesky factor of `A + lambda I` for the source autocorrelation matrix `A`.
pub struct Preconditioner {
    factor: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
}

impl Preconditioner {
    /// `relative` scales `lambda` by the zero-lag autocorrelation.
    pub fn new(autocorr: &[f64], relative: f64) -> Result<Self> {
        let t = autocorr.len();
        let lambda = relative * autocorr.first().copied().unwrap_or(0.0);
        let m = nalgebra::DMatrix::from_fn(t, t, |i, j| {
            autocorr[i.abs_diff(j)] + if i == j { lambda } else { 0.0 }
        });
        let factor = m
            .cholesky()
            .ok_or_else(|| Error::Invalid("source autocorrelation is not positive definite".into()))?;
        Ok(Self { factor })
    }

    pub fn apply(&self, g: &mut [f64]) {
        let mut v = nalgebra::DVector::from_column_slice(g);
        self.factor.solve_mut(&mut v);
        g.copy_from_slice(v.as_slice());
    }
}

/// Per-channel statistics for the Gram-form squared error.
struct GramTarget {
    energy: f64,
    cross: Vec<f64>,
}

/// Loss and gradient of one position, per channel, given predicted taps.
enum Objective {
    L2 {
        autocorr: Vec<f64>,
        grams: Vec<Vec<GramTarget>>,
    },
    Robust {
        conv: Box<SourceConvolver>,
        engine: Box<SpectralLoss>,
    },
}

impl Objective {
    fn new(data: &TrainingSet, loss: LossKind, spectral: SpectralLossConfig) -> Result<Self> {
        let t = data.num_taps;
        let mut conv = SourceConvolver::new(data.source.samples(), t)?;
        match loss {
            LossKind::L2 => {
                let grams = data
                    .targets
                    .iter()
                    .map(|chans| {
                        chans
                            .iter()
                            .map(|y| {
                                let mut cross = vec![0.0; t];
                                conv.correlate(y, &mut cross);
                                GramTarget {
                                    energy: crate::dsp::energy(y),
                                    cross,
                                }
                            })
                            .collect()
                    })
                    .collect();
                Ok(Self::L2 {
                    autocorr: autocorrelation(data.source.samples(), t),
                    grams,
                })
            }
            LossKind::NoiseRobust => Ok(Self::Robust {
                conv: Box::new(conv),
                engine: Box::new(SpectralLoss::new(spectral)?),
            }),
        }
    }

    /// Returns the loss summed over channels; writes `dL/dh` and adds `dL/d|N|`.
    fn evaluate(
        &mut self,
        data: &TrainingSet,
        index: usize,
        taps: &[Vec<f64>],
        noise_amp: Option<&[f64]>,
        grad_taps: &mut [Vec<f64>],
        grad_noise: &mut [f64],
    ) -> Result<f64> {
        let mut loss = 0.0;
        match self {
            Self::L2 { autocorr, grams } => {
                for ((h, g), gram) in taps.iter().zip(grad_taps.iter_mut()).zip(&grams[index]) {
                    toeplitz_mul(autocorr, h, g);
                    let mut hah = 0.0;
                    let mut hb = 0.0;
                    for ((gi, hi), bi) in g.iter_mut().zip(h).zip(&gram.cross) {
                        hah += hi * *gi;
                        hb += hi * bi;
                        *gi = 2.0 * (*gi - bi);
                    }
                    loss += (gram.energy - 2.0 * hb + hah).max(0.0);
                }
            }
            Self::Robust { conv, engine } => {
                let amp = noise_amp.expect("robust objective needs a noise spectrum");
                for ((h, g), y) in taps.iter().zip(grad_taps.iter_mut()).zip(&data.targets[index]) {
                    let mut pred = vec![0.0; y.len()];
                    conv.convolve(h, &mut pred);
                    let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
                    let mut grad_r = vec![0.0; r.len()];
                    loss += engine.evaluate(&r, amp, &mut grad_r, grad_noise, None)?.loss;
                    conv.correlate(&grad_r, g);
                    g.iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
        Ok(loss)
    }
}

/// Gradient buffers for one optimization step.
struct StepWork {
    grads: Vec<f64>,
    noise_grads: Vec<f64>,
    grad_taps: Vec<Vec<f64>>,
    grad_noise: Vec<f64>,
    upstream: Vec<f64>,
    precondition: Option<Preconditioner>,
}

impl StepWork {
    fn new(model: &IrMlp, noise: Option<&NoiseModel>, bins: usize) -> Self {
        let (t, c) = (model.num_taps, model.channels());
        Self {
            grads: vec![0.0; model.params.len()],
            noise_grads: vec![0.0; noise.map_or(0, |n| n.params().len())],
            grad_taps: vec![vec![0.0; t]; c],
            grad_noise: vec![0.0; bins],
            upstream: vec![0.0; t * c],
            precondition: None,
        }
    }

    fn clear(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.noise_grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Adds `scale` times the gradients of position `index` and returns its loss.
    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &mut self,
        objective: &mut Objective,
        model: &IrMlp,
        noise: Option<&NoiseModel>,
        data: &TrainingSet,
        features: &[f64],
        index: usize,
        scale: f64,
    ) -> Result<f64> {
        let channels = model.channels();
        let position = data.positions[index];
        let cache = nn::forward_batch(&model.params, features, model.num_taps)?;
        let taps = nn::deinterleave(cache.output(), channels);
        let amp = match noise {
            Some(n) => Some(n.noise_amplitude(Some(position))?),
            None => None,
        };
        self.grad_noise.iter_mut().for_each(|g| *g = 0.0);
        let loss = objective.evaluate(data, index, &taps, amp.as_deref(), &mut self.grad_taps, &mut self.grad_noise)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        if let Some(p) = &self.precondition {
            self.grad_taps.iter_mut().for_each(|g| p.apply(g));
        }
        for (c, g) in self.grad_taps.iter().enumerate() {
            for (i, v) in g.iter().enumerate() {
                self.upstream[i * channels + c] = v * scale;
            }
        }
        nn::backward_batch(&model.params, &cache, &self.upstream, &mut self.grads, None)?;
        if let Some(n) = noise {
            self.grad_noise.iter_mut().for_each(|g| *g *= scale);
            n.accumulate_grads(Some(position), &self.grad_noise, &mut self.noise_grads)?;
        }
        Ok(loss)
    }
}

/// Training objective and its gradients for the IR-MLP and the noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub mlp: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Loss summed over `indices` (and channels), with gradients, exactly as one
/// training step computes it.
pub fn batch_gradients(
    model: &IrMlp,
    noise: Option<&NoiseModel>,
    data: &TrainingSet,
    indices: &[usize],
    loss: LossKind,
    spectral: SpectralLossConfig,
) -> Result<Gradients> {
    if loss == LossKind::NoiseRobust && noise.is_none() {
        return invalid("noise_robust loss requires a noise model");
    }
    check_dim("IR-MLP taps", data.num_taps, model.num_taps)?;
    check_dim("IR-MLP channels", data.channels(), model.channels())?;
    let mut objective = Objective::new(data, loss, spectral)?;
    let mut work = StepWork::new(model, noise, spectral.bins());
    let mut total = 0.0;
    for &i in indices {
        let feats = model.feature_matrix(data.positions[i])?;
        total += work.accumulate(&mut objective, model, noise, data, &feats, i, 1.0)?;
    }
    Ok(Gradients {
        loss: total,
        mlp: work.grads,
        noise: work.noise_grads,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub eval_sdr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    /// Mean loss over a window of `width` entries starting at `start`.
    pub fn smoothed_loss(&self, start: usize, width: usize) -> Option<f64> {
        let end = (start + width).min(self.entries.len());
        if start >= end {
            return None;
        }
        Some(self.entries[start..end].iter().map(|e| e.loss).sum::<f64>() / (end - start) as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,eval_sdr_db\n");
        for e in &self.entries {
            let sdr = e.eval_sdr_db.map_or(String::new(), |v| format!("{v:.6}"));
            out.push_str(&format!("{},{:.9e},{}\n", e.step, e.loss, sdr));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: IrMlp,
    pub noise: Option<NoiseModel>,
    pub log: TrainLog,
}

/// Fits an IR-MLP to `data`. `truth` (same order as `data`) enables periodic
/// SDR evaluation.
pub fn train(data: &TrainingSet, truth: Option<&MeasuredIrSet>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return invalid("training set is empty");
    }
    if let Some(t) = truth {
        check_dim("truth set size", data.len(), t.len())?;
    }
    let channels = data.channels();
    let t = data.num_taps;
    let encoder = EncoderConfig::new(4, cfg.num_octaves);
    let mut model = IrMlp::init(encoder, cfg.hidden, cfg.layers, channels, t, cfg.seed)?;
    let mut noise = match cfg.noise_model {
        NoiseModelKind::None => None,
        NoiseModelKind::Static => Some(NoiseModel::new_static(cfg.spectral.bins())),
        NoiseModelKind::Positional => Some(NoiseModel::new_positional(
            cfg.spectral.bins(),
            cfg.noise_octaves,
            mix_seed(cfg.seed, 0x4e4f),
        )?),
    };
    let mut log = TrainLog::default();
    if cfg.steps == 0 {
        return Ok(TrainOutcome { model, noise, log });
    }

    let features = data
        .positions
        .iter()
        .map(|p| model.feature_matrix(*p))
        .collect::<Result<Vec<_>>>()?;
    let mut objective = Objective::new(data, cfg.loss, cfg.spectral)?;
    let mut adam = AdamState::new(model.params.len(), AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut noise_adam = noise.as_ref().map(|n| {
        AdamState::new(n.params().len(), AdamConfig {
            learning_rate: cfg.noise_rate(),
            ..AdamConfig::default()
        })
    });

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x7261));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut work = StepWork::new(&model, noise.as_ref(), cfg.spectral.bins());
    if let Some(rel) = cfg.precondition {
        work.precondition = Some(Preconditioner::new(&autocorrelation(data.source.samples(), t), rel)?);
    }
    let batch_scale = 1.0 / cfg.positions_per_batch as f64;

    for step in 0..cfg.steps {
        work.clear();
        let mut loss = 0.0;
        for _ in 0..cfg.positions_per_batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let index = order[cursor];
            cursor += 1;
            let l = work.accumulate(&mut objective, &model, noise.as_ref(), data, &features[index], index, batch_scale)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            loss += l * batch_scale;
        }
        let factor = cfg.schedule.factor(step, cfg.steps);
        adam.config.learning_rate = cfg.learning_rate * factor;
        adam.step(model.params.as_mut_slice(), &work.grads)
            .map_err(|_| Error::NonFiniteLoss { step })?;
        if let (Some(n), Some(state)) = (noise.as_mut(), noise_adam.as_mut()) {
            state.config.learning_rate = cfg.noise_rate() * factor;
            state
                .step(n.params_mut(), &work.noise_grads)
                .map_err(|_| Error::NonFiniteLoss { step })?;
        }
        let eval_sdr_db = match truth {
            Some(tr) if cfg.eval_every > 0 && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps) => {
                Some(eval_sdr(&model, tr, &(0..tr.len()).collect::<Vec<_>>())?.mean_sdr_db)
            }
            _ => None,
        };
        log.entries.push(LogEntry { step, loss, eval_sdr_db });
    }
    Ok(TrainOutcome { model, noise, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positions: Vec<usize>,
    pub sdr_db: Vec<f64>,
    pub mean_sdr_db: f64,
    pub median_sdr_db: f64,
    pub std_sdr_db: f64,
}

impl EvalReport {
    pub fn from_sdrs(positions: Vec<usize>, sdr_db: Vec<f64>) -> Result<Self> {
        if sdr_db.is_empty() {
            return invalid("no positions to evaluate");
        }
        let (mean, std) = mean_std(&sdr_db);
        let mut sorted = sdr_db.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(Self {
            positions,
            sdr_db,
            mean_sdr_db: mean,
            median_sdr_db: median,
            std_sdr_db: std,
        })
    }
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// SDR of each channel averaged in dB.
pub fn ir_sdr_db(truth: &ImpulseResponse, estimate: &ImpulseResponse) -> Result<f64> {
    check_dim("channels", truth.channels(), estimate.channels())?;
    let mut total = 0.0;
    for c in 0..truth.channels() {
        total += sdr_db(truth.channel(c), estimate.channel(c))?;
    }
    Ok(total / truth.channels() as f64)
}

/// Predicts the filter at each listed entry of `truth` and scores it.
pub fn eval_sdr(model: &IrMlp, truth: &MeasuredIrSet, positions: &[usize]) -> Result<EvalReport> {
    eval_with(truth, positions, |ir| model.predict_ir(ir.position))
}

/// Scores an arbitrary predictor on the listed entries of `truth`.
pub fn eval_with<F>(truth: &MeasuredIrSet, positions: &[usize], mut predict: F) -> Result<EvalReport>
where
    F: FnMut(&ImpulseResponse) -> Result<ImpulseResponse>,
{
    let sdrs = positions
        .iter()
        .map(|&i| {
            let ir = truth.get(i);
            ir_sdr_db(ir, &predict(ir)?)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_sdrs(positions.to_vec(), sdrs)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
