//! `irfield` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use irfield::baselines::{nlms_estimate, wiener_estimate, MeasuredIrSet, NlmsConfig};
use irfield::dsp::{sdr_db, Signal};
use irfield::gradcheck::grad_check_suite;
use irfield::model_io::{self, compression_report, load_model, save_model};
use irfield::noise::NoiseModelKind;
use irfield::render::{render, Trajectory, DEFAULT_CROSSFADE};
use irfield::studies::{
    interp_csv, interpolation_study, noise_sweep_study, InterpMethod, InterpStudyConfig, Method, NoiseStudyConfig,
    SweepSpec,
};
use irfield::synth::{make_filter_field, make_target, mix_seed, white_noise, FilterFieldSpec, NoiseKind, NoiseSpec};
use irfield::train::{eval_sdr, train, LossKind, LrSchedule, TrainConfig, TrainingSet};
use irfield::wav::{read_wav, write_wav, Audio};
use irfield::Error;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "irfield", version, about = "Neural impulse-response fields: training, baselines and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every random choice of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Export a synthetic filter field, its sweep and optional noisy observations.
    GenData(GenDataArgs),
    /// Train an IR-MLP on a synthetic field.
    Train(TrainArgs),
    /// Score a saved model against a synthetic field.
    Eval(EvalArgs),
    /// SDR against SNR for Wiener, NLMS and both MLP losses.
    NoiseStudy(NoiseStudyArgs),
    /// Held-out SDR against the number of measured positions.
    InterpStudy(InterpStudyArgs),
    /// Wiener deconvolution of one observation.
    Wiener(BaselineArgs),
    /// NLMS identification of one observation.
    Nlms(BaselineArgs),
    /// Compression and latency report of a saved model.
    Report(ReportArgs),
    /// Render a source along a trajectory with a saved model.
    Render(RenderArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Independent,
    Dependent,
}

impl From<KindArg> for NoiseKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Independent => NoiseKind::Independent,
            KindArg::Dependent => NoiseKind::Dependent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    L2,
    NoiseRobust,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseModelArg {
    None,
    Static,
    Positional,
}

#[derive(Args)]
struct FieldFlags {
    #[arg(long)]
    azimuths: Option<usize>,
    #[arg(long)]
    elevations: Option<usize>,
    #[arg(long)]
    taps: Option<usize>,
}

impl FieldFlags {
    fn apply(&self, f: &mut FilterFieldSpec) {
        if let Some(v) = self.azimuths {
            f.azimuth_count = v;
        }
        if let Some(v) = self.elevations {
            f.elevation_count = v;
        }
        if let Some(v) = self.taps {
            f.taps = v;
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    field: FieldFlags,
    /// Also export noisy observations at this SNR (dB).
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, value_enum)]
    noise_kind: Option<KindArg>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    field: FieldFlags,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, value_enum)]
    noise_model: Option<NoiseModelArg>,
    /// Train on noisy observations at this SNR (dB).
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, value_enum)]
    noise_kind: Option<KindArg>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    field: FieldFlags,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct NoiseStudyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated SNR list in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// `all` or a comma-separated subset of wiener, nlms, mlp_l2, mlp_noise_robust.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_enum)]
    noise_kind: Option<KindArg>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct InterpStudyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// `all` or a comma-separated subset of mlp, nn, bilinear.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: Common,
    /// Source WAV; with `--observed`, replaces the synthetic experiment.
    #[arg(long, requires = "observed")]
    source: Option<PathBuf>,
    /// Observation WAV, one estimate per channel.
    #[arg(long, requires = "source")]
    observed: Option<PathBuf>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, value_enum)]
    noise_kind: Option<KindArg>,
    /// Synthetic field position to identify.
    #[arg(long)]
    position: Option<usize>,
    /// NLMS step size.
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Positions of the stored field the model replaces.
    #[arg(long)]
    positions: Option<usize>,
    #[arg(long)]
    calls: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Mono (or mixed-down) source WAV.
    #[arg(long)]
    input: PathBuf,
    /// `time_s,x,y,z` CSV.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    frame_size: Option<usize>,
    #[arg(long)]
    crossfade: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    instances: Option<usize>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_) | Error::Dimension { .. } | Error::SampleRate(..) | Error::Format(_) => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Overlays the JSON file on the command's defaults, so nested objects only
/// need the keys they change. Tagged objects (with a `kind` key) are replaced whole.
fn load_config<T: DeserializeOwned + Serialize + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(p) = path else {
        return Ok(T::default());
    };
    let bad = |e: &dyn std::fmt::Display| Failure::Validation(format!("{}: {e}", p.display()));
    let text = fs::read_to_string(p).map_err(|e| bad(&e))?;
    let user: Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
    let mut merged = serde_json::to_value(T::default()).map_err(|e| Failure::Runtime(e.to_string()))?;
    overlay(&mut merged, user);
    serde_json::from_value(merged).map_err(|e| bad(&e))
}

fn overlay(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) if !u.contains_key("kind") => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn prepare_out(common: &Common) -> CliResult<&Path> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn write_json(path: &Path, value: &Value) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configs serialize")
}

fn parse_list<T>(spec: &str, all: &[T]) -> CliResult<Vec<T>>
where
    T: std::str::FromStr<Err = Error> + Copy,
{
    if spec == "all" {
        return Ok(all.to_vec());
    }
    spec.split(',')
        .map(|m| m.trim().replace('-', "_").parse::<T>().map_err(Failure::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSettings {
    kind: NoiseKind,
    snr_db: f64,
}

fn noise_settings(current: Option<NoiseSettings>, snr: Option<f64>, kind: Option<KindArg>) -> Option<NoiseSettings> {
    let mut n = current;
    if let Some(s) = snr {
        n = Some(NoiseSettings {
            kind: n.map_or(NoiseKind::Independent, |n| n.kind),
            snr_db: s,
        });
    }
    if let (Some(k), Some(n)) = (kind, n.as_mut()) {
        n.kind = k.into();
    }
    n
}

fn noise_spec(settings: NoiseSettings, sweep: &SweepSpec, field: &FilterFieldSpec, seed: u64) -> NoiseSpec {
    NoiseSpec {
        frame_len: sweep.frame_len,
        sample_rate: field.sample_rate,
        ..NoiseSpec::new(settings.kind, settings.snr_db, seed)
    }
}

fn small_field() -> FilterFieldSpec {
    FilterFieldSpec {
        azimuth_count: 4,
        elevation_count: 4,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenDataConfig {
    field: FilterFieldSpec,
    sweep: SweepSpec,
    noise: Option<NoiseSettings>,
    seed: u64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            field: small_field(),
            sweep: SweepSpec::default(),
            noise: None,
            seed: 0,
        }
    }
}

fn write_f32(path: &Path, blocks: impl Iterator<Item = f64>) -> CliResult {
    let bytes: Vec<u8> = blocks.flat_map(|v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> CliResult {
    let mut cfg: GenDataConfig = load_config(args.common.config.as_deref())?;
    args.field.apply(&mut cfg.field);
    if let Some(s) = args.common.seed {
        cfg.seed = s;
        cfg.field.seed = s;
    }
    cfg.noise = noise_settings(cfg.noise, args.snr, args.noise_kind);
    let out = prepare_out(&args.common)?;
    let field = make_filter_field(&cfg.field)?;
    model_io::write_dataset(&field, &out.join("taps.f32"), &out.join("positions.csv"))?;
    let sweep = cfg.sweep.signal(cfg.field.taps, cfg.field.sample_rate)?;
    write_wav(
        &out.join("sweep.wav"),
        &Audio {
            sample_rate: sweep.sample_rate(),
            channels: vec![sweep.samples().to_vec()],
        },
    )?;
    let mut summary = json!({
        "config": to_value(&cfg),
        "positions": field.len(),
        "channels": cfg.field.channels,
        "taps": cfg.field.taps,
        "sweep_len": sweep.len(),
    });
    if let Some(n) = cfg.noise {
        let data = TrainingSet::noisy(&field, &sweep, &noise_spec(n, &cfg.sweep, &cfg.field, cfg.seed))?;
        write_f32(&out.join("observed.f32"), data.targets.iter().flatten().flatten().copied())?;
        write_f32(&out.join("noise_amplitude.f32"), data.noise_amplitudes.iter().flatten().copied())?;
        summary["observed_len"] = json!(data.targets[0][0].len());
        summary["noise_bins"] = json!(data.noise_amplitudes[0].len());
    }
    write_json(&out.join("metrics.json"), &summary)?;
    println!("wrote {} positions to {}", field.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainCommandConfig {
    field: FilterFieldSpec,
    sweep: SweepSpec,
    noise: Option<NoiseSettings>,
    train: TrainConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            field: small_field(),
            sweep: SweepSpec::default(),
            noise: None,
            train: TrainConfig {
                steps: 2000,
                learning_rate: 1e-3,
                schedule: LrSchedule::Cosine { final_factor: 0.05 },
                ..Default::default()
            },
        }
    }
}

fn run_train(args: TrainArgs) -> CliResult {
    let mut cfg: TrainCommandConfig = load_config(args.common.config.as_deref())?;
    args.field.apply(&mut cfg.field);
    let t = &mut cfg.train;
    if let Some(s) = args.common.seed {
        t.seed = s;
    }
    if let Some(v) = args.steps {
        t.steps = v;
    }
    if let Some(v) = args.lr {
        t.learning_rate = v;
    }
    if let Some(v) = args.hidden {
        t.hidden = v;
    }
    if let Some(v) = args.layers {
        t.layers = v;
    }
    cfg.noise = noise_settings(cfg.noise, args.snr, args.noise_kind);
    match args.loss {
        Some(LossArg::L2) => {
            t.loss = LossKind::L2;
            t.noise_model = NoiseModelKind::None;
        }
        Some(LossArg::NoiseRobust) => {
            t.loss = LossKind::NoiseRobust;
            t.noise_model = match cfg.noise.map(|n| n.kind) {
                Some(NoiseKind::Dependent) => NoiseModelKind::Positional,
                _ => NoiseModelKind::Static,
            };
        }
        None => {}
    }
    if let Some(m) = args.noise_model {
        t.noise_model = match m {
            NoiseModelArg::None => NoiseModelKind::None,
            NoiseModelArg::Static => NoiseModelKind::Static,
            NoiseModelArg::Positional => NoiseModelKind::Positional,
        };
    }
    t.spectral.frame_len = cfg.sweep.frame_len;
    t.spectral.fft_len = cfg.sweep.frame_len;
    t.spectral.hop = cfg.sweep.frame_len;
    t.validate()?;

    let out = prepare_out(&args.common)?;
    let field = make_filter_field(&cfg.field)?;
    let sweep = cfg.sweep.signal(cfg.field.taps, cfg.field.sample_rate)?;
    let data = match cfg.noise {
        None => TrainingSet::clean(&field, &sweep)?,
        Some(n) => TrainingSet::noisy(&field, &sweep, &noise_spec(n, &cfg.sweep, &cfg.field, cfg.train.seed))?,
    };
    let start = Instant::now();
    let outcome = train(&data, Some(&field), &cfg.train)?;
    let train_s = start.elapsed().as_secs_f64();
    save_model(&outcome.model, outcome.noise.as_ref(), &out.join("model.irml"))?;
    fs::write(out.join("train_log.csv"), outcome.log.to_csv())?;
    let all: Vec<usize> = (0..field.len()).collect();
    let report = eval_sdr(&outcome.model, &field, &all)?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "config": to_value(&cfg),
            "param_count": model_io::model_param_count(&outcome.model, outcome.noise.as_ref()),
            "mean_sdr_db": report.mean_sdr_db,
            "median_sdr_db": report.median_sdr_db,
            "std_sdr_db": report.std_sdr_db,
            "timing": { "train_s": train_s },
        }),
    )?;
    println!("mean SDR {:.3} dB after {} steps", report.mean_sdr_db, cfg.train.steps);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FieldConfig {
    field: FilterFieldSpec,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { field: small_field() }
    }
}

fn run_eval(args: EvalArgs) -> CliResult {
    let mut cfg: FieldConfig = load_config(args.common.config.as_deref())?;
    args.field.apply(&mut cfg.field);
    if let Some(s) = args.common.seed {
        cfg.field.seed = s;
    }
    let model = load_model(&args.model)?.model;
    cfg.field.taps = model.num_taps;
    cfg.field.channels = model.channels();
    let out = prepare_out(&args.common)?;
    let field = make_filter_field(&cfg.field)?;
    let all: Vec<usize> = (0..field.len()).collect();
    let report = eval_sdr(&model, &field, &all)?;
    let mut csv = String::from("index,sdr_db\n");
    for (i, s) in report.positions.iter().zip(&report.sdr_db) {
        csv.push_str(&format!("{i},{s:.6}\n"));
    }
    fs::write(out.join("eval.csv"), csv)?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "config": to_value(&cfg),
            "model": args.model.display().to_string(),
            "mean_sdr_db": report.mean_sdr_db,
            "median_sdr_db": report.median_sdr_db,
            "std_sdr_db": report.std_sdr_db,
        }),
    )?;
    println!("mean SDR {:.3} dB over {} positions", report.mean_sdr_db, field.len());
    Ok(())
}

fn noise_study(args: NoiseStudyArgs) -> CliResult {
    let mut cfg: NoiseStudyConfig = load_config(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.snr {
        cfg.snr_db = v;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_list(m, &Method::ALL)?;
    }
    if let Some(k) = args.noise_kind {
        cfg.noise_kind = k.into();
    }
    if let Some(v) = args.steps {
        cfg.train.steps = v;
    }
    let out = prepare_out(&args.common)?;
    let start = Instant::now();
    let result = noise_sweep_study(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    fs::write(out.join("noise_study.csv"), result.to_csv())?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "config": to_value(&cfg),
            "rows": to_value(&result.rows),
            "noise_fidelity": to_value(&result.fidelity),
            "timing": { "total_s": elapsed },
        }),
    )?;
    print!("{}", result.to_csv());
    Ok(())
}

fn interp_study(args: InterpStudyArgs) -> CliResult {
    let mut cfg: InterpStudyConfig = load_config(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.counts {
        cfg.train_counts = v;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_list(m, &InterpMethod::ALL)?;
    }
    if let Some(v) = args.steps {
        cfg.train.steps = v;
    }
    let out = prepare_out(&args.common)?;
    let start = Instant::now();
    let rows = interpolation_study(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let csv = interp_csv(&rows);
    fs::write(out.join("interp_study.csv"), &csv)?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "config": to_value(&cfg),
            "rows": to_value(&rows),
            "timing": { "total_s": elapsed },
        }),
    )?;
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BaselineConfig {
    field: FilterFieldSpec,
    sweep: SweepSpec,
    noise: Option<NoiseSettings>,
    position: usize,
    /// Taps to estimate for WAV inputs.
    taps: usize,
    nlms: NlmsConfig,
    /// NLMS white-noise excitation length.
    excitation_len: usize,
    seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            field: small_field(),
            sweep: SweepSpec::default(),
            noise: None,
            position: 0,
            taps: 400,
            nlms: NlmsConfig {
                step_size: 0.1,
                ..NlmsConfig::new(400)
            },
            excitation_len: 12 * 2048,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Baseline {
    Wiener,
    Nlms,
}

fn estimate(which: Baseline, cfg: &BaselineConfig, s: &[f64], y: &[f64], taps: usize) -> CliResult<Vec<f64>> {
    Ok(match which {
        Baseline::Wiener => wiener_estimate(s, y, taps, y.len().next_power_of_two())?.taps,
        Baseline::Nlms => nlms_estimate(
            s,
            y,
            &NlmsConfig {
                filter_len: taps,
                ..cfg.nlms
            },
        )?,
    })
}

fn run_baseline(which: Baseline, args: BaselineArgs) -> CliResult {
    let mut cfg: BaselineConfig = load_config(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.taps {
        cfg.taps = v;
        cfg.field.taps = v;
    }
    if let Some(v) = args.position {
        cfg.position = v;
    }
    if let Some(v) = args.mu {
        cfg.nlms.step_size = v;
    }
    cfg.noise = noise_settings(cfg.noise, args.snr, args.noise_kind);
    let out = prepare_out(&args.common)?;

    let (sample_rate, estimates, sdrs) = if let (Some(src), Some(obs)) = (&args.source, &args.observed) {
        let s = read_wav(src)?;
        let y = read_wav(obs)?;
        if s.sample_rate != y.sample_rate {
            return Err(Error::SampleRate(s.sample_rate, y.sample_rate).into());
        }
        let s = s.mono();
        let est = y
            .channels
            .iter()
            .map(|ch| estimate(which, &cfg, &s, ch, cfg.taps))
            .collect::<CliResult<Vec<_>>>()?;
        (y.sample_rate, est, None)
    } else {
        let field = make_filter_field(&cfg.field)?;
        if cfg.position >= field.len() {
            return Err(Failure::Validation(format!("position {} outside the {}-node field", cfg.position, field.len())));
        }
        let ir = field.get(cfg.position);
        let rate = cfg.field.sample_rate;
        let source = match which {
            Baseline::Wiener => cfg.sweep.signal(cfg.field.taps, rate)?,
            Baseline::Nlms => Signal::new(rate, white_noise(cfg.excitation_len, mix_seed(cfg.seed, 0x776e)))?,
        };
        let observed: Vec<Vec<f64>> = match cfg.noise {
            Some(n) => make_target(&source, ir, &noise_spec(n, &cfg.sweep, &cfg.field, cfg.seed), ir.position, 0)?
                .observed
                .into_iter()
                .map(Signal::into_samples)
                .collect(),
            None => ir
                .taps()
                .iter()
                .map(|h| irfield::dsp::convolve_slices(source.samples(), h))
                .collect(),
        };
        let est = observed
            .iter()
            .map(|y| estimate(which, &cfg, source.samples(), y, cfg.field.taps))
            .collect::<CliResult<Vec<_>>>()?;
        let sdrs = est
            .iter()
            .enumerate()
            .map(|(c, e)| sdr_db(ir.channel(c), e))
            .collect::<Result<Vec<_>, _>>()?;
        (rate, est, Some(sdrs))
    };
    let name = if which == Baseline::Wiener { "wiener" } else { "nlms" };
    write_wav(
        &out.join(format!("{name}_estimate.wav")),
        &Audio {
            sample_rate,
            channels: estimates,
        },
    )?;
    let mut summary = json!({ "config": to_value(&cfg), "method": name });
    if let Some(s) = &sdrs {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        summary["sdr_db"] = json!(s);
        summary["mean_sdr_db"] = json!(mean);
        println!("{name}: mean SDR {mean:.3} dB");
    }
    write_json(&out.join("metrics.json"), &summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReportConfig {
    /// Size of the stored field the model replaces.
    positions: usize,
    channels: usize,
    taps: usize,
    /// Probe field; taps and channels follow the model.
    probes: FilterFieldSpec,
    timing_calls: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            positions: 9720,
            channels: 2,
            taps: 400,
            probes: small_field(),
            timing_calls: 100,
        }
    }
}

fn run_report(args: ReportArgs) -> CliResult {
    let mut cfg: ReportConfig = load_config(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.probes.seed = s;
    }
    if let Some(v) = args.positions {
        cfg.positions = v;
    }
    if let Some(v) = args.calls {
        cfg.timing_calls = v;
    }
    let model = load_model(&args.model)?.model;
    cfg.probes.taps = model.num_taps;
    cfg.probes.channels = model.channels();
    let out = prepare_out(&args.common)?;
    let probes: MeasuredIrSet = make_filter_field(&cfg.probes)?;
    let report = compression_report(&model, (cfg.positions, cfg.channels, cfg.taps), &probes, cfg.timing_calls)?;
    write_json(
        &out.join("report.json"),
        &json!({ "config": to_value(&cfg), "report": to_value(&report) }),
    )?;
    println!(
        "params {} / raw {} floats: compression {}; predict_ir median {:.3} ms",
        report.param_count, report.raw_float_count, report.compression_percent, report.timing.median_ms
    );
    Ok(())
}

fn run_render(args: RenderArgs) -> CliResult {
    let frame_size = args.frame_size.unwrap_or(512);
    let crossfade = args.crossfade.unwrap_or(DEFAULT_CROSSFADE);
    let model = load_model(&args.model)?.model;
    let audio = read_wav(&args.input)?;
    let text = fs::read_to_string(&args.trajectory)?;
    let trajectory = Trajectory::from_csv(&text)?;
    let out = prepare_out(&args.common)?;
    let rendered = render(&model, &audio.mono(), audio.sample_rate, &trajectory, frame_size, crossfade)?;
    write_wav(
        &out.join("render.wav"),
        &Audio {
            sample_rate: audio.sample_rate,
            channels: rendered.channels,
        },
    )?;
    let budget_ms = 1e3 * frame_size as f64 / audio.sample_rate as f64;
    let mut ms = rendered.frame_ms.clone();
    ms.sort_by(f64::total_cmp);
    let max_ms = ms.last().copied().unwrap_or(0.0);
    let median_ms = ms.get(ms.len() / 2).copied().unwrap_or(0.0);
    write_json(
        &out.join("metrics.json"),
        &json!({
            "frame_size": frame_size,
            "crossfade": crossfade,
            "frames": rendered.frame_ms.len(),
            "budget_ms": budget_ms,
            "timing": { "median_frame_ms": median_ms, "max_frame_ms": max_ms },
        }),
    )?;
    println!("{} frames, median {median_ms:.3} ms of a {budget_ms:.3} ms budget", rendered.frame_ms.len());
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> CliResult {
    #[derive(Default, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Config {
        instances: Option<usize>,
        seed: u64,
    }
    let mut cfg: Config = load_config(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    let instances = args.instances.or(cfg.instances).unwrap_or(50);
    cfg.instances = Some(instances);
    let out = prepare_out(&args.common)?;
    let report = grad_check_suite(instances, cfg.seed)?;
    let pass = report.max_rel_error <= GRADCHECK_TOLERANCE;
    write_json(
        &out.join("gradcheck.json"),
        &json!({
            "config": to_value(&cfg),
            "report": to_value(&report),
            "tolerance": GRADCHECK_TOLERANCE,
            "pass": pass,
        }),
    )?;
    println!("max relative error {:.3e} over {instances} instances", report.max_rel_error);
    if pass {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "gradient check failed: {:.3e} > {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::NoiseStudy(a) => noise_study(a),
        Command::InterpStudy(a) => interp_study(a),
        Command::Wiener(a) => run_baseline(Baseline::Wiener, a),
        Command::Nlms(a) => run_baseline(Baseline::Nlms, a),
        Command::Report(a) => run_report(a),
        Command::Render(a) => run_render(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
