//! Model file format, compression accounting and latency measurement.
//!
//! Layout (little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `IRML` | 4 bytes |
//! | format version | u16 |
//! | encoder input dim, octaves | u8, u8 |
//! | taps per IR | u32 |
//! | layer dim count, dims | u8, u32 each |
//! | activation id | u8 |
//! | noise kind | u8 (0 none, 1 static, 2 positional) |
//! | noise payload | static: u32 bins, f32 each; positional: u8 octaves, u8 dim count, u32 dims, f32 params |
//! | IR-MLP parameters | f32 each, layer order, weights row-major then biases |

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{MeasuredIrSet, SphereAngle};
use crate::dsp::ImpulseResponse;
use crate::error::{Error, Result};
use crate::nn::{count_parameters, EncoderConfig, IrMlp, MlpParams, LEAKY_SLOPE};
use crate::noise::NoiseModel;
use crate::train::{ir_sdr_db, mean_std};

pub const MAGIC: [u8; 4] = *b"IRML";
pub const FORMAT_VERSION: u16 = 1;
/// Leaky rectifier with slope [`LEAKY_SLOPE`].
pub const ACTIVATION_LEAKY_RELU: u8 = 0;

const NOISE_NONE: u8 = 0;
const NOISE_STATIC: u8 = 1;
const NOISE_POSITIONAL: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: IrMlp,
    pub noise: Option<NoiseModel>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn small(what: &str, v: usize) -> Result<u8> {
    u8::try_from(v).or_else(|_| format_err(format!("{what} {v} does not fit in u8")))
}

fn wide(what: &str, v: usize) -> Result<u32> {
    u32::try_from(v).or_else(|_| format_err(format!("{what} {v} does not fit in u32")))
}

fn put_dims(out: &mut Vec<u8>, dims: &[usize]) -> Result<()> {
    out.push(small("layer count", dims.len())?);
    for &d in dims {
        out.extend_from_slice(&wide("layer dim", d)?.to_le_bytes());
    }
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f64]) {
    for &x in xs {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

/// Serializes a model. Parameters are stored at 32-bit precision.
pub fn encode_model(model: &IrMlp, noise: Option<&NoiseModel>) -> Result<Vec<u8>> {
    if model.params.leaky_slope() != LEAKY_SLOPE {
        return format_err("only the default leaky rectifier is serializable");
    }
    let mut out = Vec::with_capacity(64 + 4 * model.params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(small("encoder input dim", model.encoder.input_dim)?);
    out.push(small("octave count", model.encoder.num_octaves)?);
    out.extend_from_slice(&wide("tap count", model.num_taps)?.to_le_bytes());
    put_dims(&mut out, model.params.layer_dims())?;
    out.push(ACTIVATION_LEAKY_RELU);
    match noise {
        None => out.push(NOISE_NONE),
        Some(NoiseModel::Static(s)) => {
            out.push(NOISE_STATIC);
            out.extend_from_slice(&wide("noise bins", s.log_amplitudes.len())?.to_le_bytes());
            put_f32s(&mut out, &s.log_amplitudes);
        }
        Some(NoiseModel::Positional(m)) => {
            out.push(NOISE_POSITIONAL);
            out.push(small("noise octave count", m.encoder.num_octaves)?);
            put_dims(&mut out, m.params.layer_dims())?;
            put_f32s(&mut out, m.params.as_slice());
        }
    }
    put_f32s(&mut out, model.params.as_slice());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(format!(
                "size mismatch: need {n} more bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.u8()? as usize;
        (0..n).map(|_| Ok(self.u32()? as usize)).collect()
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("parameter count overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

fn params_for(dims: &[usize], reader: &mut Reader<'_>) -> Result<MlpParams> {
    let shape = MlpParams::zeros(dims)?;
    MlpParams::from_flat(dims, reader.f32s(count_parameters(&shape))?)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(&MAGIC[..]) {
        return format_err("bad magic, not an IRML model file");
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return format_err(format!("unsupported format version {version} (expected {FORMAT_VERSION})"));
    }
    let input_dim = r.u8()? as usize;
    let octaves = r.u8()? as usize;
    let num_taps = r.u32()? as usize;
    let dims = r.dims()?;
    let activation = r.u8()?;
    if activation != ACTIVATION_LEAKY_RELU {
        return format_err(format!("unknown activation id {activation}"));
    }
    let noise = match r.u8()? {
        NOISE_NONE => None,
        NOISE_STATIC => {
            let bins = r.u32()? as usize;
            Some(NoiseModel::from_log_amplitudes(r.f32s(bins)?)?)
        }
        NOISE_POSITIONAL => {
            let noise_octaves = r.u8()? as usize;
            let noise_dims = r.dims()?;
            let params = params_for(&noise_dims, &mut r)?;
            Some(NoiseModel::from_mlp(EncoderConfig::new(3, noise_octaves), params)?)
        }
        k => return format_err(format!("unknown noise model kind {k}")),
    };
    let params = params_for(&dims, &mut r)?;
    if r.pos != bytes.len() {
        return format_err(format!("size mismatch: {} trailing bytes", bytes.len() - r.pos));
    }
    let model = IrMlp::new(EncoderConfig::new(input_dim, octaves), params, num_taps)?;
    Ok(ModelFile { model, noise })
}

/// Writes the model through a temporary file in the target directory and
/// renames it into place.
pub fn save_model(model: &IrMlp, noise: Option<&NoiseModel>, path: &Path) -> Result<()> {
    let bytes = encode_model(model, noise)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    decode_model(&std::fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub az: f64,
    pub el: f64,
    pub channels: usize,
    pub taps: usize,
}

/// Writes every IR as raw little-endian f32 taps (position, then channel,
/// then tap) plus a manifest with one row per position.
pub fn write_dataset(set: &MeasuredIrSet, taps_path: &Path, manifest_path: &Path) -> Result<()> {
    let mut raw = Vec::new();
    let mut manifest = csv::Writer::from_writer(Vec::new());
    for (i, ir) in set.irs().iter().enumerate() {
        let angle = set
            .angles()
            .map_or_else(|| SphereAngle::from_position(ir.position), |a| a[i]);
        manifest
            .serialize(ManifestRow {
                index: i,
                x: ir.position[0],
                y: ir.position[1],
                z: ir.position[2],
                az: angle.azimuth_deg,
                el: angle.elevation_deg,
                channels: ir.channels(),
                taps: ir.num_taps(),
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        for ch in ir.taps() {
            put_f32s(&mut raw, ch);
        }
    }
    let manifest = manifest.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(taps_path, raw)?;
    std::fs::write(manifest_path, manifest)?;
    Ok(())
}

pub fn read_dataset(taps_path: &Path, manifest_path: &Path, sample_rate: u32) -> Result<MeasuredIrSet> {
    let rows = csv::Reader::from_path(manifest_path)
        .map_err(|e| Error::Format(e.to_string()))?
        .deserialize::<ManifestRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let bytes = std::fs::read(taps_path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let mut irs = Vec::with_capacity(rows.len());
    let mut angles = Vec::with_capacity(rows.len());
    for row in &rows {
        let taps = (0..row.channels).map(|_| r.f32s(row.taps)).collect::<Result<Vec<_>>>()?;
        irs.push(ImpulseResponse::new([row.x, row.y, row.z], sample_rate, taps)?);
        angles.push(SphereAngle::new(row.az, row.el));
    }
    if r.pos != bytes.len() {
        return format_err(format!("size mismatch: {} trailing tap bytes", bytes.len() - r.pos));
    }
    MeasuredIrSet::new(irs, Some(angles))
}

pub fn raw_float_count(positions: usize, channels: usize, taps: usize) -> u64 {
    positions as u64 * channels as u64 * taps as u64
}

/// Wall-clock statistics in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub calls: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
}

pub const WARMUP_CALLS: usize = 10;

/// Times `f` after [`WARMUP_CALLS`] untimed calls.
pub fn time_calls<F: FnMut() -> Result<()>>(calls: usize, mut f: F) -> Result<TimingStats> {
    if calls == 0 {
        return Err(Error::Invalid("timing needs at least one call".into()));
    }
    for _ in 0..WARMUP_CALLS {
        f()?;
    }
    let mut ms = Vec::with_capacity(calls);
    for _ in 0..calls {
        let t = Instant::now();
        f()?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (mean_ms, std_ms) = mean_std(&ms);
    ms.sort_by(f64::total_cmp);
    let median_ms = if calls % 2 == 1 {
        ms[calls / 2]
    } else {
        0.5 * (ms[calls / 2 - 1] + ms[calls / 2])
    };
    Ok(TimingStats {
        calls,
        mean_ms,
        std_ms,
        median_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub param_count: u64,
    pub raw_float_count: u64,
    pub compression_ratio: f64,
    /// `compression_ratio` as a percentage with two decimals.
    pub compression_percent: String,
    pub probe_count: usize,
    pub mean_sdr_db: f64,
    pub std_sdr_db: f64,
    /// Kept apart from the deterministic fields above.
    pub timing: TimingStats,
}

/// Parameter count of the IR-MLP and, when present, the noise model.
pub fn model_param_count(model: &IrMlp, noise: Option<&NoiseModel>) -> u64 {
    (count_parameters(&model.params) + noise.map_or(0, |n| n.params().len())) as u64
}

pub fn compression_report(
    model: &IrMlp,
    field_dims: (usize, usize, usize),
    probes: &MeasuredIrSet,
    timing_calls: usize,
) -> Result<CompressionReport> {
    if probes.is_empty() {
        return Err(Error::Invalid("compression report needs probe IRs".into()));
    }
    let param_count = model_param_count(model, None);
    let raw = raw_float_count(field_dims.0, field_dims.1, field_dims.2);
    if raw == 0 {
        return Err(Error::Invalid("field dimensions must be positive".into()));
    }
    let ratio = 1.0 - param_count as f64 / raw as f64;
    let sdrs = probes
        .irs()
        .iter()
        .map(|ir| ir_sdr_db(ir, &model.predict_ir(ir.position)?))
        .collect::<Result<Vec<_>>>()?;
    let (mean_sdr_db, std_sdr_db) = mean_std(&sdrs);
    let probe = probes.get(0).position;
    let timing = time_calls(timing_calls, || model.predict_ir(probe).map(|_| ()))?;
    Ok(CompressionReport {
        param_count,
        raw_float_count: raw,
        compression_ratio: ratio,
        compression_percent: format!("{:.2}%", 100.0 * ratio),
        probe_count: probes.len(),
        mean_sdr_db,
        std_sdr_db,
        timing,
    })
}
