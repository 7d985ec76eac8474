//! Browser bindings: synthesize filters on the sphere, compare spatial
//! interpolators, and run the Wiener and NLMS baselines on a noisy measurement.

use wasm_bindgen::prelude::*;

use irfield::baselines::{bilinear_ir, nearest_neighbor_ir, nlms_estimate, wiener_estimate, NlmsConfig, SphereAngle};
use irfield::dsp::{convolve_slices, sdr_db, Signal};
use irfield::studies::{stratified_subset, SweepSpec};
use irfield::synth::{make_filter_field, make_target, synth_filter, white_noise, FilterFieldSpec, NoiseKind, NoiseSpec};

fn js_err(e: irfield::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn demo_field(taps: usize, seed: u64) -> FilterFieldSpec {
    FilterFieldSpec {
        taps,
        seed,
        ..Default::default()
    }
}

/// Ground-truth filter at `(azimuth, elevation)` in degrees, channels
/// concatenated.
#[wasm_bindgen]
pub fn synth_ir(azimuth_deg: f64, elevation_deg: f64, taps: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let pos = SphereAngle::new(azimuth_deg, elevation_deg).to_position();
    let ir = synth_filter(&demo_field(taps, seed), pos).map_err(js_err)?;
    Ok(ir.taps().concat())
}

/// Interpolation from a stratified `measured`-node subset of the 24 x 12 grid.
#[wasm_bindgen]
pub struct Interpolation {
    truth: Vec<f64>,
    nearest: Vec<f64>,
    bilinear: Vec<f64>,
    nearest_sdr_db: f64,
    bilinear_sdr_db: f64,
}

#[wasm_bindgen]
impl Interpolation {
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn nearest(&self) -> Vec<f64> {
        self.nearest.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn bilinear(&self) -> Vec<f64> {
        self.bilinear.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn nearest_sdr_db(&self) -> f64 {
        self.nearest_sdr_db
    }

    #[wasm_bindgen(getter)]
    pub fn bilinear_sdr_db(&self) -> f64 {
        self.bilinear_sdr_db
    }
}

#[wasm_bindgen]
pub fn interpolate(azimuth_deg: f64, elevation_deg: f64, measured: usize, seed: u64) -> Result<Interpolation, JsError> {
    let spec = demo_field(400, seed);
    let field = make_filter_field(&spec).map_err(js_err)?;
    let subset = stratified_subset(spec.azimuth_count, spec.elevation_count, measured, seed).map_err(js_err)?;
    let measured = field.subset(&subset).map_err(js_err)?;
    let angle = SphereAngle::new(azimuth_deg, elevation_deg);
    let truth = synth_filter(&spec, angle.to_position()).map_err(js_err)?;
    let nearest = nearest_neighbor_ir(&measured, angle.to_position()).map_err(js_err)?;
    let bilinear = bilinear_ir(&measured, angle).map_err(js_err)?;
    let score = |est: &irfield::dsp::ImpulseResponse| -> Result<f64, JsError> {
        let mut total = 0.0;
        for c in 0..truth.channels() {
            total += sdr_db(truth.channel(c), est.channel(c)).map_err(js_err)?;
        }
        Ok(total / truth.channels() as f64)
    };
    Ok(Interpolation {
        nearest_sdr_db: score(&nearest)?,
        bilinear_sdr_db: score(&bilinear)?,
        truth: truth.taps().concat(),
        nearest: nearest.taps().concat(),
        bilinear: bilinear.taps().concat(),
    })
}

/// Identifies the left-ear filter at one direction from a noisy measurement.
/// Returns `[wiener_sdr_db, nlms_sdr_db, truth..., wiener..., nlms...]`.
#[wasm_bindgen]
pub fn baselines(azimuth_deg: f64, elevation_deg: f64, snr_db: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let spec = demo_field(400, seed);
    let pos = SphereAngle::new(azimuth_deg, elevation_deg).to_position();
    let ir = synth_filter(&spec, pos).map_err(js_err)?;
    let sweep_spec = SweepSpec::default();
    let sweep = sweep_spec.signal(spec.taps, spec.sample_rate).map_err(js_err)?;
    let noise = NoiseSpec::new(NoiseKind::Independent, snr_db, seed);
    let y = make_target(&sweep, &ir, &noise, pos, 0).map_err(js_err)?;
    let y0 = y.observed[0].samples();
    let wiener = wiener_estimate(sweep.samples(), y0, spec.taps, y0.len().next_power_of_two())
        .map_err(js_err)?
        .taps;

    let excitation = Signal::new(spec.sample_rate, white_noise(sweep.len(), seed ^ 0x776e)).map_err(js_err)?;
    let yn = make_target(&excitation, &ir, &noise, pos, 1).map_err(js_err)?;
    let nlms = nlms_estimate(
        excitation.samples(),
        yn.observed[0].samples(),
        &NlmsConfig {
            step_size: 0.1,
            ..NlmsConfig::new(spec.taps)
        },
    )
    .map_err(js_err)?;

    let truth = ir.channel(0);
    let mut out = vec![
        sdr_db(truth, &wiener).map_err(js_err)?,
        sdr_db(truth, &nlms).map_err(js_err)?,
    ];
    out.extend_from_slice(truth);
    out.extend_from_slice(&wiener);
    out.extend_from_slice(&nlms);
    Ok(out)
}

/// Convolves `source` with the filter at one direction (left channel).
#[wasm_bindgen]
pub fn auralize(source: Vec<f64>, azimuth_deg: f64, elevation_deg: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let pos = SphereAngle::new(azimuth_deg, elevation_deg).to_position();
    let ir = synth_filter(&demo_field(400, seed), pos).map_err(js_err)?;
    Ok(convolve_slices(&source, ir.channel(0)))
}
