//! Learnable stationary-noise amplitude spectra.
//!
//! Both variants work in the log domain: the amplitude of bin `k` is
//! `exp(a_k)`, which keeps every bin strictly positive.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Error, Result};
use crate::nn::{self, check_unit_box, EncoderConfig, MlpParams};

/// Initial log-amplitude of every noise bin.
pub const LOG_AMPLITUDE_INIT: f64 = -2.0;

pub const NOISE_MLP_LAYERS: usize = 4;
pub const NOISE_MLP_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModelKind {
    None,
    Static,
    Positional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticNoiseSpectrum {
    pub log_amplitudes: Vec<f64>,
}

/// Position-dependent spectrum: encoded `(x, y, z)` -> MLP -> exp.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMlp {
    pub encoder: EncoderConfig,
    pub params: MlpParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Static(StaticNoiseSpectrum),
    Positional(NoiseMlp),
}

impl NoiseModel {
    pub fn new_static(bins: usize) -> Self {
        Self::Static(StaticNoiseSpectrum {
            log_amplitudes: vec![LOG_AMPLITUDE_INIT; bins],
        })
    }

    pub fn new_positional(bins: usize, num_octaves: usize, seed: u64) -> Result<Self> {
        let encoder = EncoderConfig::new(3, num_octaves);
        let dims = nn::mlp_dims(encoder.output_dim(), NOISE_MLP_HIDDEN, NOISE_MLP_LAYERS, bins);
        let mut params = MlpParams::glorot(&dims, seed)?;
        let last = params.num_layers() - 1;
        params.bias_mut(last).fill(LOG_AMPLITUDE_INIT);
        Ok(Self::Positional(NoiseMlp { encoder, params }))
    }

    pub fn from_log_amplitudes(log_amplitudes: Vec<f64>) -> Result<Self> {
        if log_amplitudes.is_empty() {
            return invalid("noise spectrum needs at least one bin");
        }
        check_finite("noise log-amplitudes", &log_amplitudes)?;
        Ok(Self::Static(StaticNoiseSpectrum { log_amplitudes }))
    }

    pub fn from_mlp(encoder: EncoderConfig, params: MlpParams) -> Result<Self> {
        if encoder.input_dim != 3 {
            return invalid("noise MLP encodes (x, y, z)");
        }
        check_dim("noise MLP input", encoder.output_dim(), params.input_dim())?;
        Ok(Self::Positional(NoiseMlp { encoder, params }))
    }

    pub fn kind(&self) -> NoiseModelKind {
        match self {
            Self::Static(_) => NoiseModelKind::Static,
            Self::Positional(_) => NoiseModelKind::Positional,
        }
    }

    pub fn bins(&self) -> usize {
        match self {
            Self::Static(s) => s.log_amplitudes.len(),
            Self::Positional(m) => m.params.output_dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Self::Static(s) => &s.log_amplitudes,
            Self::Positional(m) => m.params.as_slice(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Self::Static(s) => &mut s.log_amplitudes,
            Self::Positional(m) => m.params.as_mut_slice(),
        }
    }

    /// `|N(w)|` for each bin. The static variant ignores `position`.
    pub fn noise_amplitude(&self, position: Option<[f64; 3]>) -> Result<Vec<f64>> {
        match self {
            Self::Static(s) => Ok(s.log_amplitudes.iter().map(|a| a.exp()).collect()),
            Self::Positional(m) => {
                let feats = m.features(position)?;
                let mut out = nn::forward(&m.params, &feats)?;
                out.iter_mut().for_each(|v| *v = v.exp());
                Ok(out)
            }
        }
    }

    /// Gradient of `upstream . noise_amplitude(position)` with respect to the
    /// model parameters.
    pub fn noise_grads(&self, position: Option<[f64; 3]>, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params().len()];
        self.accumulate_grads(position, upstream, &mut grads)?;
        Ok(grads)
    }

    pub fn accumulate_grads(
        &self,
        position: Option<[f64; 3]>,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        check_dim("noise upstream gradient", self.bins(), upstream.len())?;
        check_dim("noise gradient buffer", self.params().len(), grads.len())?;
        if !upstream.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("noise upstream gradient"));
        }
        match self {
            Self::Static(s) => {
                for ((g, a), u) in grads.iter_mut().zip(&s.log_amplitudes).zip(upstream) {
                    *g += u * a.exp();
                }
            }
            Self::Positional(m) => {
                let feats = m.features(position)?;
                let cache = nn::forward_batch(&m.params, &feats, 1)?;
                let dz: Vec<f64> = cache
                    .output()
                    .iter()
                    .zip(upstream)
                    .map(|(z, u)| u * z.exp())
                    .collect();
                nn::backward_batch(&m.params, &cache, &dz, grads, None)?;
            }
        }
        Ok(())
    }
}

impl NoiseMlp {
    fn features(&self, position: Option<[f64; 3]>) -> Result<Vec<f64>> {
        let Some(p) = position else {
            return invalid("position-dependent noise model needs a position");
        };
        check_unit_box(&p)?;
        nn::encode(&p, &self.encoder)
    }
}
