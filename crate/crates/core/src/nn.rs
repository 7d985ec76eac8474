//! Coordinate MLP: Fourier-feature encoding, dense leaky-rectifier network with
//! hand-derived reverse pass, and Adam.
//!
//! Parameters live in one flat buffer. Layer `l` stores its weight matrix
//! (rows = outputs, cols = inputs, row-major) followed by its bias vector.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{ImpulseResponse, DEFAULT_SAMPLE_RATE};
use crate::error::{check_dim, check_finite, invalid, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_octaves: usize,
    pub input_dim: usize,
}

impl EncoderConfig {
    pub const fn new(input_dim: usize, num_octaves: usize) -> Self {
        Self {
            num_octaves,
            input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim * 2 * self.num_octaves
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::new(4, 10)
    }
}

/// Emits `sin(2^l pi p), cos(2^l pi p)` for every component (outer) and octave (inner).
pub fn encode_into(p: &[f64], num_octaves: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), p.len() * 2 * num_octaves);
    let mut i = 0;
    for &v in p {
        let mut freq = PI;
        for _ in 0..num_octaves {
            let (s, c) = (freq * v).sin_cos();
            out[i] = s;
            out[i + 1] = c;
            i += 2;
            freq *= 2.0;
        }
    }
}

pub fn encode(p: &[f64], cfg: &EncoderConfig) -> Result<Vec<f64>> {
    check_dim("encoder input", cfg.input_dim, p.len())?;
    let mut out = vec![0.0; cfg.output_dim()];
    encode_into(p, cfg.num_octaves, &mut out);
    Ok(out)
}

/// Network input point; every component lies in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatioTemporalCoord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
}

impl SpatioTemporalCoord {
    pub fn new(position: [f64; 3], t: f64) -> Result<Self> {
        check_unit_box(&position)?;
        if !(-1.0..=1.0).contains(&t) {
            return invalid(format!("time coordinate {t} outside [-1, 1]"));
        }
        Ok(Self {
            x: position[0],
            y: position[1],
            z: position[2],
            t,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.t]
    }
}

pub(crate) fn check_unit_box(p: &[f64]) -> Result<()> {
    if p.iter().all(|v| (-1.0..=1.0).contains(v)) {
        Ok(())
    } else {
        invalid(format!("position {p:?} outside [-1, 1]^3"))
    }
}

/// Tap `i` of `num_taps` mapped onto `[-1, 1)`. The open right end keeps the
/// first and last taps apart under the period-2 lowest octave.
pub fn tap_coordinate(i: usize, num_taps: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / num_taps as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    leaky_slope: f64,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        acc += w[0] * w[1] + w[1];
        offsets.push(acc);
    }
    offsets
}

impl MlpParams {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return invalid(format!("invalid layer dims {layer_dims:?}"));
        }
        let offsets = layer_offsets(layer_dims);
        let n = *offsets.last().unwrap();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            leaky_slope: LEAKY_SLOPE,
            offsets,
            data: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..p.num_layers() {
            let (fan_in, fan_out) = (p.layer_dims[l], p.layer_dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for w in p.weight_mut(l) {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn from_flat(layer_dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        check_dim("parameter buffer", p.data.len(), data.len())?;
        check_finite("parameters", &data)?;
        p.data = data;
        Ok(p)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Range of layer `l`'s weights in the flat buffer.
    pub fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.offsets[l];
        start..start + self.layer_dims[l] * self.layer_dims[l + 1]
    }

    pub fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let w = self.weight_range(l);
        w.end..w.end + self.layer_dims[l + 1]
    }

    pub fn weight(&self, l: usize) -> &[f64] {
        &self.data[self.weight_range(l)]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        &self.data[self.bias_range(l)]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.weight_range(l);
        &mut self.data[r]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.bias_range(l);
        &mut self.data[r]
    }
}

pub fn count_parameters(params: &MlpParams) -> usize {
    params
        .layer_dims
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

/// Layer activations of a batched forward pass. `acts[0]` is the input,
/// `acts[l]` the (post-activation) input of layer `l`, the last entry the output.
pub struct ForwardCache {
    rows: usize,
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.acts.pop().unwrap()
    }
}

/// `c (m x n) = a (m x k) * b (k x n)` with explicit strides, accumulating if `beta = 1`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    // SAFETY: callers pass buffers of exactly the sizes implied by the shapes and
    // strides; `c` is a distinct, contiguous row-major m x n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Runs `rows` input vectors (row-major, `rows x d_in`) through the network.
pub fn forward_batch(params: &MlpParams, input: &[f64], rows: usize) -> Result<ForwardCache> {
    check_dim("batch input", rows * params.input_dim(), input.len())?;
    let mut acts = Vec::with_capacity(params.layer_dims.len());
    acts.push(input.to_vec());
    let last = params.num_layers() - 1;
    for l in 0..params.num_layers() {
        let (d_in, d_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
        let mut z = vec![0.0; rows * d_out];
        let bias = params.bias(l);
        for row in z.chunks_exact_mut(d_out) {
            row.copy_from_slice(bias);
        }
        let x = acts.last().unwrap();
        gemm(
            rows,
            d_in,
            d_out,
            x,
            (d_in as isize, 1),
            params.weight(l),
            (1, d_in as isize),
            1.0,
            &mut z,
        );
        if l != last {
            let slope = params.leaky_slope;
            for v in &mut z {
                if *v <= 0.0 {
                    *v *= slope;
                }
            }
        }
        acts.push(z);
    }
    Ok(ForwardCache { rows, acts })
}

/// Reverse pass. Accumulates parameter gradients into `grads` (flat, same
/// layout as the parameters) and optionally writes input gradients.
pub fn backward_batch(
    params: &MlpParams,
    cache: &ForwardCache,
    upstream: &[f64],
    grads: &mut [f64],
    input_grad: Option<&mut [f64]>,
) -> Result<()> {
    let rows = cache.rows;
    check_dim("upstream gradient", rows * params.output_dim(), upstream.len())?;
    check_dim("gradient buffer", params.len(), grads.len())?;
    let slope = params.leaky_slope;
    let mut delta = upstream.to_vec();
    for l in (0..params.num_layers()).rev() {
        let (d_in, d_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
        let x = &cache.acts[l];
        let wr = params.weight_range(l);
        gemm(
            d_out,
            rows,
            d_in,
            &delta,
            (1, d_out as isize),
            x,
            (d_in as isize, 1),
            1.0,
            &mut grads[wr],
        );
        let br = params.bias_range(l);
        let gb = &mut grads[br];
        for row in delta.chunks_exact(d_out) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        if l == 0 && input_grad.is_none() {
            break;
        }
        let mut dx = vec![0.0; rows * d_in];
        gemm(
            rows,
            d_out,
            d_in,
            &delta,
            (d_out as isize, 1),
            params.weight(l),
            (d_in as isize, 1),
            0.0,
            &mut dx,
        );
        if l > 0 {
            for (d, a) in dx.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *d *= slope;
                }
            }
        }
        delta = dx;
    }
    if let Some(out) = input_grad {
        check_dim("input gradient", delta.len(), out.len())?;
        out.copy_from_slice(&delta);
    }
    Ok(())
}

pub fn forward(params: &MlpParams, features: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_batch(params, features, 1)?.into_output())
}

/// Gradients of `upstream . forward(features)` with respect to parameters and inputs.
pub fn backward(
    params: &MlpParams,
    features: &[f64],
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = forward_batch(params, features, 1)?;
    let mut grads = vec![0.0; params.len()];
    let mut dx = vec![0.0; features.len()];
    backward_batch(params, &cache, upstream, &mut grads, Some(&mut dx))?;
    Ok((grads, dx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Non-finite gradients leave state and
    /// parameters untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim("adam parameters", self.m.len(), params.len())?;
        check_dim("adam gradients", self.m.len(), grads.len())?;
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradients"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= learning_rate * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// Layer dims for a network of `layers` affine layers of width `hidden`.
pub fn mlp_dims(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(hidden, layers.saturating_sub(1)));
    dims.push(output);
    dims
}

/// IR-MLP together with the encoding and tap count it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct IrMlp {
    pub encoder: EncoderConfig,
    pub params: MlpParams,
    pub num_taps: usize,
}

impl IrMlp {
    pub fn new(encoder: EncoderConfig, params: MlpParams, num_taps: usize) -> Result<Self> {
        if encoder.input_dim != 4 {
            return invalid("IR-MLP encodes (x, y, z, t)");
        }
        check_dim("IR-MLP input", encoder.output_dim(), params.input_dim())?;
        if num_taps == 0 {
            return invalid("IR-MLP needs at least one tap");
        }
        Ok(Self {
            encoder,
            params,
            num_taps,
        })
    }

    pub fn init(
        encoder: EncoderConfig,
        hidden: usize,
        layers: usize,
        channels: usize,
        num_taps: usize,
        seed: u64,
    ) -> Result<Self> {
        let dims = mlp_dims(encoder.output_dim(), hidden, layers, channels);
        Self::new(encoder, MlpParams::glorot(&dims, seed)?, num_taps)
    }

    pub fn channels(&self) -> usize {
        self.params.output_dim()
    }

    /// Encoded `(x, y, z, t_i)` for all taps, `num_taps x encoder.output_dim()`.
    pub fn feature_matrix(&self, position: [f64; 3]) -> Result<Vec<f64>> {
        check_unit_box(&position)?;
        let dim = self.encoder.output_dim();
        let l = self.encoder.num_octaves;
        let mut pos_part = vec![0.0; 3 * 2 * l];
        encode_into(&position, l, &mut pos_part);
        let mut out = vec![0.0; self.num_taps * dim];
        for (i, row) in out.chunks_exact_mut(dim).enumerate() {
            row[..pos_part.len()].copy_from_slice(&pos_part);
            encode_into(
                &[tap_coordinate(i, self.num_taps)],
                l,
                &mut row[pos_part.len()..],
            );
        }
        Ok(out)
    }

    /// Taps laid out `[tap][channel]`, i.e. the raw network output.
    pub fn predict_raw(&self, position: [f64; 3]) -> Result<Vec<f64>> {
        let feats = self.feature_matrix(position)?;
        Ok(forward_batch(&self.params, &feats, self.num_taps)?.into_output())
    }

    pub fn predict_ir(&self, position: [f64; 3]) -> Result<ImpulseResponse> {
        let raw = self.predict_raw(position)?;
        ImpulseResponse::new(position, DEFAULT_SAMPLE_RATE, deinterleave(&raw, self.channels()))
    }
}

/// Evaluates the network at every tap of `position` and assembles a
/// `channels`-channel, `num_taps`-tap impulse response.
pub fn predict_ir(
    params: &MlpParams,
    encoder: &EncoderConfig,
    position: [f64; 3],
    num_taps: usize,
    channels: usize,
) -> Result<ImpulseResponse> {
    check_dim("IR-MLP output channels", channels, params.output_dim())?;
    IrMlp::new(*encoder, params.clone(), num_taps)?.predict_ir(position)
}

pub(crate) fn deinterleave(raw: &[f64], channels: usize) -> Vec<Vec<f64>> {
    (0..channels)
        .map(|c| raw.iter().skip(c).step_by(channels).copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_params(dims: &[usize], seed: u64) -> MlpParams {
        let mut p = MlpParams::glorot(dims, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for l in 0..p.num_layers() {
            for b in p.bias_mut(l) {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        p
    }

    /// Plain loops over nested vectors, independent of the flat/gemm path.
    fn forward_oracle(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..p.num_layers() {
            let (din, dout) = (p.layer_dims()[l], p.layer_dims()[l + 1]);
            let w = p.weight(l);
            let mut z: Vec<f64> = (0..dout)
                .map(|o| p.bias(l)[o] + (0..din).map(|i| w[o * din + i] * a[i]).sum::<f64>())
                .collect();
            if l + 1 < p.num_layers() {
                z.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v *= LEAKY_SLOPE
                    }
                });
            }
            a = z;
        }
        a
    }

    #[test]
    fn encode_examples() {
        let cfg = EncoderConfig::default();
        let f = encode(&[0.0; 4], &cfg).unwrap();
        assert_eq!(f.len(), 80);
        for (i, v) in f.iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
        let f = encode(&[0.5], &EncoderConfig::new(1, 1)).unwrap();
        assert_relative_eq!(f[0], 1.0);
        assert!(f[1].abs() < 1e-15);
        assert!(encode(&[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn forward_examples() {
        let p = MlpParams::zeros(&[5, 7, 3]).unwrap();
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0, 4.0, 5.0]).unwrap(), vec![0.0; 3]);

        let mut id = MlpParams::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            id.weight_mut(0)[i * 3 + i] = 1.0;
        }
        assert_eq!(forward(&id, &[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
        assert!(forward(&id, &[0.5]).is_err());
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let p = random_params(&[6, 9, 4], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = forward(&p, &x).unwrap();
        for (a, b) in y.iter().zip(forward_oracle(&p, &x)) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn backward_zero_upstream_and_linear_outer_product() {
        let p = random_params(&[4, 6, 2], 2);
        let (g, dx) = backward(&p, &[0.1, 0.2, 0.3, 0.4], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0) && dx.iter().all(|v| *v == 0.0));

        let p = random_params(&[3, 2], 3);
        let x = [0.3, -0.7, 1.1];
        let up = [2.0, -0.5];
        let (g, dx) = backward(&p, &x, &up).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_relative_eq!(g[o * 3 + i], up[o] * x[i], max_relative = 1e-14);
            }
            assert_relative_eq!(g[6 + o], up[o]);
        }
        for (i, d) in dx.iter().enumerate() {
            let expect = up[0] * p.weight(0)[i] + up[1] * p.weight(0)[3 + i];
            assert_relative_eq!(*d, expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut p = random_params(&[5, 8, 8, 3], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (g, _) = backward(&p, &x, &up).unwrap();
        let obj = |p: &MlpParams| -> f64 {
            forward(p, &x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        let floor = crate::gradcheck::comparison_floor(&g, obj(&p));
        for (i, &gi) in g.iter().enumerate() {
            let orig = p.as_slice()[i];
            p.as_mut_slice()[i] = orig + h;
            let fp = obj(&p);
            p.as_mut_slice()[i] = orig - h;
            let fm = obj(&p);
            p.as_mut_slice()[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let err = crate::gradcheck::relative_error(gi, fd, floor);
            assert!(err < 1e-4, "param {i}: {gi} vs {fd}");
        }
    }

    #[test]
    fn adam_examples() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut st = AdamState::new(3, cfg);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.step_count(), 1);

        let mut st = AdamState::new(3, cfg);
        let g = [0.3, -4.0, 1e-3];
        st.step(&mut p, &g).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for (i, (v, g)) in p.iter().zip(g).enumerate() {
            let start = [1.0, -2.0, 0.5][i];
            let expect = start - 0.01 * g / (g.abs() + 1e-8);
            assert_relative_eq!(*v, expect, max_relative = 1e-12);
        }

        let mut st = AdamState::new(3, cfg);
        let before = p.clone();
        assert!(st.step(&mut p, &[f64::NAN, 0.0, 0.0]).is_err());
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn adam_descends_scalar_quadratic() {
        let mut st = AdamState::new(1, AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        });
        let mut x = [3.0];
        let loss = |x: f64| (x - 1.0) * (x - 1.0);
        let l0 = loss(x[0]);
        for _ in 0..2 {
            let g = [2.0 * (x[0] - 1.0)];
            st.step(&mut x, &g).unwrap();
        }
        assert!(loss(x[0]) < l0);
    }

    #[test]
    fn parameter_counts() {
        let p = MlpParams::zeros(&[80, 128, 128, 128, 128, 128, 2]).unwrap();
        assert_eq!(count_parameters(&p), 76_674);
        assert_eq!(p.len(), 76_674);
        assert_eq!(count_parameters(&MlpParams::zeros(&[2, 2]).unwrap()), 6);
        assert_eq!(mlp_dims(80, 128, 6, 2), vec![80, 128, 128, 128, 128, 128, 2]);
    }

    #[test]
    fn predict_ir_shape_and_determinism() {
        let zero = IrMlp::new(
            EncoderConfig::default(),
            MlpParams::zeros(&mlp_dims(80, 16, 3, 2)).unwrap(),
            10,
        )
        .unwrap();
        let ir = zero.predict_ir([0.1, 0.2, 0.3]).unwrap();
        assert!(ir.taps().iter().flatten().all(|v| *v == 0.0));

        let net = IrMlp::init(EncoderConfig::default(), 128, 6, 2, 400, 7).unwrap();
        let a = net.predict_ir([0.3, -0.2, 0.9]).unwrap();
        let b = net.predict_ir([0.3, -0.2, 0.9]).unwrap();
        assert_eq!((a.channels(), a.num_taps()), (2, 400));
        assert_eq!(a, b);
        assert!(net.predict_ir([1.5, 0.0, 0.0]).is_err());
        assert!(predict_ir(&net.params, &net.encoder, [0.0; 3], 400, 3).is_err());
    }
}
