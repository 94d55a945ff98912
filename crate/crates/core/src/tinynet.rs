//! A small seeded CNN used as the gradient source for FGSM.
//!
//! Architecture (input 3x64x64, planar channel-major):
//!
//! ```text
//! conv 3->8, 3x3, pad 1 -> ReLU -> avgpool 2x2      (8x32x32)
//! conv 8->16, 3x3, pad 1 -> ReLU -> avgpool 2x2     (16x16x16)
//! flatten (channel, row, column) -> dense 4096->10 -> softmax
//! ```
//!
//! Weights are Xavier-uniform from a SplitMix64 stream consumed in the order
//! conv1 weights, conv2 weights, dense weights (each row-major as
//! `[out][in][ky][kx]` / `[class][feature]`); all biases start at zero.
//! There is no training: the network only has to provide an exact
//! `d loss / d input`.

use thiserror::Error;

use crate::frame_io::Frame;
use crate::rng::SplitMix64;

pub const INPUT_SIZE: usize = 64;
pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_LEN: usize = INPUT_CHANNELS * INPUT_SIZE * INPUT_SIZE;
pub const CONV1_OUT: usize = 8;
pub const CONV2_OUT: usize = 16;
pub const KERNEL: usize = 3;
pub const CLASSES: usize = 10;
const MID_SIZE: usize = INPUT_SIZE / 2;
const OUT_SIZE: usize = INPUT_SIZE / 4;
pub const DENSE_IN: usize = CONV2_OUT * OUT_SIZE * OUT_SIZE;

const CONV1_W_LEN: usize = CONV1_OUT * INPUT_CHANNELS * KERNEL * KERNEL;
const CONV2_W_LEN: usize = CONV2_OUT * CONV1_OUT * KERNEL * KERNEL;
const DENSE_W_LEN: usize = CLASSES * DENSE_IN;
const PARAM_COUNT: usize =
    CONV1_W_LEN + CONV1_OUT + CONV2_W_LEN + CONV2_OUT + DENSE_W_LEN + CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum TinyNetError {
    #[error("shape mismatch: expected {expected} values, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("input value {value} at offset {offset} outside [0, 1]")]
    OutOfRange { offset: usize, value: f64 },
    #[error("target label {0} outside 0..{CLASSES}")]
    InvalidLabel(usize),
    #[error("bad parameter blob: {0}")]
    BadParams(String),
}

/// Xavier-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub seed: u64,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

impl ModelParams {
    pub fn init(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut draw = |len: usize, bound: f64| -> Vec<f64> {
            (0..len).map(|_| rng.uniform(-bound, bound)).collect()
        };
        let k2 = KERNEL * KERNEL;
        let conv1_w = draw(
            CONV1_W_LEN,
            xavier_bound(INPUT_CHANNELS * k2, CONV1_OUT * k2),
        );
        let conv2_w = draw(CONV2_W_LEN, xavier_bound(CONV1_OUT * k2, CONV2_OUT * k2));
        let dense_w = draw(DENSE_W_LEN, xavier_bound(DENSE_IN, CLASSES));
        Self {
            seed,
            conv1_w,
            conv1_b: vec![0.0; CONV1_OUT],
            conv2_w,
            conv2_b: vec![0.0; CONV2_OUT],
            dense_w,
            dense_b: vec![0.0; CLASSES],
        }
    }

    fn layers(&self) -> [&[f64]; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense_w,
            &self.dense_b,
        ]
    }

    /// Little-endian dump: the seed as `u64`, then every parameter as `f64`
    /// in layer order conv1 w, conv1 b, conv2 w, conv2 b, dense w, dense b.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + PARAM_COUNT * 8);
        out.extend_from_slice(&self.seed.to_le_bytes());
        for layer in self.layers() {
            for v in layer {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TinyNetError> {
        let expected = 8 + PARAM_COUNT * 8;
        if bytes.len() != expected {
            return Err(TinyNetError::BadParams(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let seed = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let mut values = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Result<Vec<f64>, TinyNetError> {
            let v: Vec<f64> = values.by_ref().take(n).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(TinyNetError::BadParams("non-finite weight".into()));
            }
            Ok(v)
        };
        Ok(Self {
            seed,
            conv1_w: take(CONV1_W_LEN)?,
            conv1_b: take(CONV1_OUT)?,
            conv2_w: take(CONV2_W_LEN)?,
            conv2_b: take(CONV2_OUT)?,
            dense_w: take(DENSE_W_LEN)?,
            dense_b: take(CLASSES)?,
        })
    }
}

/// A 3x64x64 planar tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    tensor: Vec<f64>,
}

impl ModelInput {
    /// Validates shape and the `[0, 1]` range.
    pub fn new(tensor: Vec<f64>) -> Result<Self, TinyNetError> {
        let input = Self::from_raw(tensor)?;
        if let Some(offset) = input.tensor.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(TinyNetError::OutOfRange {
                offset,
                value: input.tensor[offset],
            });
        }
        Ok(input)
    }

    /// Validates shape only; used to probe numerical behaviour outside the
    /// image range.
    pub fn from_raw(tensor: Vec<f64>) -> Result<Self, TinyNetError> {
        if tensor.len() != INPUT_LEN {
            return Err(TinyNetError::ShapeMismatch {
                expected: INPUT_LEN,
                found: tensor.len(),
            });
        }
        Ok(Self { tensor })
    }

    /// Area-weighted box resampling of a frame to 64x64.
    pub fn from_frame(frame: &Frame) -> Self {
        let wx = box_weights(frame.width(), INPUT_SIZE);
        let wy = box_weights(frame.height(), INPUT_SIZE);
        let (w, h) = (frame.width(), frame.height());
        let px = frame.pixels();
        let mut tensor = vec![0.0; INPUT_LEN];
        // Horizontal pass into a (h x 64 x 3) buffer, then vertical.
        let mut rows = vec![0.0; h * INPUT_SIZE * 3];
        for y in 0..h {
            for (ox, taps) in wx.iter().enumerate() {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for &(sx, weight) in taps {
                        acc += weight * px[(y * w + sx) * 3 + c];
                    }
                    rows[(y * INPUT_SIZE + ox) * 3 + c] = acc;
                }
            }
        }
        for (oy, taps) in wy.iter().enumerate() {
            for ox in 0..INPUT_SIZE {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for &(sy, weight) in taps {
                        acc += weight * rows[(sy * INPUT_SIZE + ox) * 3 + c];
                    }
                    tensor[(c * INPUT_SIZE + oy) * INPUT_SIZE + ox] = acc.clamp(0.0, 1.0);
                }
            }
        }
        Self { tensor }
    }

    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }
}

/// For each of `dst` output cells, the source cells it overlaps and the
/// fraction of the output cell each one covers.
pub(crate) fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    // Work in units of 1/(src*dst) so that cell edges are integers.
    (0..dst)
        .map(|o| {
            let lo = o * src;
            let hi = (o + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .map(|s| {
                    let s_lo = s * dst;
                    let s_hi = (s + 1) * dst;
                    let overlap = hi.min(s_hi) - lo.max(s_lo);
                    (s, overlap as f64 / src as f64)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub label: usize,
}

impl Prediction {
    fn from_logits(logits: Vec<f64>) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probabilities = exps.iter().map(|e| e / sum).collect();
        Self {
            label: argmax(&logits),
            logits,
            probabilities,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// 3x3 convolution with zero padding 1 over planar `[in_c][size][size]` data.
fn conv3x3(input: &[f64], in_c: usize, size: usize, weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let out_c = bias.len();
    let plane = size * size;
    let mut out = vec![0.0; out_c * plane];
    for oc in 0..out_c {
        let dst = &mut out[oc * plane..(oc + 1) * plane];
        dst.fill(bias[oc]);
        for ic in 0..in_c {
            let src = &input[ic * plane..(ic + 1) * plane];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let w = weights[((oc * in_c + ic) * KERNEL + ky) * KERNEL + kx];
                    // Output (y, x) reads input (y + ky - 1, x + kx - 1).
                    let y0 = 1usize.saturating_sub(ky);
                    let y1 = (size + 1 - ky).min(size);
                    let x0 = 1usize.saturating_sub(kx);
                    let x1 = (size + 1 - kx).min(size);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let srow = &src[sy * size + x0 + kx - 1..sy * size + x1 + kx - 1];
                        let drow = &mut dst[y * size + x0..y * size + x1];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv3x3`] with respect to its input.
fn conv3x3_input_grad(
    grad_out: &[f64],
    out_c: usize,
    in_c: usize,
    size: usize,
    weights: &[f64],
) -> Vec<f64> {
    let plane = size * size;
    let mut grad_in = vec![0.0; in_c * plane];
    for oc in 0..out_c {
        let g = &grad_out[oc * plane..(oc + 1) * plane];
        for ic in 0..in_c {
            let dst = &mut grad_in[ic * plane..(ic + 1) * plane];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let w = weights[((oc * in_c + ic) * KERNEL + ky) * KERNEL + kx];
                    let y0 = 1usize.saturating_sub(ky);
                    let y1 = (size + 1 - ky).min(size);
                    let x0 = 1usize.saturating_sub(kx);
                    let x1 = (size + 1 - kx).min(size);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let grow = &g[y * size + x0..y * size + x1];
                        let drow = &mut dst[sy * size + x0 + kx - 1..sy * size + x1 + kx - 1];
                        for (d, gv) in drow.iter_mut().zip(grow) {
                            *d += w * gv;
                        }
                    }
                }
            }
        }
    }
    grad_in
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn avg_pool2(input: &[f64], channels: usize, size: usize) -> Vec<f64> {
    let half = size / 2;
    let mut out = vec![0.0; channels * half * half];
    for c in 0..channels {
        for y in 0..half {
            for x in 0..half {
                let base = c * size * size;
                let s = input[base + 2 * y * size + 2 * x]
                    + input[base + 2 * y * size + 2 * x + 1]
                    + input[base + (2 * y + 1) * size + 2 * x]
                    + input[base + (2 * y + 1) * size + 2 * x + 1];
                out[(c * half + y) * half + x] = 0.25 * s;
            }
        }
    }
    out
}

/// Gradient through avg-pool followed by the ReLU mask of `pre_activation`.
fn avg_pool2_relu_grad(
    grad_pooled: &[f64],
    pre_activation: &[f64],
    channels: usize,
    size: usize,
) -> Vec<f64> {
    let half = size / 2;
    let mut out = vec![0.0; channels * size * size];
    for c in 0..channels {
        for y in 0..size {
            for x in 0..size {
                let i = (c * size + y) * size + x;
                if pre_activation[i] > 0.0 {
                    out[i] = 0.25 * grad_pooled[(c * half + y / 2) * half + x / 2];
                }
            }
        }
    }
    out
}

struct Activations {
    z1: Vec<f64>,
    z2: Vec<f64>,
    prediction: Prediction,
}

fn forward_cached(params: &ModelParams, input: &ModelInput) -> Activations {
    let z1 = conv3x3(
        &input.tensor,
        INPUT_CHANNELS,
        INPUT_SIZE,
        &params.conv1_w,
        &params.conv1_b,
    );
    let mut a1 = z1.clone();
    relu_in_place(&mut a1);
    let p1 = avg_pool2(&a1, CONV1_OUT, INPUT_SIZE);
    let z2 = conv3x3(&p1, CONV1_OUT, MID_SIZE, &params.conv2_w, &params.conv2_b);
    let mut a2 = z2.clone();
    relu_in_place(&mut a2);
    let flat = avg_pool2(&a2, CONV2_OUT, MID_SIZE);
    let logits = params
        .dense_w
        .chunks_exact(DENSE_IN)
        .zip(&params.dense_b)
        .map(|(row, b)| b + row.iter().zip(&flat).map(|(w, x)| w * x).sum::<f64>())
        .collect();
    Activations {
        z1,
        z2,
        prediction: Prediction::from_logits(logits),
    }
}

pub fn forward(params: &ModelParams, input: &ModelInput) -> Prediction {
    forward_cached(params, input).prediction
}

/// Cross-entropy of the softmax output against `target`, computed as
/// `logsumexp(logits) - logits[target]`.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Loss and its exact gradient with respect to the 3x64x64 input (planar layout).
pub fn loss_and_input_grad(
    params: &ModelParams,
    input: &ModelInput,
    target: usize,
) -> Result<(f64, Vec<f64>), TinyNetError> {
    if target >= CLASSES {
        return Err(TinyNetError::InvalidLabel(target));
    }
    let acts = forward_cached(params, input);
    let loss = cross_entropy(&acts.prediction.logits, target);

    let mut dlogits = acts.prediction.probabilities.clone();
    dlogits[target] -= 1.0;

    let mut dflat = vec![0.0; DENSE_IN];
    for (row, &g) in params.dense_w.chunks_exact(DENSE_IN).zip(&dlogits) {
        for (d, w) in dflat.iter_mut().zip(row) {
            *d += g * w;
        }
    }
    let dz2 = avg_pool2_relu_grad(&dflat, &acts.z2, CONV2_OUT, MID_SIZE);
    let dp1 = conv3x3_input_grad(&dz2, CONV2_OUT, CONV1_OUT, MID_SIZE, &params.conv2_w);
    let dz1 = avg_pool2_relu_grad(&dp1, &acts.z1, CONV1_OUT, INPUT_SIZE);
    let dx = conv3x3_input_grad(&dz1, CONV1_OUT, INPUT_CHANNELS, INPUT_SIZE, &params.conv1_w);
    Ok((loss, dx))
}
