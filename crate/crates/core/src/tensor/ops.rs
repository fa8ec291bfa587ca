//! Forward-pass kernels.
//!
//! Every reduction accumulates in `f64` and rounds once to `f32` at the end,
//! in a fixed order, so results do not depend on the build or the machine.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Number of output channels accumulated side by side in [`conv2d`] and [`linear`].
const LANES: usize = 8;

/// 2-D cross-correlation of a `C×H×W` input with an `O×C×k×k` kernel, zero padding.
///
/// Each output element is `bias[o] + Σ_c Σ_ky Σ_kx w[o,c,ky,kx]·x[c, y·s+ky−p, x·s+kx−p]`,
/// summed in exactly that order.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let [out_c, wc, kh, kw] = weight.shape()[..] else {
        return Err(Error::shape(format!("conv weight must be O×C×k×k, got {:?}", weight.shape())));
    };
    if wc != c {
        return Err(Error::shape(format!(
            "conv input has {c} channels but the weight expects {wc} (weight {:?})",
            weight.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("conv stride must be positive"));
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(Error::shape(format!("{kh}×{kw} kernel does not fit a {h}×{w} input with padding {padding}")));
    }
    if let Some(b) = bias {
        if b.shape() != [out_c] {
            return Err(Error::shape(format!("conv bias {:?} for {out_c} outputs", b.shape())));
        }
    }
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let patch = c * kh * kw;
    let pixels = oh * ow;

    // Gather receptive fields pixel-major so each dot product walks contiguous memory
    // in (c, ky, kx) order.
    let x = input.data();
    let mut cols = vec![0.0f32; pixels * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * patch..][..patch];
            let mut j = 0;
            for ci in 0..c {
                let plane = &x[ci * h * w..][..h * w];
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                            row[j] = plane[iy as usize * w + ix as usize];
                        }
                        j += 1;
                    }
                }
            }
        }
    }

    let mut out = vec![0.0f32; out_c * pixels];
    dot_rows(&cols, patch, weight.data(), out_c, bias.map(|b| b.data()), |p, o, v| {
        out[o * pixels + p] = v;
    });
    Tensor::new(vec![out_c, oh, ow], out)
}

/// Computes `bias[o] + rows[p]·weights[o]` for every (row, weight) pair, in index order.
fn dot_rows(
    rows: &[f32],
    len: usize,
    weights: &[f32],
    n_out: usize,
    bias: Option<&[f32]>,
    mut emit: impl FnMut(usize, usize, f32),
) {
    let n_rows = rows.len() / len;
    let mut o0 = 0;
    while o0 < n_out {
        let lanes = LANES.min(n_out - o0);
        let wblock = &weights[o0 * len..(o0 + lanes) * len];
        // lane-interleaved copy: weight j of lane l sits at j * LANES + l
        let mut interleaved = vec![0.0f64; if lanes == LANES { len * LANES } else { 0 }];
        if lanes == LANES {
            for l in 0..LANES {
                for j in 0..len {
                    interleaved[j * LANES + l] = wblock[l * len + j] as f64;
                }
            }
        }
        for p in 0..n_rows {
            let row = &rows[p * len..][..len];
            let mut acc = [0.0f64; LANES];
            for (l, a) in acc.iter_mut().enumerate().take(lanes) {
                *a = bias.map_or(0.0, |b| b[o0 + l] as f64);
            }
            if lanes == LANES {
                for (&xv, wj) in row.iter().zip(interleaved.chunks_exact(LANES)) {
                    let xv = xv as f64;
                    for (a, &wv) in acc.iter_mut().zip(wj) {
                        *a += wv * xv;
                    }
                }
            } else {
                for (l, a) in acc.iter_mut().enumerate().take(lanes) {
                    let wr = &wblock[l * len..][..len];
                    for (&wv, &xv) in wr.iter().zip(row) {
                        *a += wv as f64 * xv as f64;
                    }
                }
            }
            for (l, &a) in acc.iter().enumerate().take(lanes) {
                emit(p, o0 + l, a as f32);
            }
        }
        o0 += lanes;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Window pooling with the same output-size rule as [`conv2d`].
///
/// Max pooling treats padding as negative infinity; average pooling leaves padded
/// positions out of the divisor.
pub fn pool2d(input: &Tensor, kind: PoolKind, k: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if k == 0 || stride == 0 {
        return Err(Error::invalid(format!("pool kernel {k} and stride {stride} must be positive")));
    }
    if padding >= k {
        return Err(Error::invalid(format!("pool padding {padding} must be smaller than the kernel {k}")));
    }
    if k > h + 2 * padding || k > w + 2 * padding {
        return Err(Error::shape(format!("pool kernel {k} does not fit {h}×{w} with padding {padding}")));
    }
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let plane = &x[ci * h * w..][..h * w];
        for oy in 0..oh {
            let y0 = (oy * stride) as isize - padding as isize;
            let ys = y0.max(0) as usize..((y0 + k as isize).min(h as isize)) as usize;
            for ox in 0..ow {
                let x0 = (ox * stride) as isize - padding as isize;
                let xs = x0.max(0) as usize..((x0 + k as isize).min(w as isize)) as usize;
                let v = match kind {
                    PoolKind::Max => {
                        let mut m = f32::NEG_INFINITY;
                        for iy in ys.clone() {
                            for ix in xs.clone() {
                                m = m.max(plane[iy * w + ix]);
                            }
                        }
                        m
                    }
                    PoolKind::Avg => {
                        let mut s = 0.0f64;
                        let mut n = 0usize;
                        for iy in ys.clone() {
                            for ix in xs.clone() {
                                s += plane[iy * w + ix] as f64;
                                n += 1;
                            }
                        }
                        (s / n as f64) as f32
                    }
                };
                out.push(v);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Per-channel reduction over all spatial positions, `C×H×W` → `C×1×1`.
pub fn global_pool(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let hw = h * w;
    let out = input
        .data()
        .chunks_exact(hw)
        .map(|plane| match kind {
            PoolKind::Max => plane.iter().copied().fold(f32::NEG_INFINITY, f32::max),
            PoolKind::Avg => (plane.iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32,
        })
        .collect();
    Tensor::new(vec![c, 1, 1], out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Silu,
    LeakyRelu(f32),
    Mish,
    /// Exact form `x·Φ(x)` with the Gaussian CDF written through `erf`.
    Gelu,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        let v = x as f64;
        let y = match self {
            Activation::Identity => return x,
            Activation::Relu => return x.max(0.0),
            Activation::LeakyRelu(alpha) => return if x < 0.0 { alpha * x } else { x },
            Activation::Sigmoid => sigmoid(v),
            Activation::Silu => v * sigmoid(v),
            Activation::Mish => v * softplus(v).tanh(),
            Activation::Gelu => gelu(v),
        };
        y as f32
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn activation(kind: Activation, x: &Tensor) -> Tensor {
    x.map(|v| kind.apply(v))
}

/// Frozen batch-norm statistics and affine parameters, one entry per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub mean: Tensor,
    pub var: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f32,
}

impl BatchNormParams {
    /// mean 0, var 1, gamma 1, beta 0.
    pub fn identity(channels: usize, eps: f32) -> Self {
        Self {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], 1.0),
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            eps,
        }
    }
}

pub fn batch_norm_inference(x: &Tensor, bn: &BatchNormParams) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    for (name, t) in [("mean", &bn.mean), ("var", &bn.var), ("gamma", &bn.gamma), ("beta", &bn.beta)] {
        if t.shape() != [c] {
            return Err(Error::shape(format!("batch-norm {name} {:?} for {c} channels", t.shape())));
        }
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(c * hw);
    for ci in 0..c {
        let var = bn.var.data()[ci] as f64;
        if var < 0.0 {
            return Err(Error::invalid(format!("negative batch-norm variance in channel {ci}")));
        }
        let scale = bn.gamma.data()[ci] as f64 / (var + bn.eps as f64).sqrt();
        let mean = bn.mean.data()[ci] as f64;
        let beta = bn.beta.data()[ci] as f64;
        out.extend(x.data()[ci * hw..][..hw].iter().map(|&v| ((v as f64 - mean) * scale + beta) as f32));
    }
    Tensor::new(vec![c, h, w], out)
}

/// Normalizes over the last axis with the biased variance, then applies `gamma`, `beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let c = *x.shape().last().ok_or_else(|| Error::shape("layer norm on a rank-0 tensor"))?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "layer norm affine {:?}/{:?} for last axis {c}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(c) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for (i, &v) in row.iter().enumerate() {
            let n = (v as f64 - mean) * inv;
            out.push((n * gamma.data()[i] as f64 + beta.data()[i] as f64) as f32);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ([m, k], [k2, n]) = (a.shape(), b.shape()) else {
        return Err(Error::shape(format!("matmul needs matrices, got {:?} and {:?}", a.shape(), b.shape())));
    };
    if k != k2 {
        return Err(Error::shape(format!("matmul inner dimensions {k} and {k2} differ")));
    }
    let bt = b.transpose(&[1, 0])?;
    linear(a, &bt, None).and_then(|t| t.reshape(&[*m, *n]))
}

/// `x·Wᵀ + b` for `x: N×in`, `weight: out×in`, `bias: out`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let ([n, d_in], [d_out, w_in]) = (x.shape(), weight.shape()) else {
        return Err(Error::shape(format!(
            "linear needs N×in input and out×in weight, got {:?} and {:?}",
            x.shape(),
            weight.shape()
        )));
    };
    if d_in != w_in {
        return Err(Error::shape(format!("linear input width {d_in} vs weight width {w_in}")));
    }
    if let Some(b) = bias {
        if b.shape() != [*d_out] {
            return Err(Error::shape(format!("linear bias {:?} for {d_out} outputs", b.shape())));
        }
    }
    let (n, d_out) = (*n, *d_out);
    let mut out = vec![0.0f32; n * d_out];
    dot_rows(x.data(), *d_in, weight.data(), d_out, bias.map(|b| b.data()), |p, o, v| {
        out[p * d_out + o] = v;
    });
    Tensor::new(vec![n, d_out], out)
}

/// Softmax along the last axis with max subtraction.
///
/// Entries equal to negative infinity receive exactly zero weight; a row made
/// only of such entries yields all zeros.
pub fn softmax_lastaxis(x: &Tensor) -> Result<Tensor> {
    let c = *x.shape().last().ok_or_else(|| Error::shape("softmax on a rank-0 tensor"))?;
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(c) {
        softmax_row(row, &mut out);
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn softmax_row(row: &[f32], out: &mut Vec<f32>) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        out.extend(std::iter::repeat_n(0.0, row.len()));
        return;
    }
    let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let total: f64 = exps.iter().sum();
    out.extend(exps.iter().map(|e| (e / total) as f32));
}

/// Concatenates tensors of equal rank along `axis`; all other dimensions must agree.
pub fn concat(tensors: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = tensors.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::shape(format!("concat axis {axis} on rank {rank}")));
    }
    for t in tensors {
        let compatible =
            t.rank() == rank && t.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(Error::shape(format!("cannot concat {:?} with {:?} on axis {axis}", t.shape(), first.shape())));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total_axis: usize = tensors.iter().map(|t| t.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for t in tensors {
            let span = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * span..][..span]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total_axis;
    Tensor::new(shape, data)
}

pub fn upsample_nearest2x(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let mut out = Vec::with_capacity(c * 4 * h * w);
    for plane in x.data().chunks_exact(h * w) {
        for y in 0..2 * h {
            let src = &plane[(y / 2) * w..][..w];
            for xx in 0..2 * w {
                out.push(src[xx / 2]);
            }
        }
    }
    Tensor::new(vec![c, 2 * h, 2 * w], out)
}
