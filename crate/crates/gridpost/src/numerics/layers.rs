//! Trainable layers operating on batched tensors (leading dim = batch).
//!
//! Dense layers take (B,n); spatial layers take (B,C,H,W). `Flatten` and
//! `Reshape` bridge between the two. Forward passes are pure; the backward
//! pass consumes the layer input/output kept by the network trace plus the
//! small per-layer cache returned by `forward`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvGeom};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
            Activation::Linear => x,
            Activation::Sigmoid => {
                // Evaluate on the negative half-line to avoid exp overflow.
                if x >= S::zero() {
                    S::one() / (S::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (S::one() + e)
                }
            }
        }
    }

    /// Derivative expressed through pre-activation `x` and output `y`.
    fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Linear => S::one(),
            Activation::Sigmoid => y * (S::one() - y),
        }
    }
}

/// Declarative layer description; `build` resolves it against the incoming
/// shape and initializes parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        units: usize,
        activation: Activation,
    },
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        activation: Activation,
    },
    TConv2d {
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        activation: Activation,
    },
    MaxPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Flatten,
    Reshape {
        to: Vec<usize>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense<S> {
    pub weights: Tensor<S>, // (m, n)
    pub bias: Tensor<S>,    // (m)
    pub activation: Activation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conv2d<S> {
    pub kernels: Tensor<S>, // (F, C, kh, kw)
    pub bias: Tensor<S>,    // (F)
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub activation: Activation,
    in_shape: (usize, usize, usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TConv2d<S> {
    pub kernels: Tensor<S>, // (Cin, Cout, kh, kw)
    pub bias: Tensor<S>,    // (Cout)
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub activation: Activation,
    in_shape: (usize, usize, usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    in_shape: (usize, usize, usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Layer<S> {
    Dense(Dense<S>),
    Conv2d(Conv2d<S>),
    TConv2d(TConv2d<S>),
    MaxPool2d(MaxPool2d),
    Flatten { from: Vec<usize> },
    Reshape { to: Vec<usize> },
}

/// Per-layer state carried from forward to backward.
pub enum Cache {
    None,
    PoolArgmax(Vec<u32>),
}

/// Uniform fan-based initialization with limit sqrt(6/(fan_in+fan_out)).
fn uniform_init<S: Scalar>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| S::from_f64(rng.random_range(-limit..limit)))
        .collect();
    Tensor::new(shape, data).expect("init shape is positive")
}

fn batch_of<S: Scalar>(t: &Tensor<S>) -> Result<usize> {
    t.shape()
        .first()
        .copied()
        .ok_or_else(|| Error::shape("batched tensor must have a leading batch dim"))
}

impl<S: Scalar> Layer<S> {
    /// Resolves `spec` against the per-sample input shape (no batch dim),
    /// drawing parameters from `rng`. Returns the layer and its per-sample
    /// output shape.
    pub fn build(spec: &LayerSpec, in_shape: &[usize], rng: &mut impl Rng) -> Result<(Self, Vec<usize>)> {
        match spec {
            LayerSpec::Dense { units, activation } => {
                let n = match in_shape {
                    [n] => *n,
                    other => {
                        return Err(Error::config(format!(
                            "dense layer expects a flat input, got {other:?}"
                        )))
                    }
                };
                if *units == 0 {
                    return Err(Error::config("dense layer needs at least one unit"));
                }
                let weights = uniform_init(vec![*units, n], n, *units, rng);
                let bias = Tensor::zeros(vec![*units])?;
                Ok((
                    Layer::Dense(Dense {
                        weights,
                        bias,
                        activation: *activation,
                    }),
                    vec![*units],
                ))
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
                activation,
            } => {
                let (c, h, w) = expect_chw(in_shape)?;
                let oh = ops::conv_out_dim(h, kernel.0, stride.0, padding.0)?;
                let ow = ops::conv_out_dim(w, kernel.1, stride.1, padding.1)?;
                let fan_in = c * kernel.0 * kernel.1;
                let fan_out = filters * kernel.0 * kernel.1;
                let kernels = uniform_init(vec![*filters, c, kernel.0, kernel.1], fan_in, fan_out, rng);
                let bias = Tensor::zeros(vec![*filters])?;
                Ok((
                    Layer::Conv2d(Conv2d {
                        kernels,
                        bias,
                        stride: *stride,
                        padding: *padding,
                        activation: *activation,
                        in_shape: (c, h, w),
                    }),
                    vec![*filters, oh, ow],
                ))
            }
            LayerSpec::TConv2d {
                filters,
                kernel,
                stride,
                padding,
                activation,
            } => {
                let (c, h, w) = expect_chw(in_shape)?;
                let oh = ops::tconv_out_dim(h, kernel.0, stride.0, padding.0)?;
                let ow = ops::tconv_out_dim(w, kernel.1, stride.1, padding.1)?;
                let fan_in = c * kernel.0 * kernel.1;
                let fan_out = filters * kernel.0 * kernel.1;
                let kernels = uniform_init(vec![c, *filters, kernel.0, kernel.1], fan_in, fan_out, rng);
                let bias = Tensor::zeros(vec![*filters])?;
                Ok((
                    Layer::TConv2d(TConv2d {
                        kernels,
                        bias,
                        stride: *stride,
                        padding: *padding,
                        activation: *activation,
                        in_shape: (c, h, w),
                    }),
                    vec![*filters, oh, ow],
                ))
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let (c, h, w) = expect_chw(in_shape)?;
                if window.0 > h || window.1 > w {
                    return Err(Error::config(format!(
                        "pool window {window:?} larger than input {h}x{w}"
                    )));
                }
                if window == stride && ((h - window.0) % stride.0 != 0 || (w - window.1) % stride.1 != 0)
                {
                    return Err(Error::config(format!(
                        "input {h}x{w} not divisible by pool stride {stride:?}"
                    )));
                }
                let oh = (h - window.0) / stride.0 + 1;
                let ow = (w - window.1) / stride.1 + 1;
                Ok((
                    Layer::MaxPool2d(MaxPool2d {
                        window: *window,
                        stride: *stride,
                        in_shape: (c, h, w),
                    }),
                    vec![c, oh, ow],
                ))
            }
            LayerSpec::Flatten => {
                let len: usize = in_shape.iter().product();
                Ok((
                    Layer::Flatten {
                        from: in_shape.to_vec(),
                    },
                    vec![len],
                ))
            }
            LayerSpec::Reshape { to } => {
                let len: usize = in_shape.iter().product();
                let target: usize = to.iter().product();
                if len != target {
                    return Err(Error::config(format!(
                        "cannot reshape {in_shape:?} to {to:?}"
                    )));
                }
                Ok((Layer::Reshape { to: to.clone() }, to.clone()))
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor<S>> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Conv2d(l) => vec![&l.kernels, &l.bias],
            Layer::TConv2d(l) => vec![&l.kernels, &l.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.kernels, &mut l.bias],
            Layer::TConv2d(l) => vec![&mut l.kernels, &mut l.bias],
            _ => vec![],
        }
    }

    /// True when the layer applies a relu, whose kinks the gradient checker
    /// must detect.
    pub fn has_relu(&self) -> bool {
        matches!(
            self,
            Layer::Dense(Dense { activation: Activation::Relu, .. })
                | Layer::Conv2d(Conv2d { activation: Activation::Relu, .. })
                | Layer::TConv2d(TConv2d { activation: Activation::Relu, .. })
        )
    }

    /// Batched forward. Returns the output and the cache for backward.
    pub fn forward(&self, input: &Tensor<S>) -> Result<(Tensor<S>, Cache)> {
        let batch = batch_of(input)?;
        match self {
            Layer::Dense(l) => {
                let (m, n) = (l.weights.shape()[0], l.weights.shape()[1]);
                if input.shape() != [batch, n] {
                    return Err(Error::shape(format!(
                        "dense input {:?} does not match weights {m}x{n}",
                        input.shape()
                    )));
                }
                let mut out = vec![S::zero(); batch * m];
                for row in out.chunks_exact_mut(m) {
                    row.copy_from_slice(l.bias.data());
                }
                // out(B,m) += x(B,n) * W^T(n,m)
                S::gemm(
                    batch,
                    n,
                    m,
                    S::one(),
                    input.data(),
                    n as isize,
                    1,
                    l.weights.data(),
                    1,
                    n as isize,
                    S::one(),
                    &mut out,
                );
                let pre = Tensor::new(vec![batch, m], out)?;
                Ok((pre.map(|v| l.activation.apply(v)), Cache::None))
            }
            Layer::Conv2d(l) => {
                let (c, h, w) = l.in_shape;
                if input.shape() != [batch, c, h, w] {
                    return Err(Error::shape(format!(
                        "conv input {:?} does not match expected ({c},{h},{w})",
                        input.shape()
                    )));
                }
                let f = l.kernels.shape()[0];
                let g = ConvGeom::new(c, h, w, (l.kernels.shape()[2], l.kernels.shape()[3]), l.stride, l.padding)?;
                let (patch, positions) = (g.patch_len(), g.positions());
                let mut cols = vec![S::zero(); patch * positions];
                let mut out = vec![S::zero(); batch * f * positions];
                let sample = c * h * w;
                for b in 0..batch {
                    im2col_sample(&input.data()[b * sample..(b + 1) * sample], &g, &mut cols);
                    let dst = &mut out[b * f * positions..(b + 1) * f * positions];
                    S::gemm(
                        f,
                        patch,
                        positions,
                        S::one(),
                        l.kernels.data(),
                        patch as isize,
                        1,
                        &cols,
                        positions as isize,
                        1,
                        S::zero(),
                        dst,
                    );
                    for (fi, chunk) in dst.chunks_exact_mut(positions).enumerate() {
                        let bias = l.bias.data()[fi];
                        for v in chunk {
                            *v += bias;
                        }
                    }
                }
                let pre = Tensor::new(vec![batch, f, g.oh, g.ow], out)?;
                Ok((pre.map(|v| l.activation.apply(v)), Cache::None))
            }
            Layer::TConv2d(l) => {
                let (cin, h, w) = l.in_shape;
                if input.shape() != [batch, cin, h, w] {
                    return Err(Error::shape(format!(
                        "tconv input {:?} does not match expected ({cin},{h},{w})",
                        input.shape()
                    )));
                }
                let cout = l.kernels.shape()[1];
                let (kh, kw) = (l.kernels.shape()[2], l.kernels.shape()[3]);
                let oh = ops::tconv_out_dim(h, kh, l.stride.0, l.padding.0)?;
                let ow = ops::tconv_out_dim(w, kw, l.stride.1, l.padding.1)?;
                let g = ConvGeom::new(cout, oh, ow, (kh, kw), l.stride, l.padding)?;
                let (patch, positions) = (g.patch_len(), g.positions());
                let mut cols = vec![S::zero(); patch * positions];
                let mut out = vec![S::zero(); batch * cout * oh * ow];
                let in_sample = cin * h * w;
                let out_sample = cout * oh * ow;
                for b in 0..batch {
                    S::gemm(
                        patch,
                        cin,
                        positions,
                        S::one(),
                        l.kernels.data(),
                        1,
                        patch as isize,
                        &input.data()[b * in_sample..(b + 1) * in_sample],
                        positions as isize,
                        1,
                        S::zero(),
                        &mut cols,
                    );
                    let dst = &mut out[b * out_sample..(b + 1) * out_sample];
                    col2im_sample(&cols, &g, dst);
                    for (ci, chunk) in dst.chunks_exact_mut(oh * ow).enumerate() {
                        let bias = l.bias.data()[ci];
                        for v in chunk {
                            *v += bias;
                        }
                    }
                }
                let pre = Tensor::new(vec![batch, cout, oh, ow], out)?;
                Ok((pre.map(|v| l.activation.apply(v)), Cache::None))
            }
            Layer::MaxPool2d(l) => {
                let (c, h, w) = l.in_shape;
                if input.shape() != [batch, c, h, w] {
                    return Err(Error::shape(format!(
                        "pool input {:?} does not match expected ({c},{h},{w})",
                        input.shape()
                    )));
                }
                let sample = c * h * w;
                let mut outs = Vec::with_capacity(batch);
                let mut argmax = Vec::new();
                let mut oh = 0;
                let mut ow = 0;
                for b in 0..batch {
                    let view = Tensor::new(
                        vec![c, h, w],
                        input.data()[b * sample..(b + 1) * sample].to_vec(),
                    )?;
                    let (pooled, idx) = ops::maxpool2d(&view, l.window, l.stride)?;
                    oh = pooled.shape()[1];
                    ow = pooled.shape()[2];
                    argmax.extend(idx);
                    outs.extend_from_slice(pooled.data());
                }
                Ok((
                    Tensor::new(vec![batch, c, oh, ow], outs)?,
                    Cache::PoolArgmax(argmax),
                ))
            }
            Layer::Flatten { from } => {
                let len: usize = from.iter().product();
                let out = input.clone().reshape(vec![batch, len])?;
                Ok((out, Cache::None))
            }
            Layer::Reshape { to } => {
                let mut shape = vec![batch];
                shape.extend_from_slice(to);
                Ok((input.clone().reshape(shape)?, Cache::None))
            }
        }
    }

    /// Batched backward: given the layer input, output, cache and upstream
    /// gradient, returns the input gradient and parameter gradients (in the
    /// order of [`Layer::params`]).
    pub fn backward(
        &self,
        input: &Tensor<S>,
        output: &Tensor<S>,
        cache: &Cache,
        grad_out: &Tensor<S>,
    ) -> Result<(Tensor<S>, Vec<Tensor<S>>)> {
        if grad_out.shape() != output.shape() {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match output {:?}",
                grad_out.shape(),
                output.shape()
            )));
        }
        let batch = batch_of(input)?;
        match self {
            Layer::Dense(l) => {
                let (m, n) = (l.weights.shape()[0], l.weights.shape()[1]);
                let gy = activation_grad(l.activation, output, grad_out);
                // dW(m,n) = gy^T(m,B) * x(B,n)
                let mut gw = vec![S::zero(); m * n];
                S::gemm(
                    m,
                    batch,
                    n,
                    S::one(),
                    gy.data(),
                    1,
                    m as isize,
                    input.data(),
                    n as isize,
                    1,
                    S::zero(),
                    &mut gw,
                );
                let mut gb = vec![S::zero(); m];
                for row in gy.data().chunks_exact(m) {
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += *v;
                    }
                }
                // dx(B,n) = gy(B,m) * W(m,n)
                let mut gx = vec![S::zero(); batch * n];
                S::gemm(
                    batch,
                    m,
                    n,
                    S::one(),
                    gy.data(),
                    m as isize,
                    1,
                    l.weights.data(),
                    n as isize,
                    1,
                    S::zero(),
                    &mut gx,
                );
                Ok((
                    Tensor::new(vec![batch, n], gx)?,
                    vec![Tensor::new(vec![m, n], gw)?, Tensor::new(vec![m], gb)?],
                ))
            }
            Layer::Conv2d(l) => {
                let (c, h, w) = l.in_shape;
                let f = l.kernels.shape()[0];
                let (kh, kw) = (l.kernels.shape()[2], l.kernels.shape()[3]);
                let g = ConvGeom::new(c, h, w, (kh, kw), l.stride, l.padding)?;
                let (patch, positions) = (g.patch_len(), g.positions());
                let gy = activation_grad(l.activation, output, grad_out);
                let sample_in = c * h * w;
                let sample_out = f * positions;
                let mut gk = vec![S::zero(); f * patch];
                let mut gb = vec![S::zero(); f];
                let mut gx = vec![S::zero(); batch * sample_in];
                let mut cols = vec![S::zero(); patch * positions];
                let mut dcols = vec![S::zero(); patch * positions];
                for b in 0..batch {
                    let x_b = &input.data()[b * sample_in..(b + 1) * sample_in];
                    let gy_b = &gy.data()[b * sample_out..(b + 1) * sample_out];
                    im2col_sample(x_b, &g, &mut cols);
                    // gk(F,patch) += gy_b(F,positions) * cols^T(positions,patch)
                    S::gemm(
                        f,
                        positions,
                        patch,
                        S::one(),
                        gy_b,
                        positions as isize,
                        1,
                        &cols,
                        1,
                        positions as isize,
                        S::one(),
                        &mut gk,
                    );
                    for (fi, chunk) in gy_b.chunks_exact(positions).enumerate() {
                        for v in chunk {
                            gb[fi] += *v;
                        }
                    }
                    // dcols(patch,positions) = k^T(patch,F) * gy_b(F,positions)
                    S::gemm(
                        patch,
                        f,
                        positions,
                        S::one(),
                        l.kernels.data(),
                        1,
                        patch as isize,
                        gy_b,
                        positions as isize,
                        1,
                        S::zero(),
                        &mut dcols,
                    );
                    col2im_sample(&dcols, &g, &mut gx[b * sample_in..(b + 1) * sample_in]);
                }
                Ok((
                    Tensor::new(vec![batch, c, h, w], gx)?,
                    vec![
                        Tensor::new(vec![f, c, kh, kw], gk)?,
                        Tensor::new(vec![f], gb)?,
                    ],
                ))
            }
            Layer::TConv2d(l) => {
                let (cin, h, w) = l.in_shape;
                let cout = l.kernels.shape()[1];
                let (kh, kw) = (l.kernels.shape()[2], l.kernels.shape()[3]);
                let oh = ops::tconv_out_dim(h, kh, l.stride.0, l.padding.0)?;
                let ow = ops::tconv_out_dim(w, kw, l.stride.1, l.padding.1)?;
                let g = ConvGeom::new(cout, oh, ow, (kh, kw), l.stride, l.padding)?;
                let (patch, positions) = (g.patch_len(), g.positions());
                let gy = activation_grad(l.activation, output, grad_out);
                let sample_in = cin * h * w;
                let sample_out = cout * oh * ow;
                let mut gk = vec![S::zero(); cin * patch];
                let mut gb = vec![S::zero(); cout];
                let mut gx = vec![S::zero(); batch * sample_in];
                let mut cols = vec![S::zero(); patch * positions];
                for b in 0..batch {
                    let x_b = &input.data()[b * sample_in..(b + 1) * sample_in];
                    let gy_b = &gy.data()[b * sample_out..(b + 1) * sample_out];
                    for (ci, chunk) in gy_b.chunks_exact(oh * ow).enumerate() {
                        for v in chunk {
                            gb[ci] += *v;
                        }
                    }
                    im2col_sample(gy_b, &g, &mut cols);
                    // gx(cin,positions) = k(cin,patch) * cols(patch,positions)
                    S::gemm(
                        cin,
                        patch,
                        positions,
                        S::one(),
                        l.kernels.data(),
                        patch as isize,
                        1,
                        &cols,
                        positions as isize,
                        1,
                        S::zero(),
                        &mut gx[b * sample_in..(b + 1) * sample_in],
                    );
                    // gk(cin,patch) += x_b(cin,positions) * cols^T(positions,patch)
                    S::gemm(
                        cin,
                        positions,
                        patch,
                        S::one(),
                        x_b,
                        positions as isize,
                        1,
                        &cols,
                        1,
                        positions as isize,
                        S::one(),
                        &mut gk,
                    );
                }
                Ok((
                    Tensor::new(vec![batch, cin, h, w], gx)?,
                    vec![
                        Tensor::new(vec![cin, cout, kh, kw], gk)?,
                        Tensor::new(vec![cout], gb)?,
                    ],
                ))
            }
            Layer::MaxPool2d(l) => {
                let Cache::PoolArgmax(argmax) = cache else {
                    return Err(Error::numeric("pool backward requires argmax cache"));
                };
                let (c, h, w) = l.in_shape;
                let sample_in = c * h * w;
                let per_sample = argmax.len() / batch;
                let mut gx = vec![S::zero(); batch * sample_in];
                for b in 0..batch {
                    let idx = &argmax[b * per_sample..(b + 1) * per_sample];
                    let go = &grad_out.data()[b * per_sample..(b + 1) * per_sample];
                    let dst = &mut gx[b * sample_in..(b + 1) * sample_in];
                    for (i, g) in idx.iter().zip(go) {
                        dst[*i as usize] += *g;
                    }
                }
                Ok((Tensor::new(vec![batch, c, h, w], gx)?, vec![]))
            }
            Layer::Flatten { from } => {
                let mut shape = vec![batch];
                shape.extend_from_slice(from);
                Ok((grad_out.clone().reshape(shape)?, vec![]))
            }
            Layer::Reshape { .. } => {
                Ok((grad_out.clone().reshape(input.shape().to_vec())?, vec![]))
            }
        }
    }
}

fn expect_chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::config(format!(
            "spatial layer expects a (C,H,W) input, got {other:?}"
        ))),
    }
}

fn im2col_sample<S: Scalar>(img: &[S], g: &ConvGeom, cols: &mut [S]) {
    ops::im2col_t(img, g, cols);
}

fn col2im_sample<S: Scalar>(cols: &[S], g: &ConvGeom, img: &mut [S]) {
    img.fill(S::zero());
    ops::col2im_t(cols, g, img);
}

/// Chains the upstream gradient through an activation. Both relu and sigmoid
/// derivatives are expressible through the *output*: relu output is positive
/// exactly where the pre-activation was.
fn activation_grad<S: Scalar>(
    activation: Activation,
    output: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Tensor<S> {
    match activation {
        Activation::Linear => grad_out.clone(),
        Activation::Relu => {
            let mut gy = grad_out.clone();
            for (g, y) in gy.data_mut().iter_mut().zip(output.data()) {
                if *y <= S::zero() {
                    *g = S::zero();
                }
            }
            gy
        }
        Activation::Sigmoid => {
            let mut gy = grad_out.clone();
            for (g, y) in gy.data_mut().iter_mut().zip(output.data()) {
                *g = *g * activation.derivative(S::zero(), *y);
            }
            gy
        }
    }
}
