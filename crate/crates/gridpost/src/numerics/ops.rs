//! Differentiable array operations: 2-D convolution (cross-correlation
//! convention, zero padding), its adjoint (transposed convolution),
//! max-pooling, dense affine maps and embedding lookup.
//!
//! Convolution and its adjoint share one gather/scatter pair (`im2col_t` /
//! `col2im_t`), so the pair is adjoint by construction; the property test
//! in this module pins that down against indexing mistakes.

use super::layers::Activation;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Output extent of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::config("kernel and stride must be positive"));
    }
    if input + 2 * pad < kernel {
        return Err(Error::shape(format!(
            "padded input {} smaller than kernel {kernel}",
            input + 2 * pad
        )));
    }
    Ok((input + 2 * pad - kernel) / stride + 1)
}

/// Output extent of a transposed convolution along one axis.
pub fn tconv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::config("kernel and stride must be positive"));
    }
    if pad >= kernel {
        return Err(Error::config(format!(
            "transposed convolution requires padding {pad} < kernel {kernel}"
        )));
    }
    let out = (input as isize - 1) * stride as isize + kernel as isize - 2 * pad as isize;
    if out <= 0 {
        return Err(Error::config(format!(
            "transposed convolution output extent {out} is not positive"
        )));
    }
    Ok(out as usize)
}

/// Convolution geometry for one image shape; `oh`/`ow` refer to the
/// convolution output (which is the *input* side of the adjoint).
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(
        c: usize,
        h: usize,
        w: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        let oh = conv_out_dim(h, kernel.0, stride.0, pad.0)?;
        let ow = conv_out_dim(w, kernel.1, stride.1, pad.1)?;
        Ok(ConvGeom {
            c,
            h,
            w,
            kh: kernel.0,
            kw: kernel.1,
            sh: stride.0,
            sw: stride.1,
            ph: pad.0,
            pw: pad.1,
            oh,
            ow,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Gathers padded patches of `img` (C,H,W) into `out` laid out as
/// (C*kh*kw, oh*ow) row-major, one column per output position.
pub(crate) fn im2col_t<S: Scalar>(img: &[S], g: &ConvGeom, out: &mut [S]) {
    debug_assert_eq!(img.len(), g.c * g.h * g.w);
    debug_assert_eq!(out.len(), g.patch_len() * g.positions());
    let positions = g.positions();
    for ci in 0..g.c {
        let chan = &img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = (ci * g.kh + u) * g.kw + v;
                let out_row = &mut out[row * positions..(row + 1) * positions];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + u) as isize - g.ph as isize;
                    let base = oy * g.ow;
                    if iy < 0 || iy >= g.h as isize {
                        out_row[base..base + g.ow].fill(S::zero());
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + v) as isize - g.pw as isize;
                        out_row[base + ox] = if ix < 0 || ix >= g.w as isize {
                            S::zero()
                        } else {
                            chan[iy * g.w + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add adjoint of [`im2col_t`]: accumulates patch columns back into
/// an image buffer of shape (C,H,W).
pub(crate) fn col2im_t<S: Scalar>(cols: &[S], g: &ConvGeom, img: &mut [S]) {
    debug_assert_eq!(img.len(), g.c * g.h * g.w);
    debug_assert_eq!(cols.len(), g.patch_len() * g.positions());
    let positions = g.positions();
    for ci in 0..g.c {
        let chan = &mut img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = (ci * g.kh + u) * g.kw + v;
                let col_row = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + u) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let base = oy * g.ow;
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + v) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            chan[iy * g.w + ix as usize] += col_row[base + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_kernels4<S: Scalar>(kernels: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    match kernels.shape() {
        [a, b, kh, kw] => Ok((*a, *b, *kh, *kw)),
        other => Err(Error::shape(format!(
            "kernel tensor must be rank 4, got {other:?}"
        ))),
    }
}

fn check_image3<S: Scalar>(t: &Tensor<S>) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::shape(format!(
            "image tensor must be rank 3 (C,H,W), got {other:?}"
        ))),
    }
}

/// 2-D convolution of one sample: input (C,H,W), kernels (F,C,kh,kw),
/// bias (F), zero padding, no kernel flip.
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    kernels: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor<S>> {
    let (c, h, w) = check_image3(input)?;
    let (f, kc, kh, kw) = check_kernels4(kernels)?;
    if kc != c {
        return Err(Error::shape(format!(
            "input has {c} channels but kernels expect {kc}"
        )));
    }
    if bias.len() != f {
        return Err(Error::shape(format!(
            "bias length {} does not match {f} filters",
            bias.len()
        )));
    }
    let g = ConvGeom::new(c, h, w, (kh, kw), stride, padding)?;
    let mut cols = vec![S::zero(); g.patch_len() * g.positions()];
    im2col_t(input.data(), &g, &mut cols);
    let mut out = vec![S::zero(); f * g.positions()];
    // out(F, oh*ow) = kernels(F, C*kh*kw) * cols(C*kh*kw, oh*ow)
    S::gemm(
        f,
        g.patch_len(),
        g.positions(),
        S::one(),
        kernels.data(),
        g.patch_len() as isize,
        1,
        &cols,
        g.positions() as isize,
        1,
        S::zero(),
        &mut out,
    );
    for (fi, chunk) in out.chunks_exact_mut(g.positions()).enumerate() {
        let b = bias.data()[fi];
        for v in chunk {
            *v += b;
        }
    }
    Tensor::new(vec![f, g.oh, g.ow], out)
}

/// Transposed 2-D convolution of one sample: the adjoint of
/// [`conv2d_forward`] with the same kernel geometry. Input (Cin,H,W),
/// kernels (Cin,Cout,kh,kw), bias (Cout); output extent
/// `(H-1)*stride - 2*pad + kernel`.
pub fn tconv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    kernels: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor<S>> {
    let (cin, h, w) = check_image3(input)?;
    let (ka, cout, kh, kw) = check_kernels4(kernels)?;
    if ka != cin {
        return Err(Error::shape(format!(
            "input has {cin} channels but kernels expect {ka}"
        )));
    }
    if bias.len() != cout {
        return Err(Error::shape(format!(
            "bias length {} does not match {cout} output channels",
            bias.len()
        )));
    }
    let oh = tconv_out_dim(h, kh, stride.0, padding.0)?;
    let ow = tconv_out_dim(w, kw, stride.1, padding.1)?;
    // Viewed through the adjoint: a convolution maps (Cout,oh,ow) -> (Cin,h,w).
    let g = ConvGeom::new(cout, oh, ow, (kh, kw), stride, padding)?;
    debug_assert_eq!((g.oh, g.ow), (h, w));
    let patch = g.patch_len();
    let positions = g.positions();
    let mut cols = vec![S::zero(); patch * positions];
    // cols(Cout*kh*kw, h*w) = kernels^T(Cout*kh*kw, Cin) * input(Cin, h*w)
    S::gemm(
        patch,
        cin,
        positions,
        S::one(),
        kernels.data(),
        1,
        patch as isize,
        input.data(),
        positions as isize,
        1,
        S::zero(),
        &mut cols,
    );
    let mut out = vec![S::zero(); cout * oh * ow];
    col2im_t(&cols, &g, &mut out);
    for (ci, chunk) in out.chunks_exact_mut(oh * ow).enumerate() {
        let b = bias.data()[ci];
        for v in chunk {
            *v += b;
        }
    }
    Tensor::new(vec![cout, oh, ow], out)
}

/// Max-pooling of one sample (C,H,W) with a rectangular window. Returns the
/// pooled tensor and the flat argmax index of every output cell, which the
/// backward pass routes gradients through.
pub fn maxpool2d<S: Scalar>(
    input: &Tensor<S>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<S>, Vec<u32>)> {
    let (c, h, w) = check_image3(input)?;
    if window.0 > h || window.1 > w {
        return Err(Error::shape(format!(
            "pool window {window:?} larger than input {h}x{w}"
        )));
    }
    if window == stride && ((h - window.0) % stride.0 != 0 || (w - window.1) % stride.1 != 0) {
        return Err(Error::shape(format!(
            "input {h}x{w} not divisible by pool stride {stride:?}"
        )));
    }
    let oh = (h - window.0) / stride.0 + 1;
    let ow = (w - window.1) / stride.1 + 1;
    let mut out = vec![S::zero(); c * oh * ow];
    let mut argmax = vec![0u32; c * oh * ow];
    for ci in 0..c {
        let chan = &input.data()[ci * h * w..(ci + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = S::neg_infinity();
                let mut best_idx = 0usize;
                for u in 0..window.0 {
                    let iy = oy * stride.0 + u;
                    for v in 0..window.1 {
                        let ix = ox * stride.1 + v;
                        let val = chan[iy * w + ix];
                        if val > best {
                            best = val;
                            best_idx = iy * w + ix;
                        }
                    }
                }
                let oi = (ci * oh + oy) * ow + ox;
                out[oi] = best;
                argmax[oi] = (ci * h * w + best_idx) as u32;
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

/// Dense affine map of one sample: `activation(W x + b)` with W of shape
/// (m,n), x of length n.
pub fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    activation: Activation,
) -> Result<Tensor<S>> {
    let (m, n) = match weights.shape() {
        [m, n] => (*m, *n),
        other => {
            return Err(Error::shape(format!(
                "weight matrix must be rank 2, got {other:?}"
            )))
        }
    };
    if input.len() != n || bias.len() != m {
        return Err(Error::shape(format!(
            "dense shapes disagree: W {m}x{n}, x {}, b {}",
            input.len(),
            bias.len()
        )));
    }
    let mut out = bias.data().to_vec();
    S::gemm(
        m,
        n,
        1,
        S::one(),
        weights.data(),
        n as isize,
        1,
        input.data(),
        1,
        1,
        S::one(),
        &mut out,
    );
    for v in &mut out {
        *v = activation.apply(*v);
    }
    Tensor::new(vec![m], out)
}

/// Row gather: `table` (V,E), `indices` (B) -> (B,E).
pub fn embedding_forward<S: Scalar>(table: &Tensor<S>, indices: &[usize]) -> Result<Tensor<S>> {
    let (v, e) = match table.shape() {
        [v, e] => (*v, *e),
        other => {
            return Err(Error::shape(format!(
                "embedding table must be rank 2, got {other:?}"
            )))
        }
    };
    let mut out = Vec::with_capacity(indices.len() * e);
    for &idx in indices {
        if idx >= v {
            return Err(Error::shape(format!(
                "embedding index {idx} out of range for {v} rows"
            )));
        }
        out.extend_from_slice(&table.data()[idx * e..(idx + 1) * e]);
    }
    Tensor::new(vec![indices.len(), e], out)
}

/// Scatter-add adjoint of [`embedding_forward`].
pub fn embedding_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    indices: &[usize],
    table_rows: usize,
) -> Result<Tensor<S>> {
    let e = match grad_out.shape() {
        [b, e] if *b == indices.len() => *e,
        other => {
            return Err(Error::shape(format!(
                "embedding gradient shape {other:?} does not match {} indices",
                indices.len()
            )))
        }
    };
    let mut grad = Tensor::zeros(vec![table_rows, e])?;
    for (row, &idx) in indices.iter().enumerate() {
        let src = &grad_out.data()[row * e..(row + 1) * e];
        let dst = &mut grad.data_mut()[idx * e..(idx + 1) * e];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += *s;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_scaling_kernel() {
        let input = Tensor::filled(vec![1, 3, 3], 1.0f64).unwrap();
        let kernels = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let bias = Tensor::zeros(vec![1]).unwrap();
        let out = conv2d_forward(&input, &kernels, &bias, (1, 1), (0, 0)).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_hand_sum() {
        let input = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernels = Tensor::filled(vec![1, 1, 2, 2], 1.0).unwrap();
        let bias = Tensor::zeros(vec![1]).unwrap();
        let out = conv2d_forward(&input, &kernels, &bias, (1, 1), (0, 0)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data()[0], 10.0);
    }

    #[test]
    fn conv_preserves_shape_with_padding() {
        let mut rng = stream(1, "test");
        let input = random_tensor(vec![1, 81, 81], &mut rng);
        let kernels = random_tensor(vec![16, 1, 3, 3], &mut rng);
        let bias = random_tensor(vec![16], &mut rng);
        let out = conv2d_forward(&input, &kernels, &bias, (1, 1), (1, 1)).unwrap();
        assert_eq!(out.shape(), &[16, 81, 81]);
    }

    #[test]
    fn conv_channel_mismatch_is_error() {
        let input = Tensor::<f64>::zeros(vec![2, 4, 4]).unwrap();
        let kernels = Tensor::zeros(vec![1, 3, 3, 3]).unwrap();
        let bias = Tensor::zeros(vec![1]).unwrap();
        assert!(conv2d_forward(&input, &kernels, &bias, (1, 1), (0, 0)).is_err());
    }

    #[test]
    fn tconv_scalar_adjoint() {
        let input = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let kernels = Tensor::new(vec![1, 1, 1, 1], vec![0.5]).unwrap();
        let bias = Tensor::zeros(vec![1]).unwrap();
        let out = tconv2d_forward(&input, &kernels, &bias, (1, 1), (0, 0)).unwrap();
        assert_eq!(out.data(), &[1.5]);
    }

    #[test]
    fn tconv_upsamples_by_three() {
        // (3-1)*3 - 2*3 + 9 = 9
        assert_eq!(tconv_out_dim(3, 9, 3, 3).unwrap(), 9);
        assert_eq!(tconv_out_dim(9, 9, 3, 3).unwrap(), 27);
        assert_eq!(tconv_out_dim(27, 9, 3, 3).unwrap(), 81);
    }

    #[test]
    fn tconv_rejects_bad_geometry() {
        assert!(tconv_out_dim(1, 3, 1, 3).is_err()); // pad >= kernel
    }

    #[test]
    fn conv_tconv_adjoint_identity() {
        // <conv(x), y> == <x, tconv(y)> for random tensors with transposed
        // geometry, shared kernels, zero bias.
        let mut rng = stream(42, "adjoint");
        // Geometries where conv output size determines the input size, so
        // the transposed map lands back in the original space.
        for &(c, f, h, w, k, s, p) in &[
            (1usize, 2usize, 7usize, 7usize, 3usize, 1usize, 1usize),
            (3, 4, 9, 9, 9, 3, 3),
            (2, 1, 9, 7, 3, 2, 0),
            (2, 3, 11, 11, 5, 2, 2),
        ] {
            let x = random_tensor(vec![c, h, w], &mut rng);
            let kernels = random_tensor(vec![f, c, k, k], &mut rng);
            let bias_f = Tensor::zeros(vec![f]).unwrap();
            let bias_c = Tensor::zeros(vec![c]).unwrap();
            let cx = conv2d_forward(&x, &kernels, &bias_f, (s, s), (p, p)).unwrap();
            let y = random_tensor(cx.shape().to_vec(), &mut rng);
            let ty = tconv2d_forward(&y, &kernels, &bias_c, (s, s), (p, p)).unwrap();
            assert_eq!(ty.shape(), x.shape());
            let lhs = super::super::tensor::dot(&cx, &y);
            let rhs = super::super::tensor::dot(&x, &ty);
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn maxpool_basics() {
        let input = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, argmax) = maxpool2d(&input, (2, 2), (2, 2)).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(argmax, vec![3]);

        let constant = Tensor::filled(vec![16, 81, 81], 0.7f64).unwrap();
        let (pooled, _) = maxpool2d(&constant, (3, 3), (3, 3)).unwrap();
        assert_eq!(pooled.shape(), &[16, 27, 27]);
        assert!(pooled.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn maxpool_window_too_large() {
        let input = Tensor::<f64>::zeros(vec![1, 2, 2]).unwrap();
        assert!(maxpool2d(&input, (3, 3), (3, 3)).is_err());
    }

    #[test]
    fn dense_identity_and_relu_clamp() {
        let x = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = Tensor::zeros(vec![2]).unwrap();
        let out = dense_forward(&x, &eye, &zero, Activation::Linear).unwrap();
        assert_eq!(out.data(), x.data());

        let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![-3.0]).unwrap();
        let x = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        let out = dense_forward(&x, &w, &b, Activation::Relu).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn dense_sigmoid_value() {
        let w = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let b = Tensor::new(vec![1], vec![1.0]).unwrap();
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let out = dense_forward(&x, &w, &b, Activation::Sigmoid).unwrap();
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((out.data()[0] - expect).abs() < 1e-12);
        assert!((out.data()[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn embedding_gather_scatter() {
        let table = Tensor::new(vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let out = embedding_forward(&table, &[2, 0]).unwrap();
        assert_eq!(out.data(), &[4.0, 5.0, 0.0, 1.0]);
        let grad = embedding_backward(&out, &[2, 0], 3).unwrap();
        assert_eq!(grad.data(), &[0.0, 1.0, 0.0, 0.0, 4.0, 5.0]);
        assert!(embedding_forward(&table, &[3]).is_err());
    }
}
