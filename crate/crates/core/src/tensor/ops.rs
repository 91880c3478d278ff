//! Forward and backward kernels for the layer types used by the models:
//! 2-D convolution, max pooling, fully-connected, ReLU.
//!
//! Convolutions are lowered per sample to `im2col` followed by a dense
//! matrix product. All loops run in a fixed order so results are
//! bit-reproducible.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Output extent of a strided, zero-padded window along one axis.
pub fn window_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av != S::zero() {
                axpy(av, &b[kk * n..(kk + 1) * n], crow);
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
fn gemm_abt_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for kk in 0..k {
            c[i * k + kk] += dot(arow, &b[kk * n..(kk + 1) * n]);
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
fn gemm_atb_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av != S::zero() {
                axpy(av, brow, &mut c[kk * n..(kk + 1) * n]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeom {
    fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 {
            return Err(Error::InvalidArgument {
                op: "conv2d",
                reason: format!("expected 4-d input and weight, got {input:?} and {weight:?}"),
            });
        }
        if input[1] != weight[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: vec![weight[1]],
                got: vec![input[1]],
            });
        }
        let oh = window_out_dim(input[2], weight[2], stride, padding);
        let ow = window_out_dim(input[3], weight[3], stride, padding);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::InvalidArgument {
                op: "conv2d",
                reason: format!(
                    "kernel {}x{} stride {stride} padding {padding} does not fit {}x{}",
                    weight[2], weight[3], input[2], input[3]
                ),
            });
        };
        Ok(Self {
            c_in: input[1],
            h: input[2],
            w: input[3],
            c_out: weight[0],
            kh: weight[2],
            kw: weight[3],
            oh,
            ow,
            stride,
            padding,
        })
    }

    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// Visit every (column-buffer index, image index) pair that lands inside
    /// the unpadded image.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let p = self.p();
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    for oi in 0..self.oh {
                        let ii = (oi * self.stride + ki) as isize - self.padding as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        for oj in 0..self.ow {
                            let jj = (oj * self.stride + kj) as isize - self.padding as isize;
                            if jj < 0 || jj >= self.w as isize {
                                continue;
                            }
                            f(
                                row * p + oi * self.ow + oj,
                                (c * self.h + ii as usize) * self.w + jj as usize,
                            );
                        }
                    }
                }
            }
        }
    }

    fn im2col<S: Scalar>(&self, image: &[S], col: &mut [S]) {
        col.iter_mut().for_each(|v| *v = S::zero());
        self.for_each_tap(|ci, ii| col[ci] = image[ii]);
    }

    fn col2im<S: Scalar>(&self, col: &[S], image: &mut [S]) {
        self.for_each_tap(|ci, ii| image[ii] += col[ci]);
    }
}

/// Cross-correlation of `[N,C_in,H,W]` with `[C_out,C_in,kH,kW]`.
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<S>> {
    let g = ConvGeom::new(input.shape(), weight.shape(), stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                expected: vec![g.c_out],
                got: b.shape().to_vec(),
            });
        }
    }
    let n = input.shape()[0];
    let (k, p) = (g.k(), g.p());
    let in_stride = g.c_in * g.h * g.w;
    let out_stride = g.c_out * p;
    let mut out = vec![S::zero(); n * out_stride];
    let mut col = vec![S::zero(); k * p];
    for s in 0..n {
        g.im2col(&input.data()[s * in_stride..(s + 1) * in_stride], &mut col);
        let o = &mut out[s * out_stride..(s + 1) * out_stride];
        if let Some(b) = bias {
            for (co, chunk) in o.chunks_exact_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b.data()[co]);
            }
        }
        gemm_acc(weight.data(), &col, o, g.c_out, k, p);
    }
    Tensor::new(vec![n, g.c_out, g.oh, g.ow], out)
}

/// Gradients of a convolution with respect to its input and parameters.
pub struct ConvGrads<S> {
    pub input: Option<Tensor<S>>,
    pub weight: Vec<S>,
    pub bias: Option<Vec<S>>,
}

pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    has_bias: bool,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<S>,
    need_input_grad: bool,
) -> Result<ConvGrads<S>> {
    let g = ConvGeom::new(input.shape(), weight.shape(), stride, padding)?;
    let n = input.shape()[0];
    let expected = [n, g.c_out, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            expected: expected.to_vec(),
            got: grad_out.shape().to_vec(),
        });
    }
    let (k, p) = (g.k(), g.p());
    let in_stride = g.c_in * g.h * g.w;
    let out_stride = g.c_out * p;
    let mut gw = vec![S::zero(); g.c_out * k];
    let mut gb = has_bias.then(|| vec![S::zero(); g.c_out]);
    let mut gin = need_input_grad.then(|| vec![S::zero(); input.len()]);
    let mut col = vec![S::zero(); k * p];
    let mut dcol = vec![S::zero(); k * p];
    for s in 0..n {
        let go = &grad_out.data()[s * out_stride..(s + 1) * out_stride];
        g.im2col(&input.data()[s * in_stride..(s + 1) * in_stride], &mut col);
        gemm_abt_acc(go, &col, &mut gw, g.c_out, p, k);
        if let Some(gb) = gb.as_mut() {
            for (co, chunk) in go.chunks_exact(p).enumerate() {
                gb[co] += chunk.iter().copied().sum::<S>();
            }
        }
        if let Some(gin) = gin.as_mut() {
            dcol.iter_mut().for_each(|v| *v = S::zero());
            gemm_atb_acc(weight.data(), go, &mut dcol, g.c_out, k, p);
            g.col2im(&dcol, &mut gin[s * in_stride..(s + 1) * in_stride]);
        }
    }
    Ok(ConvGrads {
        input: gin
            .map(|d| Tensor::new(input.shape().to_vec(), d))
            .transpose()?,
        weight: gw,
        bias: gb,
    })
}

/// Max pooling without padding. Returns the pooled tensor and, for every
/// output cell, the flat index of the input element that won. Ties go to
/// the first maximum in row-major window order.
pub fn maxpool2d_forward<S: Scalar>(
    input: &Tensor<S>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<S>, Vec<usize>)> {
    let sh = input.shape();
    if sh.len() != 4 {
        return Err(Error::InvalidArgument {
            op: "maxpool2d",
            reason: format!("expected 4-d input, got {sh:?}"),
        });
    }
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let (Some(oh), Some(ow)) = (
        window_out_dim(h, window, stride, 0),
        window_out_dim(w, window, stride, 0),
    ) else {
        return Err(Error::InvalidArgument {
            op: "maxpool2d",
            reason: format!("window {window} stride {stride} does not fit {h}x{w}"),
        });
    };
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best_idx = base + oi * stride * w + oj * stride;
                let mut best = x[best_idx];
                for di in 0..window {
                    for dj in 0..window {
                        let idx = base + (oi * stride + di) * w + oj * stride + dj;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

pub fn maxpool2d_backward<S: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d_backward",
            expected: vec![argmax.len()],
            got: vec![grad_out.len()],
        });
    }
    let mut gin = Tensor::zeros(input_shape.to_vec());
    let d = gin.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(gin)
}

/// Affine map `[N,D] · [D,K] + [K]`.
pub fn fc_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    let (n, d, k) = fc_dims(input, weight)?;
    if let Some(b) = bias {
        if b.shape() != [k] {
            return Err(Error::ShapeMismatch {
                op: "fc bias",
                expected: vec![k],
                got: b.shape().to_vec(),
            });
        }
    }
    let mut out = match bias {
        Some(b) => b.data().repeat(n),
        None => vec![S::zero(); n * k],
    };
    gemm_acc(input.data(), weight.data(), &mut out, n, d, k);
    Tensor::new(vec![n, k], out)
}

fn fc_dims<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>) -> Result<(usize, usize, usize)> {
    let (is, ws) = (input.shape(), weight.shape());
    if is.len() != 2 || ws.len() != 2 || is[1] != ws[0] {
        return Err(Error::ShapeMismatch {
            op: "fc",
            expected: ws.first().map(|&d| vec![is[0], d]).unwrap_or_default(),
            got: is.to_vec(),
        });
    }
    Ok((is[0], is[1], ws[1]))
}

pub struct FcGrads<S> {
    pub input: Option<Tensor<S>>,
    pub weight: Vec<S>,
    pub bias: Option<Vec<S>>,
}

pub fn fc_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    has_bias: bool,
    grad_out: &Tensor<S>,
    need_input_grad: bool,
) -> Result<FcGrads<S>> {
    let (n, d, k) = fc_dims(input, weight)?;
    if grad_out.shape() != [n, k] {
        return Err(Error::ShapeMismatch {
            op: "fc_backward",
            expected: vec![n, k],
            got: grad_out.shape().to_vec(),
        });
    }
    let mut gw = vec![S::zero(); d * k];
    gemm_atb_acc(input.data(), grad_out.data(), &mut gw, n, d, k);
    let gb = has_bias.then(|| {
        let mut gb = vec![S::zero(); k];
        for row in grad_out.data().chunks_exact(k) {
            gb.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
        }
        gb
    });
    let gin = if need_input_grad {
        let mut gin = vec![S::zero(); n * d];
        gemm_abt_acc(grad_out.data(), weight.data(), &mut gin, n, k, d);
        Some(Tensor::new(vec![n, d], gin)?)
    } else {
        None
    };
    Ok(FcGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}

pub fn relu_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let mut out = input.clone();
    out.grad = None;
    out.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero()));
    out
}

/// Gradient through ReLU given the forward output (zero where output is zero).
pub fn relu_backward<S: Scalar>(output: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    let mut g = grad_out.clone();
    g.grad = None;
    g.data_mut()
        .iter_mut()
        .zip(output.data())
        .for_each(|(gv, &o)| {
            if o <= S::zero() {
                *gv = S::zero();
            }
        });
    g
}
