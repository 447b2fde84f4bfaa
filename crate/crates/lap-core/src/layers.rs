//! Forward and backward passes for every primitive layer the network uses.
//!
//! Conventions that hold throughout:
//! - convolution is cross-correlation (no kernel flip);
//! - "same" padding for odd kernels is `(k - 1) / 2`;
//! - every backward recomputes from the cached forward input or output, and
//!   the summation order inside each kernel is a fixed loop nest so repeated
//!   runs are bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Shape, Tensor};

/// Train/eval switch; only batch norm behaves differently.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Activation {
    Relu,
    Elu { alpha: f64 },
    Sigmoid,
}

impl Activation {
    pub fn elu_default() -> Self {
        Activation::Elu { alpha: 1.0 }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * (math::exp(x) - 1.0)
                }
            }
            Activation::Sigmoid => math::sigmoid(x),
        }
    }

    /// Derivative expressed in terms of the forward *output*.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            // for x <= 0: y = alpha (e^x - 1), dy/dx = alpha e^x = y + alpha
            Activation::Elu { alpha } => {
                if y > 0.0 {
                    1.0
                } else {
                    y + alpha
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn activation_forward(x: &Tensor, act: Activation) -> Tensor {
    x.map(|v| act.apply(v))
}

/// `out` is the tensor produced by `activation_forward`.
pub fn activation_backward(act: Activation, out: &Tensor, gout: &Tensor) -> Result<Tensor> {
    if out.shape() != gout.shape() {
        return Err(Error::ShapeMismatch {
            expected: out.shape(),
            got: gout.shape(),
        });
    }
    let data = out
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&y, &g)| g * act.derivative_from_output(y))
        .collect();
    Tensor::from_vec(out.shape(), data)
}

pub fn relu(x: &Tensor) -> Tensor {
    activation_forward(x, Activation::Relu)
}

pub fn elu(x: &Tensor, alpha: f64) -> Tensor {
    activation_forward(x, Activation::Elu { alpha })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    activation_forward(x, Activation::Sigmoid)
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

/// Parameters of a 2-D convolution.
///
/// The kernel tensor is laid out `(c_out, c_in_per_group, k, k)`; bias, when
/// present, is `(1, c_out, 1, 1)`. `groups == 1` is a standard convolution
/// and `groups == c_in` (one input channel per group, `c_out == c_in`) is
/// depthwise.
#[derive(Clone, Debug)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvParams {
    pub fn new(
        kernel: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let ks = kernel.shape();
        if ks.h != ks.w {
            return Err(Error::InvalidConfig("conv kernel must be square".into()));
        }
        if stride == 0 || groups == 0 {
            return Err(Error::InvalidConfig(
                "conv stride and groups must be positive".into(),
            ));
        }
        if ks.n % groups != 0 {
            return Err(Error::InvalidConfig(
                "conv output channels must divide evenly into groups".into(),
            ));
        }
        if let Some(b) = &bias {
            if b.shape() != Shape::new(1, ks.n, 1, 1) {
                return Err(Error::ShapeMismatch {
                    expected: Shape::new(1, ks.n, 1, 1),
                    got: b.shape(),
                });
            }
        }
        Ok(ConvParams {
            kernel,
            bias,
            stride,
            padding,
            groups,
        })
    }

    pub fn c_out(&self) -> usize {
        self.kernel.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.kernel.shape().c * self.groups
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape().h
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.c_in() && self.c_out() == self.c_in() && self.groups > 1
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel_size() == 1 && self.groups == 1
    }
}

/// Gradients produced by `conv2d_backward`.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub kernel: Tensor,
    pub bias: Option<Tensor>,
}

fn conv_output_extent(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < k {
        return Err(Error::InvalidConfig(
            "spatial extent too small for kernel after padding".into(),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// `dst[i] += a * src[i]`.
#[inline]
fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Valid output range `[lo, hi)` such that `o + off` lands in `[0, extent)`.
#[inline]
fn shifted_range(out_extent: usize, in_extent: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi_signed = in_extent as isize - off;
    let hi = hi_signed.clamp(0, out_extent as isize) as usize;
    (lo.min(hi), hi)
}

pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let xs = x.shape();
    let ks = p.kernel.shape();
    let (c_out, c_in_pg, k) = (ks.n, ks.c, ks.h);
    if xs.c != c_in_pg * p.groups {
        return Err(Error::ChannelMismatch {
            expected: c_in_pg * p.groups,
            got: xs.c,
        });
    }
    let oh = conv_output_extent(xs.h, k, p.stride, p.padding)?;
    let ow = conv_output_extent(xs.w, k, p.stride, p.padding)?;
    let mut out = Tensor::zeros(Shape::new(xs.n, c_out, oh, ow));
    let c_out_pg = c_out / p.groups;
    let pad = p.padding as isize;

    for n in 0..xs.n {
        for g in 0..p.groups {
            for cog in 0..c_out_pg {
                let co = g * c_out_pg + cog;
                if let Some(b) = &p.bias {
                    let bv = b.data()[co];
                    out.plane_mut(n, co).fill(bv);
                }
                for cig in 0..c_in_pg {
                    let ci = g * c_in_pg + cig;
                    conv_accumulate_plane(
                        x.plane(n, ci),
                        xs.h,
                        xs.w,
                        p.kernel.plane(co, cig),
                        k,
                        p.stride,
                        pad,
                        out.plane_mut(n, co),
                        oh,
                        ow,
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates one (input plane, kernel plane) pair into an output plane.
#[allow(clippy::too_many_arguments)]
fn conv_accumulate_plane(
    x: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    k: usize,
    stride: usize,
    pad: isize,
    out: &mut [f64],
    oh: usize,
    ow: usize,
) {
    for kh in 0..k {
        for kw in 0..k {
            let wgt = kernel[kh * k + kw];
            let hoff = kh as isize - pad;
            let woff = kw as isize - pad;
            if stride == 1 {
                let (r_lo, r_hi) = shifted_range(oh, h, hoff);
                let (c_lo, c_hi) = shifted_range(ow, w, woff);
                if c_lo >= c_hi {
                    continue;
                }
                for r in r_lo..r_hi {
                    let ih = (r as isize + hoff) as usize;
                    let src_lo = (c_lo as isize + woff) as usize;
                    let src = &x[ih * w + src_lo..ih * w + src_lo + (c_hi - c_lo)];
                    axpy(&mut out[r * ow + c_lo..r * ow + c_hi], src, wgt);
                }
            } else {
                for r in 0..oh {
                    let ih = (r * stride) as isize + hoff;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let row = &x[ih as usize * w..(ih as usize + 1) * w];
                    let out_row = &mut out[r * ow..(r + 1) * ow];
                    for (c, o) in out_row.iter_mut().enumerate() {
                        let iw = (c * stride) as isize + woff;
                        if iw >= 0 && iw < w as isize {
                            *o += wgt * row[iw as usize];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_backward(x: &Tensor, p: &ConvParams, gout: &Tensor) -> Result<(Tensor, ConvGrads)> {
    let xs = x.shape();
    let ks = p.kernel.shape();
    let (c_out, c_in_pg, k) = (ks.n, ks.c, ks.h);
    let oh = conv_output_extent(xs.h, k, p.stride, p.padding)?;
    let ow = conv_output_extent(xs.w, k, p.stride, p.padding)?;
    let expected = Shape::new(xs.n, c_out, oh, ow);
    if gout.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            got: gout.shape(),
        });
    }

    let mut dx = Tensor::zeros(xs);
    let mut dk = Tensor::zeros(ks);
    let mut db = p.bias.as_ref().map(|b| Tensor::zeros(b.shape()));
    let c_out_pg = c_out / p.groups;
    let pad = p.padding as isize;

    for n in 0..xs.n {
        for g in 0..p.groups {
            for cog in 0..c_out_pg {
                let co = g * c_out_pg + cog;
                let gplane = gout.plane(n, co);
                if let Some(db) = &mut db {
                    let s: f64 = gplane.iter().sum();
                    db.data_mut()[co] += s;
                }
                for cig in 0..c_in_pg {
                    let ci = g * c_in_pg + cig;
                    let xplane = x.plane(n, ci);
                    for kh in 0..k {
                        for kw in 0..k {
                            let hoff = kh as isize - pad;
                            let woff = kw as isize - pad;
                            let kidx = ((co * c_in_pg + cig) * k + kh) * k + kw;
                            let wgt = p.kernel.data()[kidx];
                            let mut dw_acc = 0.0;
                            if p.stride == 1 {
                                let (r_lo, r_hi) = shifted_range(oh, xs.h, hoff);
                                let (c_lo, c_hi) = shifted_range(ow, xs.w, woff);
                                if c_lo >= c_hi {
                                    continue;
                                }
                                let dxp = dx.plane_mut(n, ci);
                                for r in r_lo..r_hi {
                                    let ih = (r as isize + hoff) as usize;
                                    let src_lo = (c_lo as isize + woff) as usize;
                                    let grow = &gplane[r * ow + c_lo..r * ow + c_hi];
                                    let xrow =
                                        &xplane[ih * xs.w + src_lo..ih * xs.w + src_lo + grow.len()];
                                    dw_acc += dot(grow, xrow);
                                    axpy(
                                        &mut dxp[ih * xs.w + src_lo
                                            ..ih * xs.w + src_lo + grow.len()],
                                        grow,
                                        wgt,
                                    );
                                }
                            } else {
                                let dxp = dx.plane_mut(n, ci);
                                for r in 0..oh {
                                    let ih = (r * p.stride) as isize + hoff;
                                    if ih < 0 || ih >= xs.h as isize {
                                        continue;
                                    }
                                    for c in 0..ow {
                                        let iw = (c * p.stride) as isize + woff;
                                        if iw < 0 || iw >= xs.w as isize {
                                            continue;
                                        }
                                        let gv = gplane[r * ow + c];
                                        let xi = ih as usize * xs.w + iw as usize;
                                        dw_acc += gv * xplane[xi];
                                        dxp[xi] += wgt * gv;
                                    }
                                }
                            }
                            dk.data_mut()[kidx] += dw_acc;
                        }
                    }
                }
            }
        }
    }
    Ok((
        dx,
        ConvGrads {
            kernel: dk,
            bias: db,
        },
    ))
}

// ---------------------------------------------------------------------------
// depthwise separable pair
// ---------------------------------------------------------------------------

/// Depthwise conv, then optional batch norm + activation, then pointwise
/// conv. `dw` must be depthwise over the input channels and `pw` must be a
/// 1x1 standard convolution.
pub fn depthwise_separable_forward(
    x: &Tensor,
    dw: &ConvParams,
    pw: &ConvParams,
    mid: Option<(&mut BatchNormParams, Activation, Mode)>,
) -> Result<Tensor> {
    if !dw.is_depthwise() {
        return Err(Error::InvalidConfig(
            "first stage must be a depthwise convolution".into(),
        ));
    }
    if pw.kernel_size() != 1 || pw.groups != 1 {
        return Err(Error::InvalidConfig(
            "second stage must be a 1x1 standard convolution".into(),
        ));
    }
    let mut mid_out = conv2d_forward(x, dw)?;
    if let Some((bn, act, mode)) = mid {
        mid_out = batchnorm_forward(&mid_out, bn, mode)?;
        mid_out = activation_forward(&mid_out, act);
    }
    conv2d_forward(&mid_out, pw)
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

/// Per-channel affine normalization parameters plus running statistics.
/// All vectors are stored as `(1, C, 1, 1)` tensors.
#[derive(Clone, Debug)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        let vshape = Shape::new(1, channels, 1, 1);
        BatchNormParams {
            gamma: Tensor::ones(vshape),
            beta: Tensor::zeros(vshape),
            running_mean: Tensor::zeros(vshape),
            running_var: Tensor::ones(vshape),
            epsilon: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape().c
    }
}

/// Cache needed by `batchnorm_backward`.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub xhat: Tensor,
    pub invstd: Vec<f64>,
    pub mode: Mode,
}

pub fn batchnorm_forward(x: &Tensor, p: &mut BatchNormParams, mode: Mode) -> Result<Tensor> {
    batchnorm_forward_cached(x, p, mode).map(|(y, _)| y)
}

/// Inference-mode batch norm; uses the running statistics and leaves them
/// untouched.
pub fn batchnorm_eval(x: &Tensor, p: &BatchNormParams) -> Result<Tensor> {
    let s = x.shape();
    let c = p.channels();
    if s.c != c {
        return Err(Error::ChannelMismatch {
            expected: c,
            got: s.c,
        });
    }
    let mut out = Tensor::zeros(s);
    for ch in 0..c {
        let g = p.gamma.data()[ch];
        let b = p.beta.data()[ch];
        let mu = p.running_mean.data()[ch];
        let is = 1.0 / math::sqrt(p.running_var.data()[ch] + p.epsilon);
        for n in 0..s.n {
            let xp = x.plane(n, ch);
            let op = out.plane_mut(n, ch);
            for (o, &v) in op.iter_mut().zip(xp) {
                *o = g * (v - mu) * is + b;
            }
        }
    }
    Ok(out)
}

pub fn batchnorm_forward_cached(
    x: &Tensor,
    p: &mut BatchNormParams,
    mode: Mode,
) -> Result<(Tensor, BnCache)> {
    let s = x.shape();
    let c = p.channels();
    if s.c != c {
        return Err(Error::ChannelMismatch {
            expected: c,
            got: s.c,
        });
    }
    let m = s.n * s.h * s.w;
    if mode == Mode::Train && m == 0 {
        return Err(Error::EmptyInput("batch norm over a zero-size batch".into()));
    }

    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let mut acc = 0.0;
                for n in 0..s.n {
                    acc += x.plane(n, ch).iter().sum::<f64>();
                }
                mean[ch] = acc / m as f64;
                let mut vacc = 0.0;
                for n in 0..s.n {
                    for &v in x.plane(n, ch) {
                        let d = v - mean[ch];
                        vacc += d * d;
                    }
                }
                var[ch] = vacc / m as f64;
            }
            // running stats: EMA with the unbiased variance estimate
            let mom = p.momentum;
            for ch in 0..c {
                let rm = p.running_mean.data()[ch];
                p.running_mean.data_mut()[ch] = (1.0 - mom) * rm + mom * mean[ch];
                let unbiased = if m > 1 {
                    var[ch] * m as f64 / (m - 1) as f64
                } else {
                    var[ch]
                };
                let rv = p.running_var.data()[ch];
                p.running_var.data_mut()[ch] = (1.0 - mom) * rv + mom * unbiased;
            }
        }
        Mode::Eval => {
            mean.copy_from_slice(&p.running_mean.data()[..c]);
            var.copy_from_slice(&p.running_var.data()[..c]);
        }
    }

    let invstd: Vec<f64> = var.iter().map(|&v| 1.0 / math::sqrt(v + p.epsilon)).collect();
    let mut xhat = Tensor::zeros(s);
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for ch in 0..c {
            let g = p.gamma.data()[ch];
            let b = p.beta.data()[ch];
            let mu = mean[ch];
            let is = invstd[ch];
            let xp = x.plane(n, ch);
            let hp = xhat.plane_mut(n, ch);
            for (h, &v) in hp.iter_mut().zip(xp) {
                *h = (v - mu) * is;
            }
            let op = out.plane_mut(n, ch);
            for (o, h) in op.iter_mut().zip(xhat.plane(n, ch)) {
                *o = g * h + b;
            }
        }
    }
    Ok((
        out,
        BnCache {
            xhat,
            invstd,
            mode,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    p: &BatchNormParams,
    cache: &BnCache,
    gout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = gout.shape();
    let c = p.channels();
    if cache.xhat.shape() != s {
        return Err(Error::ShapeMismatch {
            expected: cache.xhat.shape(),
            got: s,
        });
    }
    let m = (s.n * s.h * s.w) as f64;
    let vshape = Shape::new(1, c, 1, 1);
    let mut dgamma = Tensor::zeros(vshape);
    let mut dbeta = Tensor::zeros(vshape);
    for ch in 0..c {
        let mut dg = 0.0;
        let mut db = 0.0;
        for n in 0..s.n {
            for (g, h) in gout.plane(n, ch).iter().zip(cache.xhat.plane(n, ch)) {
                dg += g * h;
                db += g;
            }
        }
        dgamma.data_mut()[ch] = dg;
        dbeta.data_mut()[ch] = db;
    }

    let mut dx = Tensor::zeros(s);
    match cache.mode {
        Mode::Train => {
            for ch in 0..c {
                let scale = p.gamma.data()[ch] * cache.invstd[ch] / m;
                let dg = dgamma.data()[ch];
                let db = dbeta.data()[ch];
                for n in 0..s.n {
                    let gp = gout.plane(n, ch);
                    let hp = cache.xhat.plane(n, ch);
                    let dp = dx.plane_mut(n, ch);
                    for ((d, &g), &h) in dp.iter_mut().zip(gp).zip(hp) {
                        *d = scale * (m * g - db - h * dg);
                    }
                }
            }
        }
        Mode::Eval => {
            for ch in 0..c {
                let scale = p.gamma.data()[ch] * cache.invstd[ch];
                for n in 0..s.n {
                    let gp = gout.plane(n, ch);
                    let dp = dx.plane_mut(n, ch);
                    for (d, &g) in dp.iter_mut().zip(gp) {
                        *d = scale * g;
                    }
                }
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

// ---------------------------------------------------------------------------
// pooling and upsampling
// ---------------------------------------------------------------------------

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the flat
/// input index of each window maximum (first maximum in row-major order).
pub fn maxpool2d(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let s = x.shape();
    if s.h % 2 != 0 {
        return Err(Error::Indivisible { dim: s.h, by: 2 });
    }
    if s.w % 2 != 0 {
        return Err(Error::Indivisible { dim: s.w, by: 2 });
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let mut argmax = vec![0usize; out.len()];
    let mut oi = 0usize;
    for n in 0..s.n {
        for c in 0..s.c {
            let xp = x.plane(n, c);
            let op = out.plane_mut(n, c);
            for r in 0..oh {
                for col in 0..ow {
                    let base = 2 * r * s.w + 2 * col;
                    let cand = [base, base + 1, base + s.w, base + s.w + 1];
                    let mut best_i = cand[0];
                    let mut best_v = xp[cand[0]];
                    for &i in &cand[1..] {
                        if xp[i] > best_v {
                            best_v = xp[i];
                            best_i = i;
                        }
                    }
                    op[r * ow + col] = best_v;
                    // store the global flat index into x
                    argmax[oi] = (n * s.c + c) * s.h * s.w + best_i;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each upstream gradient to its stored argmax position.
pub fn maxpool2d_backward(
    input_shape: Shape,
    argmax: &[usize],
    gout: &Tensor,
) -> Result<Tensor> {
    if argmax.len() != gout.len() {
        return Err(Error::DataLength {
            expected: gout.len(),
            got: argmax.len(),
        });
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(gout.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// Nearest-neighbour upsampling by a factor of 2.
pub fn upsample_nearest(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, s.h * 2, s.w * 2));
    for n in 0..s.n {
        for c in 0..s.c {
            let xp = x.plane(n, c);
            let op = out.plane_mut(n, c);
            let ow = s.w * 2;
            for r in 0..s.h {
                for col in 0..s.w {
                    let v = xp[r * s.w + col];
                    let base = 2 * r * ow + 2 * col;
                    op[base] = v;
                    op[base + 1] = v;
                    op[base + ow] = v;
                    op[base + ow + 1] = v;
                }
            }
        }
    }
    out
}

/// Each input pixel receives the sum of its 2x2 replication block.
pub fn upsample_nearest_backward(gout: &Tensor) -> Result<Tensor> {
    let s = gout.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::Indivisible {
            dim: s.h.min(s.w),
            by: 2,
        });
    }
    let (ih, iw) = (s.h / 2, s.w / 2);
    let mut dx = Tensor::zeros(Shape::new(s.n, s.c, ih, iw));
    for n in 0..s.n {
        for c in 0..s.c {
            let gp = gout.plane(n, c);
            let dp = dx.plane_mut(n, c);
            for r in 0..ih {
                for col in 0..iw {
                    let base = 2 * r * s.w + 2 * col;
                    dp[r * iw + col] =
                        gp[base] + gp[base + 1] + gp[base + s.w] + gp[base + s.w + 1];
                }
            }
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

/// Fully connected layer over channel vectors. Weight is stored
/// `(out_features, in_features, 1, 1)`; inputs are `(N, in_features, 1, 1)`.
#[derive(Clone, Debug)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl LinearParams {
    pub fn out_features(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape().c
    }
}

pub fn linear_forward(x: &Tensor, p: &LinearParams) -> Result<Tensor> {
    let s = x.shape();
    let (of, inf) = (p.out_features(), p.in_features());
    if s.c != inf || s.h != 1 || s.w != 1 {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(s.n, inf, 1, 1),
            got: s,
        });
    }
    let mut out = Tensor::zeros(Shape::new(s.n, of, 1, 1));
    for n in 0..s.n {
        let xrow = &x.data()[n * inf..(n + 1) * inf];
        for o in 0..of {
            let wrow = &p.weight.data()[o * inf..(o + 1) * inf];
            let mut acc = dot(wrow, xrow);
            if let Some(b) = &p.bias {
                acc += b.data()[o];
            }
            out.data_mut()[n * of + o] = acc;
        }
    }
    Ok(out)
}

/// Returns `(dx, dweight, dbias)`.
pub fn linear_backward(
    x: &Tensor,
    p: &LinearParams,
    gout: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let s = x.shape();
    let (of, inf) = (p.out_features(), p.in_features());
    let expected = Shape::new(s.n, of, 1, 1);
    if gout.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            got: gout.shape(),
        });
    }
    let mut dx = Tensor::zeros(s);
    let mut dw = Tensor::zeros(p.weight.shape());
    let mut db = p.bias.as_ref().map(|b| Tensor::zeros(b.shape()));
    for n in 0..s.n {
        let xrow = &x.data()[n * inf..(n + 1) * inf];
        let grow = &gout.data()[n * of..(n + 1) * of];
        for o in 0..of {
            let g = grow[o];
            let wrow = &p.weight.data()[o * inf..(o + 1) * inf];
            axpy(&mut dx.data_mut()[n * inf..(n + 1) * inf], wrow, g);
            let dwrow = &mut dw.data_mut()[o * inf..(o + 1) * inf];
            axpy(dwrow, xrow, g);
            if let Some(db) = &mut db {
                db.data_mut()[o] += g;
            }
        }
    }
    Ok((dx, dw, db))
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

/// Fan-in scaled Gaussian init: `N(0, 2 / fan_in)`.
pub fn gaussian_init(shape: Shape, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = math::sqrt(2.0 / fan_in.max(1) as f64);
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    let data = (0..shape.volume()).map(|_| normal.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("length matches by construction")
}

pub fn init_conv(
    c_out: usize,
    c_in_pg: usize,
    k: usize,
    stride: usize,
    padding: usize,
    groups: usize,
    with_bias: bool,
    rng: &mut ChaCha8Rng,
) -> ConvParams {
    let kernel = gaussian_init(Shape::new(c_out, c_in_pg, k, k), c_in_pg * k * k, rng);
    let bias = with_bias.then(|| Tensor::zeros(Shape::new(1, c_out, 1, 1)));
    ConvParams::new(kernel, bias, stride, padding, groups).expect("valid by construction")
}

pub fn init_linear(out_features: usize, in_features: usize, rng: &mut ChaCha8Rng) -> LinearParams {
    LinearParams {
        weight: gaussian_init(
            Shape::new(out_features, in_features, 1, 1),
            in_features,
            rng,
        ),
        bias: Some(Tensor::zeros(Shape::new(1, out_features, 1, 1))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};

    fn t(n: usize, c: usize, h: usize, w: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(Shape::new(n, c, h, w), data.to_vec()).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..shape.volume()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Independent oracle: plain septuple-loop cross-correlation.
    fn conv_oracle(x: &Tensor, p: &ConvParams) -> Tensor {
        let xs = x.shape();
        let ks = p.kernel.shape();
        let (c_out, c_in_pg, k) = (ks.n, ks.c, ks.h);
        let oh = (xs.h + 2 * p.padding - k) / p.stride + 1;
        let ow = (xs.w + 2 * p.padding - k) / p.stride + 1;
        let c_out_pg = c_out / p.groups;
        let mut out = Tensor::zeros(Shape::new(xs.n, c_out, oh, ow));
        for n in 0..xs.n {
            for co in 0..c_out {
                let g = co / c_out_pg;
                for r in 0..oh {
                    for c in 0..ow {
                        let mut acc = p.bias.as_ref().map_or(0.0, |b| b.data()[co]);
                        for cig in 0..c_in_pg {
                            let ci = g * c_in_pg + cig;
                            for kh in 0..k {
                                for kw in 0..k {
                                    let ih = (r * p.stride + kh) as isize - p.padding as isize;
                                    let iw = (c * p.stride + kw) as isize - p.padding as isize;
                                    if ih >= 0
                                        && iw >= 0
                                        && (ih as usize) < xs.h
                                        && (iw as usize) < xs.w
                                    {
                                        acc += x.at(n, ci, ih as usize, iw as usize)
                                            * p.kernel.at(co, cig, kh, kw);
                                    }
                                }
                            }
                        }
                        out.set(n, co, r, c, acc);
                    }
                }
            }
        }
        out
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!(
                (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())),
                "{x} vs {y}"
            );
        }
    }

    #[test]
    fn conv_all_ones_sums_to_nine() {
        let x = Tensor::ones(Shape::new(1, 1, 3, 3));
        let p = ConvParams::new(Tensor::ones(Shape::new(1, 1, 3, 3)), None, 1, 0, 1).unwrap();
        let out = conv2d_forward(&x, &p).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(out.at(0, 0, 0, 0), 9.0);
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let mut k = Tensor::zeros(Shape::new(1, 1, 3, 3));
        k.set(0, 0, 1, 1, 1.0);
        let p = ConvParams::new(k, None, 1, 1, 1).unwrap();
        let x = random_tensor(Shape::new(1, 1, 4, 5), &mut rng(7));
        let out = conv2d_forward(&x, &p).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn conv_pointwise_matches_oracle() {
        let mut r = rng(11);
        let x = random_tensor(Shape::new(1, 2, 2, 2), &mut r);
        let kernel = random_tensor(Shape::new(1, 2, 1, 1), &mut r);
        let p = ConvParams::new(kernel, None, 1, 0, 1).unwrap();
        let out = conv2d_forward(&x, &p).unwrap();
        assert_close(&out, &conv_oracle(&x, &p), 1e-12);
    }

    #[test]
    fn conv_matches_oracle_on_random_cases() {
        let mut r = rng(23);
        for (groups, cin, cout, k, stride, pad, h, w) in [
            (1, 3, 4, 3, 1, 1, 5, 6),
            (1, 2, 3, 3, 2, 1, 6, 6),
            (4, 4, 4, 3, 1, 1, 4, 4),
            (1, 2, 2, 7, 1, 3, 8, 7),
            (1, 3, 2, 1, 1, 0, 3, 3),
            (2, 4, 6, 3, 2, 0, 7, 9),
        ] {
            let x = random_tensor(Shape::new(2, cin, h, w), &mut r);
            let kernel = random_tensor(Shape::new(cout, cin / groups, k, k), &mut r);
            let bias = Some(random_tensor(Shape::new(1, cout, 1, 1), &mut r));
            let p = ConvParams::new(kernel, bias, stride, pad, groups).unwrap();
            let out = conv2d_forward(&x, &p).unwrap();
            assert_close(&out, &conv_oracle(&x, &p), 1e-12);
        }
    }

    #[test]
    fn conv_same_padding_preserves_dims() {
        let mut r = rng(3);
        for k in [1usize, 3, 5, 7] {
            let x = random_tensor(Shape::new(1, 2, 6, 5), &mut r);
            let kernel = random_tensor(Shape::new(3, 2, k, k), &mut r);
            let p = ConvParams::new(kernel, None, 1, (k - 1) / 2, 1).unwrap();
            let out = conv2d_forward(&x, &p).unwrap();
            assert_eq!(out.shape(), Shape::new(1, 3, 6, 5));
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::ones(Shape::new(1, 3, 4, 4));
        let p = ConvParams::new(Tensor::ones(Shape::new(2, 2, 3, 3)), None, 1, 1, 1).unwrap();
        assert_eq!(
            conv2d_forward(&x, &p).unwrap_err(),
            Error::ChannelMismatch {
                expected: 2,
                got: 3
            }
        );
    }

    #[test]
    fn sep_conv_delta_depthwise_equals_pointwise() {
        let mut r = rng(5);
        let cin = 3;
        let x = random_tensor(Shape::new(1, cin, 4, 4), &mut r);
        let mut dwk = Tensor::zeros(Shape::new(cin, 1, 3, 3));
        for c in 0..cin {
            dwk.set(c, 0, 1, 1, 1.0);
        }
        let dw = ConvParams::new(dwk, None, 1, 1, cin).unwrap();
        let pwk = random_tensor(Shape::new(2, cin, 1, 1), &mut r);
        let pw = ConvParams::new(pwk.clone(), None, 1, 0, 1).unwrap();
        let sep = depthwise_separable_forward(&x, &dw, &pw, None).unwrap();
        let direct =
            conv2d_forward(&x, &ConvParams::new(pwk, None, 1, 0, 1).unwrap()).unwrap();
        assert_eq!(sep.data(), direct.data());
    }

    #[test]
    fn sep_conv_matches_two_stage_oracle() {
        let mut r = rng(17);
        let x = random_tensor(Shape::new(1, 3, 4, 4), &mut r);
        let dwk = random_tensor(Shape::new(3, 1, 3, 3), &mut r);
        let dw = ConvParams::new(dwk, None, 1, 1, 3).unwrap();
        let pwk = random_tensor(Shape::new(5, 3, 1, 1), &mut r);
        let pw = ConvParams::new(pwk, None, 1, 0, 1).unwrap();
        let got = depthwise_separable_forward(&x, &dw, &pw, None).unwrap();
        let staged = conv_oracle(&conv_oracle(&x, &dw), &pw);
        assert_close(&got, &staged, 1e-12);
    }

    #[test]
    fn batchnorm_eval_identity_when_standardized() {
        let mut p = BatchNormParams::new(2);
        let x = t(1, 2, 1, 2, &[-1.0, 1.0, -1.0, 1.0]);
        let y = batchnorm_forward(&x, &mut p, Mode::Eval).unwrap();
        // running stats are (0, 1); output differs from x only through epsilon
        assert_close(&y, &x, 1e-5);
    }

    #[test]
    fn batchnorm_zero_gamma_outputs_beta() {
        let mut p = BatchNormParams::new(1);
        p.gamma = Tensor::zeros(Shape::new(1, 1, 1, 1));
        p.beta = Tensor::filled(Shape::new(1, 1, 1, 1), 0.75);
        let x = random_tensor(Shape::new(2, 1, 3, 3), &mut rng(9));
        let y = batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn batchnorm_train_statistics_hand_case() {
        // one channel, batch of two 1x1 values: 1 and 3 -> mean 2, biased var 1
        let mut p = BatchNormParams::new(1);
        let x = t(2, 1, 1, 1, &[1.0, 3.0]);
        let y = batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
        let is = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert_close(&y, &t(2, 1, 1, 1, &[-is, is]), 1e-12);
        // running stats: 0.9 * 0 + 0.1 * 2 = 0.2; unbiased var = 1 * 2/1 = 2
        assert!((p.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((p.running_var.data()[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_rejects_empty_train_batch() {
        let mut p = BatchNormParams::new(1);
        let x = Tensor::zeros(Shape::new(0, 1, 2, 2));
        assert!(matches!(
            batchnorm_forward(&x, &mut p, Mode::Train),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn elu_closed_forms() {
        let x = t(1, 1, 1, 3, &[0.0, 1.0, -1.0]);
        let y = elu(&x, 1.0);
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[1], 1.0);
        assert!((y.data()[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-12);
        assert!((y.data()[2] + 0.6321206).abs() < 1e-7);
    }

    #[test]
    fn sigmoid_at_zero_and_range() {
        let x = t(1, 1, 1, 3, &[0.0, 40.0, -40.0]);
        let y = sigmoid(&x);
        assert_eq!(y.data()[0], 0.5);
        for &v in y.data() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn elu_bounded_below() {
        let x = random_tensor(Shape::new(1, 1, 4, 4), &mut rng(2)).scale(20.0);
        let alpha = 1.3;
        for &v in elu(&x, alpha).data() {
            assert!(v > -alpha);
        }
    }

    #[test]
    fn maxpool_hand_case_and_upsample() {
        let x = t(1, 1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool2d(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        let up = upsample_nearest(&y);
        assert_eq!(up.data(), &[4.0, 4.0, 4.0, 4.0]);

        // pool then upsample of a constant map is the identity
        let c = Tensor::filled(Shape::new(1, 2, 4, 4), 2.5);
        let (cp, _) = maxpool2d(&c).unwrap();
        assert_eq!(upsample_nearest(&cp).data(), c.data());
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        let x = Tensor::zeros(Shape::new(1, 1, 3, 4));
        assert_eq!(
            maxpool2d(&x).unwrap_err(),
            Error::Indivisible { dim: 3, by: 2 }
        );
    }

    #[test]
    fn maxpool_backward_routes_to_argmax_only() {
        let mut r = rng(31);
        let x = random_tensor(Shape::new(1, 2, 4, 4), &mut r);
        let (y, arg) = maxpool2d(&x).unwrap();
        let g = random_tensor(y.shape(), &mut r);
        let dx = maxpool2d_backward(x.shape(), &arg, &g).unwrap();
        let routed: f64 = dx.sum();
        assert!((routed - g.sum()).abs() < 1e-12);
        // every nonzero entry of dx sits at a stored argmax index
        for (i, &v) in dx.data().iter().enumerate() {
            if v != 0.0 {
                assert!(arg.contains(&i));
            }
        }
    }

    #[test]
    fn linear_identity_and_zero_weight() {
        let x = t(1, 2, 1, 1, &[3.0, -4.0]);
        let eye = LinearParams {
            weight: t(2, 2, 1, 1, &[1.0, 0.0, 0.0, 1.0]),
            bias: None,
        };
        assert_eq!(linear_forward(&x, &eye).unwrap().data(), x.data());

        let zero = LinearParams {
            weight: Tensor::zeros(Shape::new(2, 2, 1, 1)),
            bias: Some(t(1, 2, 1, 1, &[0.5, -0.5])),
        };
        assert_eq!(linear_forward(&x, &zero).unwrap().data(), &[0.5, -0.5]);
    }

    #[test]
    fn linear_hand_computed_case() {
        // W = (1 2; 3 4), x = (5, 6) -> (17, 39); bias (0.5, -1) -> (17.5, 38)
        let p = LinearParams {
            weight: t(2, 2, 1, 1, &[1.0, 2.0, 3.0, 4.0]),
            bias: Some(t(1, 2, 1, 1, &[0.5, -1.0])),
        };
        let x = t(1, 2, 1, 1, &[5.0, 6.0]);
        assert_eq!(linear_forward(&x, &p).unwrap().data(), &[17.5, 38.0]);
    }

    #[test]
    fn gaussian_init_is_seeded_and_scaled() {
        let a = gaussian_init(Shape::new(4, 4, 3, 3), 36, &mut rng(42));
        let b = gaussian_init(Shape::new(4, 4, 3, 3), 36, &mut rng(42));
        assert_eq!(a.data(), b.data());
        // crude scale check: sample std should be near sqrt(2/36) = 0.2357
        let var = a.data().iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!(var > 0.02 && var < 0.12, "sample var {var}");
    }
}
