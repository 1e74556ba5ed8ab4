//! Forward and backward kernels on plain tensors.
//!
//! Volumes are laid out `[channels, time, height, width]`. Convolution
//! weights are `[filters, channels, kt, kh, kw]`.

use serde::{Deserialize, Serialize};

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Geometry of a 3D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    /// (temporal, height, width)
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvSpec {
    /// 3x3x3 kernel, unit stride, unit padding: preserves every extent.
    pub fn same_3x3x3(out_channels: usize) -> Self {
        ConvSpec {
            out_channels,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [1, 1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 {
            return Err(Error::Config("conv with zero filters".into()));
        }
        for axis in 0..3 {
            if self.kernel[axis] == 0 || self.stride[axis] == 0 {
                return Err(Error::Config(format!("conv axis {axis}: zero kernel or stride")));
            }
            if self.padding[axis] >= self.kernel[axis] {
                return Err(Error::Config(format!(
                    "conv axis {axis}: padding {} >= kernel {}",
                    self.padding[axis], self.kernel[axis]
                )));
            }
        }
        Ok(())
    }

    /// Output `[T', H', W']` for an input of `[T, H, W]`.
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for axis in 0..3 {
            out[axis] = window_count(
                "conv3d",
                axis,
                input[axis],
                self.kernel[axis],
                self.stride[axis],
                self.padding[axis],
            )?;
        }
        Ok(out)
    }
}

/// Geometry of a 3D max-pooling layer. Temporal padding is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub temporal_kernel: usize,
    pub temporal_stride: usize,
    pub spatial_kernel: usize,
    pub spatial_stride: usize,
    #[serde(default)]
    pub spatial_padding: usize,
}

impl PoolSpec {
    /// `P(kt, st)` with the spatial 2/2 window used by every pool in the backbone.
    pub fn temporal(kernel: usize, stride: usize) -> Self {
        PoolSpec {
            temporal_kernel: kernel,
            temporal_stride: stride,
            spatial_kernel: 2,
            spatial_stride: 2,
            spatial_padding: 0,
        }
    }

    pub fn with_spatial_padding(mut self, padding: usize) -> Self {
        self.spatial_padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal_kernel == 0
            || self.temporal_stride == 0
            || self.spatial_kernel == 0
            || self.spatial_stride == 0
        {
            return Err(Error::Config("pool kernels and strides must be >= 1".into()));
        }
        if self.spatial_padding >= self.spatial_kernel {
            return Err(Error::Config(format!(
                "pool padding {} >= kernel {}",
                self.spatial_padding, self.spatial_kernel
            )));
        }
        Ok(())
    }

    fn kernel(&self) -> [usize; 3] {
        [self.temporal_kernel, self.spatial_kernel, self.spatial_kernel]
    }

    fn stride(&self) -> [usize; 3] {
        [self.temporal_stride, self.spatial_stride, self.spatial_stride]
    }

    fn padding(&self) -> [usize; 3] {
        [0, self.spatial_padding, self.spatial_padding]
    }

    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let (k, s, p) = (self.kernel(), self.stride(), self.padding());
        let mut out = [0; 3];
        for axis in 0..3 {
            out[axis] = window_count("maxpool3d", axis, input[axis], k[axis], s[axis], p[axis])?;
        }
        Ok(out)
    }
}

fn window_count(
    op: &'static str,
    axis: usize,
    extent: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    let span = (extent + 2 * pad) as i64 - kernel as i64;
    if span < 0 {
        return Err(Error::EmptyOutput {
            op,
            axis,
            extent: span.div_euclid(stride as i64) + 1,
        });
    }
    Ok(span as usize / stride + 1)
}

fn volume_dims<T: Element>(op: &'static str, t: &Tensor<T>) -> Result<[usize; 4]> {
    match *t.shape() {
        [c, d, h, w] => Ok([c, d, h, w]),
        ref s => Err(Error::shape(op, format!("expected [C,T,H,W], got {s:?}"))),
    }
}

/// Range of output positions `o` along one axis whose tap `o*stride + k - pad`
/// falls inside `[0, extent)`.
#[inline]
fn valid_range(out_len: usize, extent: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad  and  o*stride + k - pad < extent
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if extent + pad > k {
        ((extent + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn check_conv<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<([usize; 4], [usize; 3])> {
    spec.validate()?;
    let [c, t, h, w] = volume_dims("conv3d", input)?;
    let expected = [spec.out_channels, c, spec.kernel[0], spec.kernel[1], spec.kernel[2]];
    if weights.shape() != expected {
        return Err(Error::shape(
            "conv3d",
            format!("weights {:?}, expected {expected:?}", weights.shape()),
        ));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(Error::shape(
            "conv3d",
            format!("bias {:?}, expected [{}]", bias.shape(), spec.out_channels),
        ));
    }
    let out = spec.output_extents([t, h, w])?;
    Ok(([c, t, h, w], out))
}

pub fn conv3d_forward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let ([c_in, t_in, h_in, w_in], [t_out, h_out, w_out]) = check_conv(input, weights, bias, spec)?;
    let f_out = spec.out_channels;
    let [kt, kh, kw] = spec.kernel;
    let [st, sh, sw] = spec.stride;
    let [pt, ph, pw] = spec.padding;
    let x = input.data();
    let wt = weights.data();
    let plane_out = h_out * w_out;
    let vol_out = t_out * plane_out;
    let plane_in = h_in * w_in;
    let vol_in = t_in * plane_in;

    let mut out = vec![T::zero(); f_out * vol_out];
    for (f, out_f) in out.chunks_exact_mut(vol_out).enumerate() {
        out_f.fill(bias.data()[f]);
        for c in 0..c_in {
            let x_c = &x[c * vol_in..(c + 1) * vol_in];
            for dt in 0..kt {
                let (ot0, ot1) = valid_range(t_out, t_in, dt, st, pt);
                for dh in 0..kh {
                    let (oh0, oh1) = valid_range(h_out, h_in, dh, sh, ph);
                    for dw in 0..kw {
                        let (ow0, ow1) = valid_range(w_out, w_in, dw, sw, pw);
                        if ow0 >= ow1 {
                            continue;
                        }
                        let k = wt[(((f * c_in + c) * kt + dt) * kh + dh) * kw + dw];
                        for ot in ot0..ot1 {
                            let it = ot * st + dt - pt;
                            for oh in oh0..oh1 {
                                let ih = oh * sh + dh - ph;
                                let row_in = &x_c[it * plane_in + ih * w_in..][..w_in];
                                let row_out = &mut out_f[ot * plane_out + oh * w_out..][..w_out];
                                if sw == 1 {
                                    let iw0 = ow0 + dw - pw;
                                    let src = &row_in[iw0..iw0 + (ow1 - ow0)];
                                    for (o, &v) in row_out[ow0..ow1].iter_mut().zip(src) {
                                        *o = *o + k * v;
                                    }
                                } else {
                                    for ow in ow0..ow1 {
                                        let iw = ow * sw + dw - pw;
                                        row_out[ow] = row_out[ow] + k * row_in[iw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![f_out, t_out, h_out, w_out], out)
}

/// Gradients of a convolution wrt `(input, weights, bias)`.
pub fn conv3d_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [c_in, t_in, h_in, w_in] = volume_dims("conv3d_backward", input)?;
    let [t_out, h_out, w_out] = spec.output_extents([t_in, h_in, w_in])?;
    let f_out = spec.out_channels;
    if grad_out.shape() != [f_out, t_out, h_out, w_out] {
        return Err(Error::shape(
            "conv3d_backward",
            format!("grad {:?} vs output [{f_out},{t_out},{h_out},{w_out}]", grad_out.shape()),
        ));
    }
    let [kt, kh, kw] = spec.kernel;
    let [st, sh, sw] = spec.stride;
    let [pt, ph, pw] = spec.padding;
    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let plane_out = h_out * w_out;
    let vol_out = t_out * plane_out;
    let plane_in = h_in * w_in;
    let vol_in = t_in * plane_in;

    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); wt.len()];
    let gb: Vec<T> = g
        .chunks_exact(vol_out)
        .map(|gf| gf.iter().fold(T::zero(), |a, &v| a + v))
        .collect();

    for f in 0..f_out {
        let g_f = &g[f * vol_out..(f + 1) * vol_out];
        for c in 0..c_in {
            let x_c = &x[c * vol_in..(c + 1) * vol_in];
            let gx_c = &mut gx[c * vol_in..(c + 1) * vol_in];
            for dt in 0..kt {
                let (ot0, ot1) = valid_range(t_out, t_in, dt, st, pt);
                for dh in 0..kh {
                    let (oh0, oh1) = valid_range(h_out, h_in, dh, sh, ph);
                    for dw in 0..kw {
                        let (ow0, ow1) = valid_range(w_out, w_in, dw, sw, pw);
                        if ow0 >= ow1 {
                            continue;
                        }
                        let widx = (((f * c_in + c) * kt + dt) * kh + dh) * kw + dw;
                        let k = wt[widx];
                        let mut acc = T::zero();
                        for ot in ot0..ot1 {
                            let it = ot * st + dt - pt;
                            for oh in oh0..oh1 {
                                let ih = oh * sh + dh - ph;
                                let in_off = it * plane_in + ih * w_in;
                                let g_row = &g_f[ot * plane_out + oh * w_out..][..w_out];
                                if sw == 1 {
                                    let iw0 = ow0 + dw - pw;
                                    let n = ow1 - ow0;
                                    let x_row = &x_c[in_off + iw0..][..n];
                                    let gx_row = &mut gx_c[in_off + iw0..][..n];
                                    for ((&gv, &xv), gxv) in
                                        g_row[ow0..ow1].iter().zip(x_row).zip(gx_row)
                                    {
                                        acc = acc + gv * xv;
                                        *gxv = *gxv + k * gv;
                                    }
                                } else {
                                    for ow in ow0..ow1 {
                                        let iw = in_off + ow * sw + dw - pw;
                                        acc = acc + g_row[ow] * x_c[iw];
                                        gx_c[iw] = gx_c[iw] + k * g_row[ow];
                                    }
                                }
                            }
                        }
                        gw[widx] = gw[widx] + acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(weights.shape().to_vec(), gw)?,
        Tensor::new(vec![f_out], gb)?,
    ))
}

/// Max pooling. Also returns, per output element, the flat input index of
/// the first maximal element in `(t, h, w)` scan order.
pub fn maxpool3d_forward<T: Element>(
    input: &Tensor<T>,
    spec: &PoolSpec,
) -> Result<(Tensor<T>, Vec<usize>)> {
    spec.validate()?;
    let [c, t_in, h_in, w_in] = volume_dims("maxpool3d", input)?;
    let [t_out, h_out, w_out] = spec.output_extents([t_in, h_in, w_in])?;
    let [kt, kh, kw] = spec.kernel();
    let [st, sh, sw] = spec.stride();
    let [_, ph, pw] = spec.padding();
    let x = input.data();

    let n_out = c * t_out * h_out * w_out;
    let mut out = Vec::with_capacity(n_out);
    let mut argmax = Vec::with_capacity(n_out);
    for ch in 0..c {
        for ot in 0..t_out {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for dt in 0..kt {
                        let it = ot * st + dt;
                        if it >= t_in {
                            continue;
                        }
                        for dh in 0..kh {
                            let ih = (oh * sh + dh) as isize - ph as isize;
                            if ih < 0 || ih as usize >= h_in {
                                continue;
                            }
                            for dw in 0..kw {
                                let iw = (ow * sw + dw) as isize - pw as isize;
                                if iw < 0 || iw as usize >= w_in {
                                    continue;
                                }
                                let idx = ((ch * t_in + it) * h_in + ih as usize) * w_in + iw as usize;
                                if best_idx == usize::MAX || x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    debug_assert!(best_idx != usize::MAX);
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    Ok((Tensor::new(vec![c, t_out, h_out, w_out], out)?, argmax))
}

/// Routes each output gradient to the input element recorded in `argmax`.
pub fn maxpool3d_backward<T: Element>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape(
            "maxpool3d_backward",
            format!("{} argmax entries for {} gradients", argmax.len(), grad_out.len()),
        ));
    }
    let mut gx = Tensor::zeros(input_shape);
    let data = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        data[idx] = data[idx] + g;
    }
    Ok(gx)
}

pub fn fc_forward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = match *weights.shape() {
        [m, n] => (m, n),
        ref s => return Err(Error::shape("fc", format!("weights must be 2-D, got {s:?}"))),
    };
    if input.rank() != 1 || input.len() != n {
        return Err(Error::shape(
            "fc",
            format!("input {:?} vs weights [{m},{n}]", input.shape()),
        ));
    }
    if bias.shape() != [m] {
        return Err(Error::shape("fc", format!("bias {:?}, expected [{m}]", bias.shape())));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, &b)| row.iter().zip(x).fold(T::zero(), |a, (&w, &v)| a + w * v) + b)
        .collect();
    Tensor::new(vec![m], out)
}

/// Gradients of an affine map wrt `(input, weights, bias)`.
pub fn fc_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if grad_out.shape() != [m] || input.len() != n {
        return Err(Error::shape("fc_backward", format!("grad {:?}", grad_out.shape())));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); n];
    let mut gw = Vec::with_capacity(m * n);
    for (row, &gi) in weights.data().chunks_exact(n).zip(g) {
        for (j, (&w, &v)) in row.iter().zip(x).enumerate() {
            gx[j] = gx[j] + w * gi;
            gw.push(gi * v);
        }
    }
    Ok((
        Tensor::new(vec![n], gx)?,
        Tensor::new(vec![m, n], gw)?,
        grad_out.clone(),
    ))
}

pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Subgradient at zero is zero.
pub fn relu_backward<T: Element>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Numerically stable softmax over all elements.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Tensor<T> {
    let max = logits
        .data()
        .iter()
        .fold(T::neg_infinity(), |m, &x| m.max(x));
    let exps = logits.map(|x| (x - max).exp());
    let total = exps.sum();
    exps.map(|e| e / total)
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub fn softmax_backward<T: Element>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let dot = probs
        .data()
        .iter()
        .zip(grad_out.data())
        .fold(T::zero(), |a, (&p, &g)| a + p * g);
    let data = probs
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&p, &g)| p * (g - dot))
        .collect();
    Tensor::new(probs.shape().to_vec(), data).expect("shape preserved")
}

/// Elementwise `|a - b|`.
pub fn abs_diff<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "abs_diff",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Gradients of `abs_diff` wrt `(a, b)`; the subgradient where `a == b` is zero.
pub fn abs_diff_backward<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let ga: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .zip(grad_out.data())
        .map(|((&x, &y), &g)| {
            if x > y {
                g
            } else if x < y {
                -g
            } else {
                T::zero()
            }
        })
        .collect();
    let gb = ga.iter().map(|&v| -v).collect();
    (
        Tensor::new(a.shape().to_vec(), ga).expect("shape preserved"),
        Tensor::new(a.shape().to_vec(), gb).expect("shape preserved"),
    )
}
