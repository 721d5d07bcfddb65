//! 2D cross-correlation via im2col and GEMM.

use super::gemm::gemm;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (c, h, w) = match input {
            [c, h, w] => (*c, *h, *w),
            s => return Err(Error::shape("conv2d", format!("input must be C×H×W, got {s:?}"))),
        };
        let (o, kc, kh, kw) = match kernel {
            [o, kc, kh, kw] => (*o, *kc, *kh, *kw),
            s => return Err(Error::shape("conv2d", format!("kernel must be O×C×k×k, got {s:?}"))),
        };
        if kc != c {
            return Err(Error::shape("conv2d", format!("kernel expects {kc} channels, input has {c}")));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape("conv2d", format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be >= 1"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape("conv2d", "kernel larger than padded input"));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Geometry { c, h, w, o, k: kh, stride, pad, oh, ow })
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let Geometry { c, h, w, k, stride, pad, oh, ow, .. } = *self;
        let n = oh * ow;
        let mut cols = vec![0.0; c * k * k * n];
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * ow + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let Geometry { c, h, w, k, stride, pad, oh, ow, .. } = *self;
        let n = oh * ow;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ci * h + iy as usize) * w;
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dx[base + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Tape-free cross-correlation of a `C×H×W` input with an `O×C×k×k` kernel.
///
/// Output size is `(H + 2·pad − k)/stride + 1` per spatial axis.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = Geometry::new(input.shape(), kernel.shape(), stride, pad)?;
    let n = g.oh * g.ow;
    let ck = g.c * g.k * g.k;
    let mut out = vec![0.0; g.o * n];
    if g.is_pointwise() {
        gemm(g.o, ck, n, kernel.data(), false, input.data(), false, 0.0, &mut out);
    } else {
        let cols = g.im2col(input.data());
        gemm(g.o, ck, n, kernel.data(), false, &cols, false, 0.0, &mut out);
    }
    Tensor::new([g.o, g.oh, g.ow], out)
}

impl Tape {
    /// Recorded convolution with an optional per-output-channel bias.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let g = Geometry::new(self.value(x).shape(), self.value(kernel).shape(), stride, pad)?;
        if let Some(b) = bias {
            if self.value(b).len() != g.o {
                return Err(Error::shape("conv2d", "bias length must equal output channels"));
            }
        }
        let n = g.oh * g.ow;
        let ck = g.c * g.k * g.k;
        let cols = (!g.is_pointwise()).then(|| g.im2col(self.value(x).data()));
        let mut out = vec![0.0; g.o * n];
        {
            let b_mat = cols.as_deref().unwrap_or(self.value(x).data());
            gemm(g.o, ck, n, self.value(kernel).data(), false, b_mat, false, 0.0, &mut out);
        }
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for oc in 0..g.o {
                out[oc * n..(oc + 1) * n].iter_mut().for_each(|v| *v += bv[oc]);
            }
        }
        let out = Tensor::new([g.o, g.oh, g.ow], out)?;
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        Ok(self.push(out, &inputs, move |ctx, grads| {
            let gy = ctx.grad;
            if grads.wants(kernel) {
                let b_mat = cols.as_deref().unwrap_or(ctx.value(x).data());
                let s = grads.slot(kernel).unwrap();
                gemm(g.o, n, ck, gy, false, b_mat, true, 1.0, s);
            }
            if grads.wants(x) {
                let wk = ctx.value(kernel).data();
                if g.is_pointwise() {
                    let s = grads.slot(x).unwrap();
                    gemm(ck, g.o, n, wk, true, gy, false, 1.0, s);
                } else {
                    let mut dcols = vec![0.0; ck * n];
                    gemm(ck, g.o, n, wk, true, gy, false, 0.0, &mut dcols);
                    let s = grads.slot(x).unwrap();
                    g.col2im(&dcols, s);
                }
            }
            if let Some(b) = bias {
                if let Some(s) = grads.slot(b) {
                    for oc in 0..g.o {
                        s[oc] += gy[oc * n..(oc + 1) * n].iter().sum::<f64>();
                    }
                }
            }
        }))
    }
}
