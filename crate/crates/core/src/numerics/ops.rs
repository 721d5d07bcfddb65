//! Elementwise, matrix and pooling primitives recorded on the tape.

use super::gemm::gemm;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn acc(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("add", va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape(), data)?;
        Ok(self.push(out, &[a, b], move |ctx, g| {
            for v in [a, b] {
                if let Some(s) = g.slot(v) {
                    acc(s, ctx.grad);
                }
            }
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("sub", va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(va.shape(), data)?;
        Ok(self.push(out, &[a, b], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(s, ctx.grad);
            }
            if let Some(s) = g.slot(b) {
                for (d, x) in s.iter_mut().zip(ctx.grad) {
                    *d -= x;
                }
            }
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("mul", va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.shape(), data)?;
        Ok(self.push(out, &[a, b], move |ctx, g| {
            if g.wants(a) {
                let vb = ctx.value(b).data().to_vec();
                let s = g.slot(a).unwrap();
                for ((d, x), y) in s.iter_mut().zip(ctx.grad).zip(&vb) {
                    *d += x * y;
                }
            }
            if g.wants(b) {
                let va = ctx.value(a).data().to_vec();
                let s = g.slot(b).unwrap();
                for ((d, x), y) in s.iter_mut().zip(ctx.grad).zip(&va) {
                    *d += x * y;
                }
            }
        }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = self.value(a);
        let out = Tensor::new(va.shape(), va.data().iter().map(|x| x * c).collect()).unwrap();
        self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                for (d, x) in s.iter_mut().zip(ctx.grad) {
                    *d += x * c;
                }
            }
        })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let va = self.value(a);
        let out = Tensor::new(va.shape(), va.data().iter().map(|x| x + c).collect()).unwrap();
        self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(s, ctx.grad);
            }
        })
    }

    /// Elementwise map with a derivative expressed through input and output.
    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: fn(f64, f64) -> f64,
    ) -> Var {
        let va = self.value(a);
        let out = Tensor::new(va.shape(), va.data().iter().map(|&x| f(x)).collect()).unwrap();
        self.push(out, &[a], move |ctx, g| {
            let x = ctx.value(a).data().to_vec();
            let y = ctx.out.data();
            if let Some(s) = g.slot(a) {
                for i in 0..s.len() {
                    s[i] += ctx.grad[i] * df(x[i], y[i]);
                }
            }
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, |_, y| y)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), &[a], move |ctx, g| {
            let up = ctx.grad[0];
            if let Some(s) = g.slot(a) {
                s.iter_mut().for_each(|d| *d += up);
            }
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `Σ a ⊙ w` for a constant weight tensor.
    pub fn dot_const(&mut self, a: Var, w: &Tensor) -> Result<Var> {
        same_shape("dot_const", self.value(a), w)?;
        let v = self.value(a).dot(w);
        let w = w.data().to_vec();
        Ok(self.push(Tensor::scalar(v), &[a], move |ctx, g| {
            let up = ctx.grad[0];
            if let Some(s) = g.slot(a) {
                for (d, x) in s.iter_mut().zip(&w) {
                    *d += up * x;
                }
            }
        }))
    }

    /// Sum of several same-shape values.
    pub fn add_n(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| Error::InvalidInput("add_n of nothing".into()))?;
        let mut out = self.value(first).clone();
        for &v in &vars[1..] {
            same_shape("add_n", &out, self.value(v))?;
            acc(out.data_mut(), self.value(v).data());
        }
        let vars = vars.to_vec();
        let inputs = vars.clone();
        Ok(self.push(out, &inputs, move |ctx, g| {
            for &v in &vars {
                if let Some(s) = g.slot(v) {
                    acc(s, ctx.grad);
                }
            }
        }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(s, ctx.grad);
            }
        }))
    }

    /// `a · b` for `m × k` and `k × n` matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let out = Tensor::new([m, n], out)?;
        Ok(self.push(out, &[a, b], move |ctx, g| {
            if g.wants(a) {
                let vb = ctx.value(b).data();
                let s = g.slot(a).unwrap();
                gemm(m, n, k, ctx.grad, false, vb, true, 1.0, s);
            }
            if g.wants(b) {
                let va = ctx.value(a).data();
                let s = g.slot(b).unwrap();
                gemm(k, m, n, va, true, ctx.grad, false, 1.0, s);
            }
        }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        let va = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = va[i * c + j];
            }
        }
        let out = Tensor::new([c, r], out)?;
        Ok(self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                for i in 0..r {
                    for j in 0..c {
                        s[i * c + j] += ctx.grad[j * r + i];
                    }
                }
            }
        }))
    }

    /// Concatenates along the leading axis (rows of matrices, channels of grids).
    pub fn concat(&mut self, vars: &[Var]) -> Result<Var> {
        let first = self.value(
            *vars
                .first()
                .ok_or_else(|| Error::InvalidInput("concat of nothing".into()))?,
        );
        let tail: Vec<usize> = first.shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        let mut spans = Vec::with_capacity(vars.len());
        for &v in vars {
            let t = self.value(v);
            if t.shape()[1..] != tail[..] {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} vs trailing {:?}", t.shape(), tail),
                ));
            }
            spans.push((v, data.len(), t.len()));
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, vars, move |ctx, g| {
            for &(v, off, len) in &spans {
                if let Some(s) = g.slot(v) {
                    acc(s, &ctx.grad[off..off + len]);
                }
            }
        }))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var> {
        let rows = self.value(vars[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(vars.len());
        for &v in vars {
            let (r, c) = self.value(v).dims2()?;
            if r != rows {
                return Err(Error::shape("concat_cols", format!("{r} vs {rows} rows")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&v, &w) in vars.iter().zip(&widths) {
            let d = self.value(v).data();
            for i in 0..rows {
                out[i * total + off..i * total + off + w].copy_from_slice(&d[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let out = Tensor::new([rows, total], out)?;
        let parts: Vec<(Var, usize)> = vars.iter().copied().zip(widths).collect();
        Ok(self.push(out, vars, move |ctx, g| {
            let mut off = 0;
            for &(v, w) in &parts {
                if let Some(s) = g.slot(v) {
                    for i in 0..rows {
                        acc(
                            &mut s[i * w..(i + 1) * w],
                            &ctx.grad[i * total + off..i * total + off + w],
                        );
                    }
                }
                off += w;
            }
        }))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if start > end || end > c {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {c}")));
        }
        let w = end - start;
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&d[i * c + start..i * c + end]);
        }
        let out = Tensor::new([r, w], out)?;
        Ok(self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                for i in 0..r {
                    acc(
                        &mut s[i * c + start..i * c + end],
                        &ctx.grad[i * w..(i + 1) * w],
                    );
                }
            }
        }))
    }

    /// A contiguous run of the flattened data, reshaped.
    pub fn slice_flat(&mut self, a: Var, start: usize, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        let n = self.value(a).len();
        if start + len > n {
            return Err(Error::shape(
                "slice_flat",
                format!("{start}+{len} exceeds {n}"),
            ));
        }
        let out = Tensor::new(shape, self.value(a).data()[start..start + len].to_vec())?;
        Ok(self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(&mut s[start..start + len], ctx.grad);
            }
        }))
    }

    /// `a[i, :] + bias` for every row of an `r × c` matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if self.value(bias).len() != c {
            return Err(Error::shape(
                "add_row_bias",
                format!("bias {} for {c} columns", self.value(bias).len()),
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for i in 0..r {
            acc(&mut out[i * c..(i + 1) * c], b);
        }
        let out = Tensor::new([r, c], out)?;
        Ok(self.push(out, &[a, bias], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(s, ctx.grad);
            }
            if let Some(s) = g.slot(bias) {
                for i in 0..r {
                    acc(s, &ctx.grad[i * c..(i + 1) * c]);
                }
            }
        }))
    }

    /// `a[i, :] + bias[i]` for every row of an `r × c` matrix.
    pub fn add_col_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if self.value(bias).len() != r {
            return Err(Error::shape(
                "add_col_bias",
                format!("bias {} for {r} rows", self.value(bias).len()),
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for i in 0..r {
            out[i * c..(i + 1) * c].iter_mut().for_each(|v| *v += b[i]);
        }
        let out = Tensor::new([r, c], out)?;
        Ok(self.push(out, &[a, bias], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(s, ctx.grad);
            }
            if let Some(s) = g.slot(bias) {
                for i in 0..r {
                    s[i] += ctx.grad[i * c..(i + 1) * c].iter().sum::<f64>();
                }
            }
        }))
    }

    /// Per-channel bias on a `C × H × W` grid.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let flat = self.reshape(x, &[c, h * w])?;
        let y = self.add_col_bias(flat, bias)?;
        self.reshape(y, &[c, h, w])
    }

    /// Subtracts row `index` of an `n × m` matrix from every row.
    pub fn sub_row(&mut self, a: Var, index: usize) -> Result<Var> {
        let (n, m) = self.value(a).dims2()?;
        if index >= n {
            return Err(Error::shape("sub_row", format!("row {index} of {n}")));
        }
        let d = self.value(a).data();
        let root: Vec<f64> = d[index * m..(index + 1) * m].to_vec();
        let mut out = d.to_vec();
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] -= root[j];
            }
        }
        let out = Tensor::new([n, m], out)?;
        Ok(self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                acc(s, ctx.grad);
                for i in 0..n {
                    for j in 0..m {
                        s[index * m + j] -= ctx.grad[i * m + j];
                    }
                }
            }
        }))
    }

    /// Adds a length-`m` vector to every row of an `n × m` matrix.
    pub fn add_vec_rows(&mut self, a: Var, v: Var) -> Result<Var> {
        self.add_row_bias(a, v)
    }

    /// Row-wise softmax of an `r × c` matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if c == 0 {
            return Err(Error::shape("softmax_rows", "empty rows"));
        }
        let d = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - mx).exp();
                out[i * c + j] = e;
                z += e;
            }
            out[i * c..(i + 1) * c].iter_mut().for_each(|v| *v /= z);
        }
        let out = Tensor::new([r, c], out)?;
        Ok(self.push(out, &[a], move |ctx, g| {
            if let Some(s) = g.slot(a) {
                let y = ctx.out.data();
                for i in 0..r {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &ctx.grad[i * c..(i + 1) * c];
                    let dotp: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        s[i * c + j] += yr[j] * (gr[j] - dotp);
                    }
                }
            }
        }))
    }

    /// Normalizes each row of an `r × c` matrix to zero mean and unit
    /// variance, then applies per-column gain and bias.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        if self.value(gain).len() != c || self.value(bias).len() != c {
            return Err(Error::shape("layer_norm", "gain/bias width"));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("layer-norm epsilon must be > 0".into()));
        }
        let d = self.value(x).data();
        let gv = self.value(gain).data();
        let bv = self.value(bias).data();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mu) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gv[j] + bv[j];
            }
        }
        let out = Tensor::new([r, c], out)?;
        Ok(self.push(out, &[x, gain, bias], move |ctx, g| {
            let gv = ctx.value(gain).data().to_vec();
            if let Some(s) = g.slot(gain) {
                for i in 0..r {
                    for j in 0..c {
                        s[j] += ctx.grad[i * c + j] * xhat[i * c + j];
                    }
                }
            }
            if let Some(s) = g.slot(bias) {
                for i in 0..r {
                    acc(s, &ctx.grad[i * c..(i + 1) * c]);
                }
            }
            if let Some(s) = g.slot(x) {
                let cf = c as f64;
                for i in 0..r {
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..c {
                        let dh = ctx.grad[i * c + j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * xhat[i * c + j];
                    }
                    for j in 0..c {
                        let dh = ctx.grad[i * c + j] * gv[j];
                        s[i * c + j] +=
                            inv_std[i] * (dh - sum_dh / cf - xhat[i * c + j] * sum_dh_h / cf);
                    }
                }
            }
        }))
    }

    /// `x[c, y, x] * a[0, y, x]`: a single-channel map gating every channel.
    pub fn mul_spatial(&mut self, x: Var, a: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let (ac, ah, aw) = self.value(a).dims3()?;
        if ac != 1 || ah != h || aw != w {
            return Err(Error::shape(
                "mul_spatial",
                format!("{c}x{h}x{w} gated by {ac}x{ah}x{aw}"),
            ));
        }
        let hw = h * w;
        let xd = self.value(x).data();
        let ad = self.value(a).data();
        let mut out = vec![0.0; c * hw];
        for ch in 0..c {
            for p in 0..hw {
                out[ch * hw + p] = xd[ch * hw + p] * ad[p];
            }
        }
        let out = Tensor::new([c, h, w], out)?;
        Ok(self.push(out, &[x, a], move |ctx, g| {
            if g.wants(x) {
                let ad = ctx.value(a).data().to_vec();
                let s = g.slot(x).unwrap();
                for ch in 0..c {
                    for p in 0..hw {
                        s[ch * hw + p] += ctx.grad[ch * hw + p] * ad[p];
                    }
                }
            }
            if g.wants(a) {
                let xd = ctx.value(x).data().to_vec();
                let s = g.slot(a).unwrap();
                for ch in 0..c {
                    for p in 0..hw {
                        s[p] += ctx.grad[ch * hw + p] * xd[ch * hw + p];
                    }
                }
            }
        }))
    }

    /// Mean over the spatial axes: `C × H × W → C`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let hw = h * w;
        let d = self.value(x).data();
        let out: Vec<f64> = (0..c)
            .map(|ch| d[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(self.push(Tensor::from_vec(out), &[x], move |ctx, g| {
            if let Some(s) = g.slot(x) {
                for ch in 0..c {
                    let v = ctx.grad[ch] / hw as f64;
                    s[ch * hw..(ch + 1) * hw].iter_mut().for_each(|d| *d += v);
                }
            }
        }))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let (oh, ow) = (h * factor, w * factor);
        let d = self.value(x).data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[(ch * oh + y) * ow + xx] = d[(ch * h + y / factor) * w + xx / factor];
                }
            }
        }
        let out = Tensor::new([c, oh, ow], out)?;
        Ok(self.push(out, &[x], move |ctx, g| {
            if let Some(s) = g.slot(x) {
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            s[(ch * h + y / factor) * w + xx / factor] +=
                                ctx.grad[(ch * oh + y) * ow + xx];
                        }
                    }
                }
            }
        }))
    }

    /// Average pooling with a square window equal to its stride.
    pub fn avg_pool(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::shape("avg_pool", format!("{h}x{w} by {factor}")));
        }
        let (oh, ow) = (h / factor, w / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let d = self.value(x).data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    out[(ch * oh + y / factor) * ow + xx / factor] += d[(ch * h + y) * w + xx] * norm;
                }
            }
        }
        let out = Tensor::new([c, oh, ow], out)?;
        Ok(self.push(out, &[x], move |ctx, g| {
            if let Some(s) = g.slot(x) {
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            s[(ch * h + y) * w + xx] +=
                                ctx.grad[(ch * oh + y / factor) * ow + xx / factor] * norm;
                        }
                    }
                }
            }
        }))
    }

    /// Fully connected layer over rows: `input · weightᵀ + bias`, with
    /// `weight` stored `out × in` like a convolution kernel.
    pub fn linear_rows(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let wt = self.transpose(weight)?;
        let y = self.matmul(input, wt)?;
        self.add_row_bias(y, bias)
    }

    /// `weight · v + bias` for a vector `v`.
    pub fn linear_vec(&mut self, v: Var, weight: Var, bias: Var) -> Result<Var> {
        let n = self.value(v).len();
        let col = self.reshape(v, &[n, 1])?;
        let y = self.matmul(weight, col)?;
        let r = self.value(y).len();
        let y = self.reshape(y, &[r])?;
        self.add(y, bias)
    }
}

/// Plain (tape-free) affine map `input · weight + bias` over rows.
///
/// `input` is `n × k`, `weight` is `k × m`, `bias` has length `m`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (n, k) = input.dims2()?;
    let (k2, m) = weight.dims2()?;
    if k != k2 || bias.len() != m {
        return Err(Error::shape(
            "linear",
            format!("{n}x{k} · {k2}x{m} + bias {}", bias.len()),
        ));
    }
    let mut out = vec![0.0; n * m];
    gemm(n, k, m, input.data(), false, weight.data(), false, 0.0, &mut out);
    for i in 0..n {
        acc(&mut out[i * m..(i + 1) * m], bias);
    }
    Tensor::new([n, m], out)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    Tensor::new(x.shape(), x.data().iter().map(|&v| sigmoid_scalar(v)).collect()).unwrap()
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::new(x.shape(), x.data().iter().map(|&v| v.max(0.0)).collect()).unwrap()
}

/// Softmax along the last axis.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let c = *x.shape().last().unwrap_or(&0);
    if c == 0 {
        return Err(Error::shape("softmax", "axis length must be >= 1"));
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(c) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::new(x.shape(), out)
}

/// Layer norm along the last axis without affine terms.
pub fn layer_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("layer-norm epsilon must be > 0".into()));
    }
    let c = *x.shape().last().unwrap_or(&0);
    if c == 0 {
        return Err(Error::shape("layer_norm", "empty axis"));
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(c) {
        let mu = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
        let is = 1.0 / (var + eps).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mu) * is);
    }
    Tensor::new(x.shape(), out)
}
