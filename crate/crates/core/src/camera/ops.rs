//! Tape versions of projection, joint sampling and plane projection.

use super::bilinear::corners;
use super::check_plane_size;
use crate::numerics::{Tape, Tensor, Var};
use crate::{Error, Result};

fn coords_of(t: &Tensor, op: &'static str) -> Result<Vec<[f64; 2]>> {
    let (n, d) = t.dims2()?;
    if d != 2 {
        return Err(Error::shape(op, format!("coordinates must be n×2, got n×{d}")));
    }
    Ok((0..n).map(|i| [t.data()[2 * i], t.data()[2 * i + 1]]).collect())
}

impl Tape {
    /// Weak-perspective projection of `[n, 3]` points with camera `[s, tx, ty]`.
    pub fn project(&mut self, points: Var, cam: Var) -> Result<Var> {
        let (n, d) = self.value(points).dims2()?;
        if d != 3 || self.value(cam).len() != 3 {
            return Err(Error::shape("project", "points must be n×3 and the camera length 3"));
        }
        let p = self.value(points).data();
        let c = self.value(cam).data();
        let (s, tx, ty) = (c[0], c[1], c[2]);
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            out.push(s * p[3 * i] + tx);
            out.push(s * p[3 * i + 1] + ty);
        }
        Ok(self.push(Tensor::new([n, 2], out)?, &[points, cam], move |ctx, g| {
            let gr = ctx.grad;
            let s = ctx.value(cam).data()[0];
            if let Some(gp) = g.slot(points) {
                for i in 0..n {
                    gp[3 * i] += s * gr[2 * i];
                    gp[3 * i + 1] += s * gr[2 * i + 1];
                }
            }
            if g.wants(cam) {
                let p = ctx.value(points).data();
                let mut acc = [0.0; 3];
                for i in 0..n {
                    acc[0] += p[3 * i] * gr[2 * i] + p[3 * i + 1] * gr[2 * i + 1];
                    acc[1] += gr[2 * i];
                    acc[2] += gr[2 * i + 1];
                }
                let gc = g.slot(cam).expect("wanted");
                for k in 0..3 {
                    gc[k] += acc[k];
                }
            }
        }))
    }

    /// Bilinear read of `[C, H, W]` at `[J, 2]` cell coordinates (clamped),
    /// giving `[J, C]`.
    pub fn sample_joints(&mut self, fmap: Var, coords: Var) -> Result<Var> {
        let (c, h, w) = self.value(fmap).dims3()?;
        let pts = coords_of(self.value(coords), "sample_joints")?;
        let j = pts.len();
        let plane = h * w;
        let src = self.value(fmap).data();
        let mut out = vec![0.0; j * c];
        for (ji, p) in pts.iter().enumerate() {
            for k in corners(*p, h, w, true) {
                for ch in 0..c {
                    out[ji * c + ch] += k.w * src[ch * plane + k.idx];
                }
            }
        }
        Ok(self.push(Tensor::new([j, c], out)?, &[fmap, coords], move |ctx, g| {
            let gr = ctx.grad;
            if let Some(gm) = g.slot(fmap) {
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, h, w, true) {
                        for ch in 0..c {
                            gm[ch * plane + k.idx] += k.w * gr[ji * c + ch];
                        }
                    }
                }
            }
            if g.wants(coords) {
                let src = ctx.value(fmap).data();
                let gc = g.slot(coords).expect("wanted");
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, h, w, true) {
                        let mut dot = 0.0;
                        for ch in 0..c {
                            dot += gr[ji * c + ch] * src[ch * plane + k.idx];
                        }
                        gc[2 * ji] += k.dx * dot;
                        gc[2 * ji + 1] += k.dy * dot;
                    }
                }
            }
        }))
    }

    /// Fused plane projection and 1×1 reduction.
    ///
    /// Joint `j` with feature `f_j` (row of `[J, C]`) is first mapped by its
    /// own block `W_j` of the `[O, J·C]` weight and then splatted, so the
    /// result equals a 1×1 convolution over the `J·C`-channel stack of
    /// per-joint planes without materialising it.
    pub fn splat_reduce(&mut self, feats: Var, coords: Var, weight: Var, height: usize, width: usize) -> Result<Var> {
        check_plane_size(height, width)?;
        let (j, c) = self.value(feats).dims2()?;
        let pts = coords_of(self.value(coords), "splat_reduce")?;
        let (o, jc) = self.value(weight).dims2()?;
        if pts.len() != j || jc != j * c {
            return Err(Error::shape(
                "splat_reduce",
                format!("{j} joints × {c} channels vs {} coordinates and weight {o}×{jc}", pts.len()),
            ));
        }
        let f = self.value(feats).data();
        let wt = self.value(weight).data();
        // g[j, o] = Σ_c W[o, j·C + c] f[j, c]
        let mut mapped = vec![0.0; j * o];
        for ji in 0..j {
            for oc in 0..o {
                let row = &wt[oc * jc + ji * c..oc * jc + (ji + 1) * c];
                mapped[ji * o + oc] = row.iter().zip(&f[ji * c..(ji + 1) * c]).map(|(a, b)| a * b).sum();
            }
        }
        let plane = height * width;
        let mut out = vec![0.0; o * plane];
        for (ji, p) in pts.iter().enumerate() {
            for k in corners(*p, height, width, false) {
                for oc in 0..o {
                    out[oc * plane + k.idx] += k.w * mapped[ji * o + oc];
                }
            }
        }
        let out = Tensor::new([o, height, width], out)?;
        Ok(self.push(out, &[feats, coords, weight], move |ctx, g| {
            let gr = ctx.grad;
            // s[j, o]: the output gradient read back at each joint
            let mut s = vec![0.0; j * o];
            for (ji, p) in pts.iter().enumerate() {
                for k in corners(*p, height, width, false) {
                    for oc in 0..o {
                        s[ji * o + oc] += k.w * gr[oc * plane + k.idx];
                    }
                }
            }
            if g.wants(coords) {
                let gc = g.slot(coords).expect("wanted");
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, height, width, false) {
                        let mut dot = 0.0;
                        for oc in 0..o {
                            dot += gr[oc * plane + k.idx] * mapped[ji * o + oc];
                        }
                        gc[2 * ji] += k.dx * dot;
                        gc[2 * ji + 1] += k.dy * dot;
                    }
                }
            }
            if let Some(gf) = g.slot(feats) {
                let wt = ctx.value(weight).data();
                for ji in 0..j {
                    for oc in 0..o {
                        let sv = s[ji * o + oc];
                        if sv == 0.0 {
                            continue;
                        }
                        let row = &wt[oc * jc + ji * c..oc * jc + (ji + 1) * c];
                        for (d, w) in gf[ji * c..(ji + 1) * c].iter_mut().zip(row) {
                            *d += w * sv;
                        }
                    }
                }
            }
            if let Some(gw) = g.slot(weight) {
                let f = ctx.value(feats).data();
                for ji in 0..j {
                    for oc in 0..o {
                        let sv = s[ji * o + oc];
                        if sv == 0.0 {
                            continue;
                        }
                        let row = &mut gw[oc * jc + ji * c..oc * jc + (ji + 1) * c];
                        for (d, x) in row.iter_mut().zip(&f[ji * c..(ji + 1) * c]) {
                            *d += x * sv;
                        }
                    }
                }
            }
        }))
    }

    /// Explicit per-joint planes `[J·C, H, W]`: joint `j` occupies channels
    /// `j·C .. (j+1)·C`.
    pub fn splat_planes(&mut self, feats: Var, coords: Var, height: usize, width: usize) -> Result<Var> {
        check_plane_size(height, width)?;
        let (j, c) = self.value(feats).dims2()?;
        let pts = coords_of(self.value(coords), "splat_planes")?;
        if pts.len() != j {
            return Err(Error::shape("splat_planes", "one coordinate per joint"));
        }
        let plane = height * width;
        let f = self.value(feats).data();
        let mut out = vec![0.0; j * c * plane];
        for (ji, p) in pts.iter().enumerate() {
            for k in corners(*p, height, width, false) {
                for ch in 0..c {
                    out[(ji * c + ch) * plane + k.idx] += k.w * f[ji * c + ch];
                }
            }
        }
        let out = Tensor::new([j * c, height, width], out)?;
        Ok(self.push(out, &[feats, coords], move |ctx, g| {
            let gr = ctx.grad;
            if let Some(gf) = g.slot(feats) {
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, height, width, false) {
                        for ch in 0..c {
                            gf[ji * c + ch] += k.w * gr[(ji * c + ch) * plane + k.idx];
                        }
                    }
                }
            }
            if g.wants(coords) {
                let f = ctx.value(feats).data();
                let gc = g.slot(coords).expect("wanted");
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, height, width, false) {
                        let mut dot = 0.0;
                        for ch in 0..c {
                            dot += gr[(ji * c + ch) * plane + k.idx] * f[ji * c + ch];
                        }
                        gc[2 * ji] += k.dx * dot;
                        gc[2 * ji + 1] += k.dy * dot;
                    }
                }
            }
        }))
    }

    /// All joints splatted into one shared `[C, H, W]` plane.
    pub fn splat_sum(&mut self, feats: Var, coords: Var, height: usize, width: usize) -> Result<Var> {
        check_plane_size(height, width)?;
        let (j, c) = self.value(feats).dims2()?;
        let pts = coords_of(self.value(coords), "splat_sum")?;
        if pts.len() != j {
            return Err(Error::shape("splat_sum", "one coordinate per joint"));
        }
        let plane = height * width;
        let f = self.value(feats).data();
        let mut out = vec![0.0; c * plane];
        for (ji, p) in pts.iter().enumerate() {
            for k in corners(*p, height, width, false) {
                for ch in 0..c {
                    out[ch * plane + k.idx] += k.w * f[ji * c + ch];
                }
            }
        }
        let out = Tensor::new([c, height, width], out)?;
        Ok(self.push(out, &[feats, coords], move |ctx, g| {
            let gr = ctx.grad;
            if let Some(gf) = g.slot(feats) {
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, height, width, false) {
                        for ch in 0..c {
                            gf[ji * c + ch] += k.w * gr[ch * plane + k.idx];
                        }
                    }
                }
            }
            if g.wants(coords) {
                let f = ctx.value(feats).data();
                let gc = g.slot(coords).expect("wanted");
                for (ji, p) in pts.iter().enumerate() {
                    for k in corners(*p, height, width, false) {
                        let mut dot = 0.0;
                        for ch in 0..c {
                            dot += gr[ch * plane + k.idx] * f[ji * c + ch];
                        }
                        gc[2 * ji] += k.dx * dot;
                        gc[2 * ji + 1] += k.dy * dot;
                    }
                }
            }
        }))
    }

    /// One Gaussian heatmap per joint, `[J, H, W]`, centred on the cell
    /// coordinates with standard deviation `sigma` cells.
    pub fn gaussian_heatmaps(&mut self, coords: Var, height: usize, width: usize, sigma: f64) -> Result<Var> {
        check_plane_size(height, width)?;
        let pts = coords_of(self.value(coords), "gaussian_heatmaps")?;
        let j = pts.len();
        let plane = height * width;
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut out = vec![0.0; j * plane];
        for (ji, p) in pts.iter().enumerate() {
            for y in 0..height {
                for x in 0..width {
                    let (dx, dy) = (x as f64 - p[0], y as f64 - p[1]);
                    out[ji * plane + y * width + x] = (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }
        let out = Tensor::new([j, height, width], out)?;
        Ok(self.push(out, &[coords], move |ctx, g| {
            let Some(gc) = g.slot(coords) else { return };
            let v = ctx.out.data();
            for (ji, p) in pts.iter().enumerate() {
                let (mut ax, mut ay) = (0.0, 0.0);
                for y in 0..height {
                    for x in 0..width {
                        let i = ji * plane + y * width + x;
                        let e = ctx.grad[i] * v[i] * 2.0 * inv;
                        ax += e * (x as f64 - p[0]);
                        ay += e * (y as f64 - p[1]);
                    }
                }
                gc[2 * ji] += ax;
                gc[2 * ji + 1] += ay;
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::numerics::gradcheck::{check_gradients, random_projection};
    use crate::numerics::{Tape, Tensor};

    fn coords(j: usize, side: f64, seed: usize) -> Tensor {
        // keep away from integer kinks
        Tensor::from_fn([j, 2], |i| {
            let r = ((i + seed) as f64 * 0.618_033_988_7).fract();
            let v = r * (side - 1.0);
            if (v - v.round()).abs() < 1e-2 { v + 0.05 } else { v }
        })
    }

    #[test]
    fn fused_reduce_equals_planes_then_conv() {
        let (j, c, o, h) = (5, 3, 4, 6);
        let f = Tensor::from_fn([j, c], |i| (i as f64 * 0.7).sin());
        let p = coords(j, h as f64, 1);
        let w = Tensor::from_fn([o, j * c], |i| (i as f64 * 0.3).cos());
        let mut t = Tape::new();
        let (fv, pv, wv) = (t.constant(f), t.constant(p), t.constant(w.clone()));
        let fused = t.splat_reduce(fv, pv, wv, h, h).unwrap();
        let planes = t.splat_planes(fv, pv, h, h).unwrap();
        let k = t.constant(w.reshape([o, j * c, 1, 1]).unwrap());
        let conv = t.conv2d(planes, k, None, 1, 0).unwrap();
        assert!(t.value(fused).max_abs_diff(t.value(conv)) < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (j, c, o, h) = (4, 3, 2, 5);
        let f = Tensor::from_fn([j, c], |i| (i as f64 * 0.9).sin());
        let p = coords(j, h as f64, 3);
        let w = Tensor::from_fn([o, j * c], |i| (i as f64 * 0.4).cos());
        let m = Tensor::from_fn([c, h, h], |i| (i as f64 * 0.21).sin());
        let pts3 = Tensor::from_fn([j, 3], |i| (i as f64 * 0.5).cos());
        let cam = Tensor::from_vec(vec![1.7, 0.4, -0.2]);
        let r = check_gradients(&[f, p, w, m, pts3, cam], 1e-6, |tp, v| {
            let a = tp.splat_reduce(v[0], v[1], v[2], h, h)?;
            let b = tp.splat_planes(v[0], v[1], h, h)?;
            let s = tp.splat_sum(v[0], v[1], h, h)?;
            let q = tp.sample_joints(v[3], v[1])?;
            let hm = tp.gaussian_heatmaps(v[1], h, h, 1.0)?;
            let pr = tp.project(v[4], v[5])?;
            let parts: Vec<_> = [a, b, s, q, hm, pr]
                .into_iter()
                .map(|x| {
                    let n = tp.value(x).len();
                    tp.reshape(x, &[n])
                })
                .collect::<crate::Result<_>>()?;
            let all = tp.concat(&parts)?;
            random_projection(tp, all, 9)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn splat_is_adjoint_of_sampling() {
        let (j, c, h) = (6, 3, 7);
        let f = Tensor::from_fn([j, c], |i| (i as f64 * 1.3).sin());
        let p = coords(j, h as f64, 5);
        let grid = Tensor::from_fn([j * c, h, h], |i| (i as f64 * 0.37).cos());
        let mut t = Tape::new();
        let (fv, pv, gv) = (t.constant(f.clone()), t.constant(p), t.constant(grid.clone()));
        let planes = t.splat_planes(fv, pv, h, h).unwrap();
        let read = t.sample_joints(gv, pv).unwrap();
        let lhs = t.value(planes).dot(&grid);
        let r = t.value(read).data();
        let rhs: f64 = (0..j)
            .flat_map(|jj| (0..c).map(move |cc| (jj, cc)))
            .map(|(jj, cc)| f.data()[jj * c + cc] * r[jj * j * c + jj * c + cc])
            .sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn coincident_joints_stay_separable_only_in_planes() {
        let (c, h) = (3, 5);
        let f = Tensor::new([2, c], vec![1.0, -2.0, 0.5, 4.0, 0.25, -1.0]).unwrap();
        let p = Tensor::new([2, 2], vec![2.0, 3.0, 2.0, 3.0]).unwrap();
        let mut t = Tape::new();
        let (fv, pv) = (t.constant(f.clone()), t.constant(p));
        let planes = t.splat_planes(fv, pv, h, h).unwrap();
        let back = t.sample_joints(planes, pv).unwrap();
        let b = t.value(back).data();
        for jj in 0..2 {
            assert_eq!(&b[jj * 2 * c + jj * c..jj * 2 * c + (jj + 1) * c], &f.data()[jj * c..(jj + 1) * c]);
        }
        let summed = t.splat_sum(fv, pv, h, h).unwrap();
        let back = t.sample_joints(summed, pv).unwrap();
        let b = t.value(back).data();
        assert_eq!(&b[..c], &b[c..]);
        assert_eq!(&b[..c], &[5.0, -1.75, -0.5]);
    }
}
