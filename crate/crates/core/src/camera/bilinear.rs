//! The shared bilinear kernel.

/// One of the up to four cells touched by a bilinear read or write.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    /// Flat index `y · W + x` within a plane.
    pub idx: usize,
    pub w: f64,
    /// d`w`/dx and d`w`/dy; zero along a clamped axis.
    pub dx: f64,
    pub dy: f64,
}

/// Cells and weights for point `p = (x, y)` in cell units.
///
/// With `clamp`, the point is first moved onto the map (so weights always
/// sum to one). Without it, cells outside the map are dropped.
pub fn corners(p: [f64; 2], height: usize, width: usize, clamp: bool) -> impl Iterator<Item = Corner> {
    let (mut x, mut y) = (p[0], p[1]);
    let (mut gx, mut gy) = (1.0, 1.0);
    if clamp {
        let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
        if !(0.0..=mx).contains(&x) {
            x = x.clamp(0.0, mx);
            gx = 0.0;
        }
        if !(0.0..=my).contains(&y) {
            y = y.clamp(0.0, my);
            gy = 0.0;
        }
    }
    let outside = !(x > -1.0 && y > -1.0 && x < width as f64 && y < height as f64);
    if outside {
        // far-off or NaN points touch nothing; keeps the integer casts sane
        x = -2.0;
        y = -2.0;
    }
    let (fx, fy) = (x.floor(), y.floor());
    let (ax, ay) = (x - fx, y - fy);
    let (x0, y0) = (fx as i64, fy as i64);
    let cand = [
        (x0, y0, (1.0 - ax) * (1.0 - ay), -(1.0 - ay), -(1.0 - ax)),
        (x0 + 1, y0, ax * (1.0 - ay), 1.0 - ay, -ax),
        (x0, y0 + 1, (1.0 - ax) * ay, -ay, 1.0 - ax),
        (x0 + 1, y0 + 1, ax * ay, ay, ax),
    ];
    let (h, w) = (height as i64, width as i64);
    cand.into_iter().filter_map(move |(cx, cy, wt, dx, dy)| {
        (cx >= 0 && cy >= 0 && cx < w && cy < h && (wt != 0.0 || dx != 0.0 || dy != 0.0)).then(|| Corner {
            idx: (cy * w + cx) as usize,
            w: wt,
            dx: dx * gx,
            dy: dy * gy,
        })
    })
}
