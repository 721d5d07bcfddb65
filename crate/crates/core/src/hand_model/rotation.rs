//! Axis-angle rotations.

use crate::geom::{Mat3, Vec3};

const SERIES_BELOW: f64 = 1e-6;
const GRAD_SERIES_BELOW: f64 = 1e-3;

/// `sin t / t` and `(1 - cos t) / t²` for `t = |θ|`.
fn coefficients(t: f64, series_below: f64) -> (f64, f64) {
    if t < series_below {
        let t2 = t * t;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
        )
    } else {
        let half = (0.5 * t).sin();
        (t.sin() / t, 2.0 * half * half / (t * t))
    }
}

/// Rodrigues' formula `cos t I + (sin t / t)[θ]× + ((1 - cos t)/t²) θθᵀ`.
pub fn rodrigues(theta: Vec3) -> Mat3 {
    let t2 = theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2];
    let t = t2.sqrt();
    let (a, b) = coefficients(t, SERIES_BELOW);
    let c = 1.0 - b * t2;
    let [x, y, z] = theta;
    [
        [c + b * x * x, -a * z + b * x * y, a * y + b * x * z],
        [a * z + b * y * x, c + b * y * y, -a * x + b * y * z],
        [-a * y + b * z * x, a * x + b * z * y, c + b * z * z],
    ]
}

/// Vector-Jacobian product: `Σ_ab G_ab ∂R_ab/∂θ`.
pub fn rodrigues_vjp(theta: Vec3, g: &Mat3) -> Vec3 {
    let t2 = theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2];
    let t = t2.sqrt();
    // A = sin t / t, B = (1 - cos t)/t², A1 = A'(t)/t, B1 = B'(t)/t
    let (a, b, a1, b1) = if t < GRAD_SERIES_BELOW {
        let (a, b) = coefficients(t, GRAD_SERIES_BELOW);
        (
            a,
            b,
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0,
        )
    } else {
        let (s, c) = t.sin_cos();
        let (a, b) = coefficients(t, 0.0);
        (
            a,
            b,
            (t * c - s) / (t2 * t),
            (t * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    };
    let trace = g[0][0] + g[1][1] + g[2][2];
    let w = [g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]];
    let gt = crate::geom::mat_vec(g, theta);
    let gtt = crate::geom::mat_t_vec(g, theta);
    let k_dot = crate::geom::dot(theta, w);
    let quad = crate::geom::dot(theta, gt);
    let common = -a * trace + a1 * k_dot + b1 * quad;
    let mut out = [0.0; 3];
    for j in 0..3 {
        out[j] = theta[j] * common + a * w[j] + b * (gt[j] + gtt[j]);
    }
    out
}

/// Inverse of [`rodrigues`], returning the rotation vector with angle in `[0, π]`.
pub fn rotation_log(r: &Mat3) -> Vec3 {
    let trace = r[0][0] + r[1][1] + r[2][2];
    let cos = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let w = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    if angle < 1e-6 {
        return [0.5 * w[0], 0.5 * w[1], 0.5 * w[2]];
    }
    if angle > std::f64::consts::PI - 1e-4 {
        // near π the skew part vanishes; read the axis off R + I
        let mut k = 0;
        for i in 1..3 {
            if r[i][i] > r[k][k] {
                k = i;
            }
        }
        let mut axis = [0.0; 3];
        for i in 0..3 {
            axis[i] = r[i][k] + r[k][i];
        }
        axis[k] = 2.0 * (r[k][k] + 1.0);
        let mut axis = crate::geom::normalize(axis);
        if crate::geom::dot(axis, w) < 0.0 {
            axis = crate::geom::scale(axis, -1.0);
        }
        return crate::geom::scale(axis, angle);
    }
    crate::geom::scale(w, angle / (2.0 * angle.sin()))
}
