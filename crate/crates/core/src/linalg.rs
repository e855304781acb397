//! Small dense matrix helpers for per-node 2x2 / 3x3 work.

pub type Mat = [[f64; 3]; 3];

pub fn identity(d: usize) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate().take(d) {
        row[i] = 1.0;
    }
    m
}

pub fn det(m: &Mat, d: usize) -> f64 {
    match d {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

/// Inverse by cofactors; `None` when the determinant is not safely nonzero.
pub fn inverse(m: &Mat, d: usize) -> Option<Mat> {
    let det = det(m, d);
    let scale = frobenius(m, d).max(1.0);
    if !det.is_finite() || det.abs() < 1e-12 * scale.powi(d as i32) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    match d {
        2 => {
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
        }
        _ => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
                }
            }
        }
    }
    Some(inv)
}

pub fn matmul(a: &Mat, b: &Mat, d: usize) -> Mat {
    let mut out = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = (0..d).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn frobenius(m: &Mat, d: usize) -> f64 {
    let mut s = 0.0;
    for row in m.iter().take(d) {
        for v in row.iter().take(d) {
            s += v * v;
        }
    }
    s.sqrt()
}

/// Spectral (operator 2-) norm: square root of the largest eigenvalue of
/// `mᵀm`.
pub fn operator_norm(m: &Mat, d: usize) -> f64 {
    let mut g = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            g[i][j] = (0..d).map(|k| m[k][i] * m[k][j]).sum();
        }
    }
    match d {
        2 => {
            let tr = g[0][0] + g[1][1];
            let dt = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let disc = (0.25 * tr * tr - dt).max(0.0).sqrt();
            (0.5 * tr + disc).max(0.0).sqrt()
        }
        _ => sym3_max_eigen(&g).max(0.0).sqrt(),
    }
}

/// Largest eigenvalue of a symmetric 3x3 matrix (trigonometric closed form).
fn sym3_max_eigen(a: &Mat) -> f64 {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if p1 == 0.0 {
        return a[0][0].max(a[1][1]).max(a[2][2]);
    }
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let r = (det(&b, 3) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * phi.cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip_3d() {
        let m = [[2.0, 0.3, -0.1], [0.2, 1.5, 0.4], [-0.3, 0.1, 1.1]];
        let inv = inverse(&m, 3).unwrap();
        let p = matmul(&m, &inv, 3);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p[i][j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn operator_norm_known() {
        let m = [[0.0, 0.5, 0.0], [0.0, 0.0, 0.0], [0.0; 3]];
        assert!((operator_norm(&m, 2) - 0.5).abs() < 1e-15);
        let d = [[3.0, 0.0, 0.0], [0.0, -4.0, 0.0], [0.0, 0.0, 1.0]];
        assert!((operator_norm(&d, 3) - 4.0).abs() < 1e-12);
        let r = [[0.6, -0.8, 0.0], [0.8, 0.6, 0.0], [0.0, 0.0, 1.0]];
        assert!((operator_norm(&r, 3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_rejected() {
        let m = [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0; 3]];
        assert!(inverse(&m, 2).is_none());
    }
}
