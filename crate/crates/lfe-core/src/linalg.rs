//! Minimal dense helpers for symmetric matrices.

use ndarray::Array2;

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// matrix; `None` when a pivot fails.
pub fn cholesky_lower(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric 2x2 matrix, `None` when the determinant is not
/// safely away from zero.
pub fn invert_2x2(m: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m[0][0].abs().max(m[1][1].abs()).max(m[0][1].abs());
    if !det.is_finite() || det.abs() <= f64::EPSILON * scale * scale {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_roundtrip() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky_lower(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in a.iter().zip(back.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_lower(&a).is_none());
    }

    #[test]
    fn inverse_2x2() {
        let m = [[2.0, 1.0], [1.0, 3.0]];
        let inv = invert_2x2(&m).unwrap();
        assert!((inv[0][0] - 0.6).abs() < 1e-15);
        assert!((inv[0][1] + 0.2).abs() < 1e-15);
        assert!((inv[1][1] - 0.4).abs() < 1e-15);
        assert!(invert_2x2(&[[1.0, 1.0], [1.0, 1.0]]).is_none());
    }
}
