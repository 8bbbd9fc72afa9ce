//! Small dense kernels used on hot paths where `nalgebra` allocation would
//! dominate (d_y is typically below a dozen).

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// In-place lower Cholesky of a row-major `n x n` matrix. Returns `false` if
/// the matrix is not numerically positive definite. The strict upper triangle
/// is left untouched.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

/// Gaussian log-density given a lower Cholesky factor and the residual
/// `y - mean`. `scratch` must have length `n`.
pub fn gaussian_logpdf_chol(chol: &[f64], n: usize, resid: &[f64], scratch: &mut [f64]) -> f64 {
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        let mut s = resid[i];
        for k in 0..i {
            s -= chol[i * n + k] * scratch[k];
        }
        let lii = chol[i * n + i];
        let zi = s / lii;
        scratch[i] = zi;
        quad += zi * zi;
        log_det += lii.ln();
    }
    -0.5 * (n as f64 * LN_2PI + quad) - log_det
}

/// Numerically stable `log(sum(exp(x)))`. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the arithmetic mean of `exp(x)`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn cholesky_matches_nalgebra() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.2, 0.3, 1.2, 3.0, -0.5, 0.3, -0.5, 2.0]);
        let reference = m.clone().cholesky().unwrap().l();
        let mut flat: Vec<f64> = (0..9).map(|k| m[(k / 3, k % 3)]).collect();
        assert!(cholesky_in_place(&mut flat, 3));
        for i in 0..3 {
            for j in 0..=i {
                assert!((flat[i * 3 + j] - reference[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut flat = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut flat, 2));
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_mean_exp(&[0.0, 0.0, 0.0]) - 0.0).abs() < 1e-15);
    }
}
