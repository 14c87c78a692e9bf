//! Dense linear algebra, deterministic randomness, gradient checking, and
//! the binary matrix format shared by every other module.

pub mod io;
pub mod linalg;
pub mod matrix;
pub mod rng;

pub use linalg::least_squares_solve;
pub use matrix::Matrix;
pub use rng::SeededRng;

use crate::error::{Error, Result};

/// Cosine correlation `Tr(aᵀb) / (‖a‖ ‖b‖)` with Frobenius norms.
pub fn cosine_correlation(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            "cosine_correlation",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate(
            "cosine correlation of a zero-norm matrix".into(),
        ));
    }
    let c = a.frobenius_dot(b)? / (na * nb);
    Ok(c.clamp(-1.0, 1.0))
}

/// Central-difference gradient of `loss` at `p` with step `step`.
pub fn finite_difference_gradient<F>(mut loss: F, p: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::Degenerate(format!("finite-difference step {step} must be > 0")));
    }
    let mut q = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let orig = q[k];
        q[k] = orig + step;
        let plus = loss(&q);
        q[k] = orig - step;
        let minus = loss(&q);
        q[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss evaluation at coordinate {k} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)` between two gradient vectors.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_correlation_is_one() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        assert!((cosine_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_and_rotation_generator_are_orthogonal() {
        let j = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        assert_eq!(cosine_correlation(&Matrix::identity(2), &j).unwrap(), 0.0);
    }

    #[test]
    fn correlation_errors() {
        let a = Matrix::identity(2);
        assert!(matches!(
            cosine_correlation(&a, &Matrix::identity(3)),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            cosine_correlation(&a, &Matrix::zeros(2, 2)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let g = finite_difference_gradient(|p| p.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5)
            .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn fd_gradient_of_constant_is_zero() {
        let g = finite_difference_gradient(|_| 3.5, &[0.1, -4.0, 2.0], 1e-4).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn fd_gradient_reports_non_finite() {
        let r = finite_difference_gradient(|p| if p[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(finite_difference_gradient(|_| 0.0, &[0.0], 0.0).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((log_log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
