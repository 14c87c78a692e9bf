//! Small dense factorizations: Cholesky, LU with partial pivoting,
//! Householder QR with column pivoting, and cyclic Jacobi for symmetric
//! eigenvalues. Sizes here are desk scale (a few hundred at most), so the
//! textbook algorithms are adequate.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Above this condition number the normal equations are abandoned in favour
/// of a pivoted QR on the design matrix.
pub const NORMAL_EQUATIONS_MAX_CONDITION: f64 = 1e8;
/// Above this condition number a least-squares problem is reported singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim("cholesky requires square", a.rows(), a.cols()));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `A X = B` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::dim("cholesky_solve rhs rows", n, b.rows()));
    }
    let mut x = b.clone();
    let m = b.cols();
    for c in 0..m {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// LU factorization with partial pivoting, stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::dim("lu requires square", a.rows(), a.cols()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * 1e-15 {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                perm.swap(p, k);
                for c in 0..n {
                    let tmp = lu[(p, c)];
                    lu[(p, c)] = lu[(k, c)];
                    lu[(k, c)] = tmp;
                }
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[(i, c)] -= f * lu[(k, c)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(Error::dim("lu solve rhs rows", n, b.rows()));
        }
        let m = b.cols();
        let mut x = Matrix::zeros(n, m);
        for i in 0..n {
            x.row_mut(i).copy_from_slice(b.row(self.perm[i]));
        }
        for c in 0..m {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Lu::factor(a)?.solve(&Matrix::identity(a.rows()))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::dim("eigenvalues require square", a.rows(), a.cols()));
    }
    let n = a.rows();
    let mut m = a.symmetric_part();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let total = m.sum_of_squares();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig)
}

/// 2-norm condition number of a symmetric positive semidefinite matrix.
pub fn spd_condition_number(a: &Matrix) -> Result<f64> {
    let eig = symmetric_eigenvalues(a)?;
    let max = eig.last().copied().unwrap_or(0.0);
    let min = eig.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Ok(f64::INFINITY);
    }
    if min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Least-squares solution of the overdetermined system `A x = B` (A is m×n,
/// m ≥ n) by Householder QR with column pivoting.
pub fn qr_least_squares(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if b.rows() != m {
        return Err(Error::dim("qr_least_squares rhs rows", m, b.rows()));
    }
    if m < n {
        return Err(Error::dim("qr_least_squares needs rows >= cols", n, m));
    }
    let mut r = a.clone();
    let mut rhs = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut col_norms: Vec<f64> = (0..n)
        .map(|c| (0..m).map(|i| r[(i, c)] * r[(i, c)]).sum())
        .collect();
    let mut diag_max: f64 = 0.0;
    let mut rank = n;
    for k in 0..n {
        // pivot on the remaining column with the largest norm
        let (p, _) = (k..n)
            .map(|c| (c, col_norms[c]))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if p != k {
            perm.swap(p, k);
            col_norms.swap(p, k);
            for i in 0..m {
                let tmp = r[(i, p)];
                r[(i, p)] = r[(i, k)];
                r[(i, k)] = tmp;
            }
        }
        let norm: f64 = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        diag_max = diag_max.max(norm);
        if norm <= diag_max * 1e-14 {
            rank = k;
            break;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in k..n {
                let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * r[(k + t, c)]).sum();
                let f = 2.0 * s / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    r[(k + t, c)] -= f * vi;
                }
            }
            for c in 0..rhs.cols() {
                let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * rhs[(k + t, c)]).sum();
                let f = 2.0 * s / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    rhs[(k + t, c)] -= f * vi;
                }
            }
        }
        for c in k + 1..n {
            col_norms[c] = (k + 1..m).map(|i| r[(i, c)] * r[(i, c)]).sum();
        }
    }
    if rank < n {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let cond_est = {
        let dmin = (0..n).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        let dmax = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        (dmax / dmin).powi(2)
    };
    if cond_est > SINGULAR_CONDITION {
        return Err(Error::Singular {
            condition: cond_est,
        });
    }
    let bc = rhs.cols();
    let mut x = Matrix::zeros(n, bc);
    for c in 0..bc {
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = rhs[(i, c)];
            for k in i + 1..n {
                s -= r[(i, k)] * z[k];
            }
            z[i] = s / r[(i, i)];
        }
        for (i, &pi) in perm.iter().enumerate() {
            x[(pi, c)] = z[i];
        }
    }
    Ok(x)
}

/// Solves `Y ≈ R X` for `R` in the least-squares sense, with `X`, `Y` of
/// shape d×N (one sample per column): `R = (Y Xᵀ)(X Xᵀ)⁻¹`.
///
/// Uses a Cholesky solve of the normal equations when `X Xᵀ` is well
/// conditioned and falls back to a column-pivoted QR of `Xᵀ` otherwise.
pub fn least_squares_solve(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.shape() != y.shape() {
        return Err(Error::dim(
            "least_squares_solve X/Y shape",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", y.rows(), y.cols()),
        ));
    }
    let (d, n) = x.shape();
    if n < d {
        return Err(Error::dim("least_squares_solve samples N >= d", d, n));
    }
    let gram = x.matmul_t(x)?;
    let cond = spd_condition_number(&gram)?;
    if cond > SINGULAR_CONDITION || !cond.is_finite() {
        return Err(Error::Singular { condition: cond });
    }
    if cond <= NORMAL_EQUATIONS_MAX_CONDITION {
        let cross = y.matmul_t(x)?; // Y Xᵀ, d×d
        let l = cholesky(&gram)?;
        // G Rᵀ = (Y Xᵀ)ᵀ since G is symmetric
        let rt = cholesky_solve(&l, &cross.transpose())?;
        Ok(rt.transpose())
    } else {
        let rt = qr_least_squares(&x.transpose(), &y.transpose())?;
        Ok(rt.transpose())
    }
}
