//! Shannon-Whittaker continuous shifts on a periodic 1D grid.
//!
//! `g(z)` is the circulant matrix with entries
//! `g(z)[r][c] = (1/d) Σ_{p=-d/2}^{d/2} w_p cos(2πp(z + c − r)/d)`, so that
//! `(g(z) f)(x) = f(x − z)` for band-limited `f`. The endpoint terms
//! `p = ±d/2` carry weight ½ (`w_p = 1` otherwise), which makes `g(0) = I`
//! and `g(μ)` the exact circulant shift by `μ` for integer `μ`.
//!
//! For even `d` the Nyquist mode `(−1)^k` has eigenvalue `cos(πz)` under
//! `g(z)`. No real one-parameter family can be both continuous and map that
//! mode to `−1` at `z = 1`, so `g(w)g(z) = g(w+z)` holds exactly only on the
//! complement of the Nyquist mode; see [`nyquist_closure_defect`].

use std::f64::consts::PI;

use super::{Generator, GroupElement};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn check_size(d: usize) -> Result<()> {
    if d < 4 || d % 2 != 0 {
        return Err(Error::UnsupportedSize(format!(
            "Shannon-Whittaker operators need an even d >= 4, got {d}"
        )));
    }
    Ok(())
}

fn circulant(d: usize, first_row: &[f64]) -> Matrix {
    Matrix::from_fn(d, d, |r, c| first_row[(c + d - r) % d])
}

/// Kernel `s(k)` with `g(z)[r][c] = s((c − r) mod d)`.
fn shift_kernel(d: usize, z: f64) -> Vec<f64> {
    let half = d / 2;
    let df = d as f64;
    (0..d)
        .map(|k| {
            let t = z + k as f64;
            let mut s = 1.0;
            for p in 1..half {
                s += 2.0 * (2.0 * PI * p as f64 * t / df).cos();
            }
            // both Nyquist endpoints, weight ½ each
            s += (PI * t).cos();
            s / df
        })
        .collect()
}

/// Continuous shift by `z` grid steps on a periodic line of `d` points.
pub fn sw_shift_matrix(d: usize, z: f64) -> Result<GroupElement> {
    check_size(d)?;
    let m = circulant(d, &shift_kernel(d, z));
    GroupElement::new(m, format!("sw-shift d={d} z={z}"))
}

/// The generator `∂_z g(z)|_{z=0}`, a skew-symmetric circulant that acts as
/// `−∂_x` on band-limited signals.
pub fn sw_shift_generator(d: usize) -> Result<Generator> {
    check_size(d)?;
    let half = d / 2;
    let df = d as f64;
    let kernel: Vec<f64> = (0..d)
        .map(|k| {
            let mut s = 0.0;
            for p in 1..half {
                let w = 2.0 * PI * p as f64 / df;
                s -= 2.0 * w * (w * k as f64).sin();
            }
            s / df
        })
        .collect();
    Generator::dense(circulant(d, &kernel), format!("sw-generator d={d}"))
}

/// Closure defect `g(w)g(z) − g(w+z)` restricted to the Nyquist mode:
/// `(cos πw cos πz − cos π(w+z)) = sin πw sin πz`. The full defect matrix is
/// this scalar times the projector onto `(−1)^k / √d`.
pub fn nyquist_closure_defect(w: f64, z: f64) -> f64 {
    (PI * w).sin() * (PI * z).sin()
}

/// Projector onto the Nyquist mode `v_k = (−1)^k / √d`.
pub fn nyquist_projector(d: usize) -> Matrix {
    Matrix::from_fn(d, d, |r, c| {
        let s = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
        s / d as f64
    })
}
