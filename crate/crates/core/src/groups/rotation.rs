//! Rotations of flattened images about the grid center.
//!
//! Pixel `(row, col)` sits at flattened index `row · width + col` and at
//! centered coordinates `x = col − (w−1)/2`, `y = row − (h−1)/2`.

use std::f64::consts::PI;

use super::{Generator, GroupElement};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Centered `(x, y)` coordinates of every pixel, in flattened order.
pub fn image_coordinates(width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let mut xs = Vec::with_capacity(width * height);
    let mut ys = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            xs.push(c as f64 - cx);
            ys.push(r as f64 - cy);
        }
    }
    (xs, ys)
}

/// Band-limited periodic derivative generator (acts as `−∂`) on an axis of
/// `n` points. For even `n` this equals [`super::sw_shift_generator`]; for
/// odd `n` the sum runs over the symmetric band `|p| ≤ (n−1)/2`.
pub(crate) fn axis_generator(n: usize) -> Matrix {
    let nf = n as f64;
    let kernel: Vec<f64> = (0..n)
        .map(|k| {
            let mut s = 0.0;
            for p in 1..=(n - 1) / 2 {
                let w = 2.0 * PI * p as f64 / nf;
                s -= 2.0 * w * (w * k as f64).sin();
            }
            s / nf
        })
        .collect();
    Matrix::from_fn(n, n, |r, c| kernel[(c + n - r) % n])
}

fn check_axes(width: usize, height: usize) -> Result<()> {
    if width < 4 || height < 4 {
        return Err(Error::UnsupportedSize(format!(
            "rotation generator needs width, height >= 4, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Per-axis derivative generators lifted to the flattened image:
/// `Dx = I_h ⊗ L_w` (along rows) and `Dy = L_h ⊗ I_w` (along columns).
pub fn sw_axis_derivatives(width: usize, height: usize) -> Result<(Matrix, Matrix)> {
    check_axes(width, height)?;
    let dx = Matrix::identity(height).kron(&axis_generator(width));
    let dy = axis_generator(height).kron(&Matrix::identity(width));
    Ok((dx, dy))
}

/// Rotation generator `x∂_y − y∂_x` built from the band-limited axis
/// derivatives and centered coordinate diagonals. Its sign matches
/// `d/dθ` of [`rotation_matrix_bilinear`] at `θ = 0`.
pub fn sw_rotation_generator(width: usize, height: usize) -> Result<Generator> {
    let (dx, dy) = sw_axis_derivatives(width, height)?;
    let (xs, ys) = image_coordinates(width, height);
    let d = width * height;
    // axis generators are −∂, so x∂_y − y∂_x = −X·Dy + Y·Dx
    let mut m = Matrix::zeros(d, d);
    for r in 0..d {
        let (x, y) = (xs[r], ys[r]);
        let row_dx = dx.row(r);
        let row_dy = dy.row(r);
        for (c, out) in m.row_mut(r).iter_mut().enumerate() {
            *out = y * row_dx[c] - x * row_dy[c];
        }
    }
    Generator::dense(m, format!("sw-rotation {width}x{height}"))
}

/// Visits the bilinear taps of a rotation: `visit(out_pixel, in_pixel, w)`.
fn for_each_tap(width: usize, height: usize, theta: f64, mut visit: impl FnMut(usize, usize, f64)) {
    let (xs, ys) = image_coordinates(width, height);
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let (s, c) = theta.sin_cos();
    for p in 0..width * height {
        let qx = c * xs[p] - s * ys[p] + cx;
        let qy = s * xs[p] + c * ys[p] + cy;
        let x0 = qx.floor();
        let y0 = qy.floor();
        let fx = qx - x0;
        let fy = qy - y0;
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1.0, y0, fx * (1.0 - fy)),
            (x0, y0 + 1.0, (1.0 - fx) * fy),
            (x0 + 1.0, y0 + 1.0, fx * fy),
        ];
        for (tx, ty, w) in taps {
            if w == 0.0 || tx < 0.0 || ty < 0.0 {
                continue;
            }
            let (tx, ty) = (tx as usize, ty as usize);
            if tx < width && ty < height {
                visit(p, ty * width + tx, w);
            }
        }
    }
}

fn check_image(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::UnsupportedSize(format!(
            "rotation needs width, height >= 2, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Bilinear resampling matrix: output pixel `p` reads the input at
/// `rot(θ)·p` (centered coordinates), zero outside the grid.
pub fn rotation_matrix_bilinear(width: usize, height: usize, theta: f64) -> Result<GroupElement> {
    check_image(width, height)?;
    let d = width * height;
    let mut m = Matrix::zeros(d, d);
    for_each_tap(width, height, theta, |p, q, w| m[(p, q)] += w);
    GroupElement::new(m, format!("rot θ={theta}"))
}

/// Applies the same resampling as [`rotation_matrix_bilinear`] to one
/// flattened image without forming the matrix.
pub fn rotate_image_bilinear(image: &[f64], width: usize, height: usize, theta: f64) -> Result<Vec<f64>> {
    check_image(width, height)?;
    if image.len() != width * height {
        return Err(Error::dim("image length", width * height, image.len()));
    }
    let mut out = vec![0.0; image.len()];
    for_each_tap(width, height, theta, |p, q, w| out[p] += w * image[q]);
    Ok(out)
}
