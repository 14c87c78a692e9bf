//! Shannon-Whittaker shifts on a periodic line: integer shifts are exact
//! circulant rolls, fractional shifts interpolate, and composition is exact
//! away from the Nyquist mode.
//!
//! cargo run --release --example shift_group

use lconv::groups::{nyquist_closure_defect, nyquist_projector, sw_shift_generator, sw_shift_matrix};
use lconv::numerics::Matrix;

fn main() -> lconv::Result<()> {
    let d = 16;
    let f = Matrix::from_fn(d, 1, |r, _| (-((r as f64 - 6.0) / 2.0).powi(2)).exp());
    for z in [1.0, 0.5, 2.25] {
        let moved = sw_shift_matrix(d, z)?.matrix.matmul(&f)?;
        let peak = (0..d).max_by(|&a, &b| moved[(a, 0)].total_cmp(&moved[(b, 0)])).unwrap();
        println!("shift by {z:<5} peak moves 6 -> {peak}");
    }

    let keep = Matrix::identity(d).sub(&nyquist_projector(d))?;
    for (w, z) in [(0.3, 0.7), (1.0, 2.0), (0.25, -0.6)] {
        let gw = sw_shift_matrix(d, w)?.matrix;
        let gz = sw_shift_matrix(d, z)?.matrix;
        let gwz = sw_shift_matrix(d, w + z)?.matrix;
        let defect = gw.matmul(&gz)?.sub(&gwz)?;
        let off_nyquist = keep.matmul(&defect)?.max_abs();
        println!(
            "g({w})g({z}) - g({}) : max {:.2e}, off the Nyquist mode {:.2e}, predicted Nyquist term {:+.4}",
            w + z,
            defect.max_abs(),
            off_nyquist,
            nyquist_closure_defect(w, z)
        );
    }

    let l = sw_shift_generator(d)?.materialize()?;
    let h = 1e-5;
    let fd = sw_shift_matrix(d, h)?.matrix.sub(&sw_shift_matrix(d, -h)?.matrix)?.scale(0.5 / h);
    println!("generator vs dg/dz at 0: {:.2e}", fd.max_abs_diff(&l)?);
    println!("skew part of generator: {:.2e}", l.add(&l.transpose())?.max_abs());
    Ok(())
}
