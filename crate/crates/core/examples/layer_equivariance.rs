//! An L-conv layer built on the shift generator commutes with every shift.
//! A layer with a random learned generator does not, and its residual under
//! `w = I + ηL` falls off linearly in η.
//!
//! cargo run --release --example layer_equivariance

use lconv::groups::{sw_shift_generator, sw_shift_matrix};
use lconv::layer::{equivariance_residual, near_identity_equivariance_sweep, LConvLayer, LayerInit};
use lconv::numerics::SeededRng;

fn main() -> lconv::Result<()> {
    let d = 16;
    let mut rng = SeededRng::new(1);
    let layer = LConvLayer::new(rng.normal_matrix(3, 2), vec![rng.normal_matrix(2, 2)], vec![sw_shift_generator(d)?])?;
    let f = rng.normal_matrix(d, 2 * 8);
    for z in [1.0, -3.0, 0.3, 2.3] {
        let r = equivariance_residual(&f, &sw_shift_matrix(d, z)?, &layer)?;
        println!("shift z = {z:<5} residual {r:.2e}");
    }

    let random = LConvLayer::init(
        LayerInit {
            d,
            m_in: 2,
            m_out: 2,
            n_generators: 1,
            rank: None,
            scalar_eps: false,
        },
        2,
    )?;
    let l = random.generators[0].materialize()?;
    let etas = [1e-1, 3e-2, 1e-2, 3e-3];
    let (res, slope) = near_identity_equivariance_sweep(&f, &l, &random, &etas)?;
    for (eta, r) in etas.iter().zip(&res) {
        println!("random generator, eta = {eta:<6} residual {r:.3e}");
    }
    println!("log-log slope {slope:.3}");
    Ok(())
}
