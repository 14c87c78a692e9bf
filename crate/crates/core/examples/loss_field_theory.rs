//! The MSE loss of a layer as a field theory: mass, kinetic and
//! divergence terms on a periodic ring, and grid convergence of the
//! Euler-Lagrange residual and Noether current for the Helmholtz solution.
//!
//! cargo run --release --example loss_field_theory

use lconv::theory::{convergence_orders, field_terms, helmholtz_table, mse_loss_decomposed, mse_loss_direct, symmetric_instance};
use lconv::numerics::SeededRng;

fn main() -> lconv::Result<()> {
    let mut rng = SeededRng::new(5);
    for d in [12, 16, 24] {
        let (layer, sample) = symmetric_instance(&mut rng, d, 2)?;
        let dec = mse_loss_decomposed(&sample, &field_terms(&layer), &sample.translation_generators()?)?;
        let direct = mse_loss_direct(&sample, &layer)?;
        println!(
            "d={d:<3} direct {direct:.6}  mass {:.6}  kinetic {:.6}  divergence {:+.1e}",
            dec.mass, dec.kinetic, dec.divergence
        );
    }

    let rows = helmholtz_table(1.0, 1.0, &[32, 64, 128, 256])?;
    println!("{:>5} {:>12} {:>12}", "N", "EL", "Noether");
    for r in &rows {
        println!("{:>5} {:>12.3e} {:>12.3e}", r.grid_size, r.el_residual, r.noether_divergence);
    }
    let (el, no) = convergence_orders(&rows);
    println!("orders: EL {el:.2}, Noether {no:.2}");
    Ok(())
}
