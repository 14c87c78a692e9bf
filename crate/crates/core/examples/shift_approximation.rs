//! Build the finite shift g(2) from products of near-identity steps and
//! find the line length at which n = 8 and n = 16 give correlations 0.77
//! and 0.93.
//!
//! cargo run --release --example shift_approximation

use lconv::approx::{shift_d_sweep, shift_error_orders};

fn main() -> lconv::Result<()> {
    let ns = [4, 8, 16, 32, 64, 256];
    let ds: Vec<usize> = (16..=128).step_by(2).collect();
    println!("{:>4} {}", "d", ns.map(|n| format!("{:>8}", format!("n={n}"))).join(""));
    for (d, rows) in shift_d_sweep(&ds, 2.0, &ns)? {
        let corr: String = rows.iter().map(|r| format!("{:>8.4}", r.correlation)).collect();
        let hit8 = (rows[1].correlation - 0.77).abs() <= 0.05;
        let hit16 = (rows[2].correlation - 0.93).abs() <= 0.05;
        println!("{d:>4} {corr}{}", if hit8 && hit16 { "  <- matches" } else { "" });
    }
    let (single, total) = shift_error_orders(32, &[1e-1, 5e-2, 2.5e-2, 1.25e-2], 2.0, &[16, 32, 64, 128])?;
    println!("single-step error order {single:.3}, fixed-total error order {total:.3}");
    Ok(())
}
