//! Learn `εL̂` from 7×7 images rotated by π/10 and compare it with the
//! least-squares regression and the analytic rotation generator.
//!
//! cargo run --release --example fixed_angle_discovery [epochs]

use lconv::discovery::{train_fixed_angle, FixedAngleTask, OptimizerConfig};

fn main() -> lconv::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let task = FixedAngleTask::default();
    let out = train_fixed_angle(&task, &OptimizerConfig::adam(1e-2, 64, epochs))?;
    for e in &out.report.epochs {
        println!("epoch {:>2}  train {:.3e}  test {:.3e}", e.epoch, e.train_mse, e.test_mse);
    }
    for (k, v) in &out.report.metrics {
        println!("{k:<32} {v:.4}");
    }
    println!("wall clock {:.1}s", out.wall_clock_seconds);
    Ok(())
}
