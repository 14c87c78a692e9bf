//! Recover the rotation generator by regressing the angle between image
//! pairs through three recursive applications of one learned layer.
//!
//! cargo run --release --example angle_regression [theta_max] [epochs] [seed]

use lconv::discovery::{train_angle_regression, AngleRegressionTask, OptimizerConfig};

fn main() -> lconv::Result<()> {
    let mut args = std::env::args().skip(1);
    let theta_max = args.next().and_then(|s| s.parse().ok()).unwrap_or(std::f64::consts::PI / 3.0);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let task = AngleRegressionTask {
        theta_max,
        seed,
        ..AngleRegressionTask::default()
    };
    let out = train_angle_regression(&task, &OptimizerConfig::adam(1e-3, 16, epochs))?;
    for e in &out.report.epochs {
        println!("epoch {:>2}  train {:.3e}  test {:.3e}", e.epoch, e.train_mse, e.test_mse);
    }
    for (k, v) in &out.report.metrics {
        println!("{k:<28} {v:.4}");
    }
    println!("wall clock {:.1}s", out.wall_clock_seconds);
    Ok(())
}
