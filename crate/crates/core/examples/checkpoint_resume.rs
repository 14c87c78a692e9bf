//! Train for a few epochs, checkpoint, resume, and confirm the result is
//! identical to an uninterrupted run.
//!
//! cargo run --release --example checkpoint_resume

use lconv::discovery::{gen_fixed_angle_dataset, train_fixed_angle_on, Checkpoint, FixedAngleTask, OptimizerConfig};

fn main() -> lconv::Result<()> {
    let task = FixedAngleTask {
        width: 5,
        height: 5,
        n_train: 2_000,
        n_test: 500,
        ..FixedAngleTask::default()
    };
    let data = gen_fixed_angle_dataset(&task)?;
    let full = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 64, 6), &data, None)?;

    let dir = std::env::temp_dir().join("lconv-checkpoint-example");
    let first = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 64, 3), &data, None)?;
    first.checkpoint.save(&dir, "fixed_angle")?;
    let loaded = Checkpoint::load(&dir, "fixed_angle")?;
    println!("checkpoint at {} after {} epochs", dir.display(), loaded.epochs_completed());
    let resumed = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 64, 6), &data, Some(loaded))?;

    for (a, b) in full.report.epochs.iter().zip(&resumed.report.epochs) {
        println!("epoch {}  full {:.6e}  resumed {:.6e}", a.epoch, a.test_mse, b.test_mse);
    }
    println!("identical layers: {}", full.checkpoint.layer == resumed.checkpoint.layer);
    Ok(())
}
