//! Learning `εL̂` from images rotated by one fixed small angle.

use std::collections::BTreeMap;
use std::time::Instant;

use super::{all_rows, mse, run_epochs, Checkpoint, FixedAngleData, FixedAngleTask, Optimizer, OptimizerConfig, TrainOutcome, TrainReport};
use crate::error::Result;
use crate::groups::{rotation_matrix_bilinear, sw_rotation_generator};
use crate::layer::{LConvLayer, LayerInit};
use crate::numerics::{cosine_correlation, least_squares_solve, Matrix};

pub const TASK_NAME: &str = "fixed_angle";

/// Single-channel layer `f ↦ f + ε L̂ f` with `W0 = 1` frozen, a trainable
/// scalar `ε` and a trainable dense `L̂`.
pub fn fixed_angle_layer(d: usize, seed: u64) -> Result<LConvLayer> {
    let mut layer = LConvLayer::init(
        LayerInit {
            d,
            m_in: 1,
            m_out: 1,
            n_generators: 1,
            rank: None,
            scalar_eps: true,
        },
        seed,
    )?;
    layer.w0 = Matrix::identity(1);
    layer.trainable.w0 = false;
    Ok(layer)
}

fn eps_l(layer: &LConvLayer) -> Result<Matrix> {
    Ok(layer.generators[0].materialize()?.scale(layer.eps[0][(0, 0)]))
}

pub fn train_fixed_angle(task: &FixedAngleTask, opt: &OptimizerConfig) -> Result<TrainOutcome> {
    let data = super::gen_fixed_angle_dataset(task)?;
    train_fixed_angle_on(task, opt, &data, None)
}

/// Trains on pre-generated data, optionally continuing from a checkpoint.
/// The loss is the mean over all pixels and samples of `(Q[x] − y)²`.
pub fn train_fixed_angle_on(
    task: &FixedAngleTask,
    opt: &OptimizerConfig,
    data: &FixedAngleData,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    task.validate()?;
    opt.validate()?;
    let start = Instant::now();
    let d = task.d();
    let rows = all_rows(d);
    let (mut layer, mut optimizer, mut history) = match resume {
        Some(c) => {
            let mut o = c.optimizer;
            o.cfg = *opt;
            (c.layer, o, c.history)
        }
        None => (fixed_angle_layer(d, task.seed.wrapping_add(2))?, Optimizer::new(*opt)?, Vec::new()),
    };
    let mask = layer.trainable_mask();

    run_epochs(
        &mut layer,
        &mut optimizer,
        data.x_train.cols(),
        task.seed,
        &mut history,
        |layer, batch, optimizer| {
            let xb = data.x_train.select(&rows, batch);
            let yb = data.y_train.select(&rows, batch);
            let cache = layer.forward_cached(&xb)?;
            let diff = cache.output.sub(&yb)?;
            let n = diff.as_slice().len() as f64;
            let loss = diff.sum_of_squares() / n;
            let grads = layer.backward(&cache, &diff.scale(2.0 / n))?;
            optimizer.step(layer.params_mut(), &grads.as_list(), &mask)?;
            Ok(loss)
        },
        |layer| {
            Ok((
                mse(&layer.forward(&data.x_train)?, &data.y_train)?,
                mse(&layer.forward(&data.x_test)?, &data.y_test)?,
            ))
        },
    )?;

    let r_ls = least_squares_solve(&data.x_train, &data.y_train)?;
    let ls_residual = mse(&r_ls.matmul(&data.x_train)?, &data.y_train)?;
    let r_true = rotation_matrix_bilinear(task.width, task.height, task.theta)?.matrix;
    let ident = Matrix::identity(d);
    let learned = eps_l(&layer)?;
    let ls_minus_i = r_ls.sub(&ident)?;
    let mut metrics = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        metrics.insert(k.to_string(), v);
    };
    let final_test = history.last().map(|e| e.test_mse).unwrap_or(f64::NAN);
    put("best_train_mse", history.iter().map(|e| e.train_mse).fold(f64::INFINITY, f64::min));
    put("ls_residual_mse", ls_residual);
    put("eps", layer.eps[0][(0, 0)]);
    if let Ok(c) = cosine_correlation(&learned, &ls_minus_i) {
        put("corr_eps_l_vs_ls_minus_i", c);
    }
    if let Ok(c) = cosine_correlation(&learned, &r_true.sub(&ident)?) {
        put("corr_eps_l_vs_r_minus_i", c);
    }
    if let Ok(lt) = sw_rotation_generator(task.width, task.height) {
        let lt = lt.materialize()?;
        if let Ok(c) = cosine_correlation(&learned, &lt) {
            put("corr_eps_l_vs_sw_rotation", c);
        }
        if let Ok(c) = cosine_correlation(&ls_minus_i, &lt) {
            put("corr_ls_minus_i_vs_sw_rotation", c);
        }
    }
    let report = TrainReport {
        task: TASK_NAME.into(),
        seed: task.seed,
        config: serde_json::json!({ "task": task, "optimizer": opt }),
        epochs: history.clone(),
        final_test_mse: final_test,
        metrics,
    };
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint {
            layer,
            optimizer,
            extras: vec![("r_ls".into(), r_ls)],
            history,
        },
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::gen_fixed_angle_dataset;

    fn small(theta: f64) -> FixedAngleTask {
        FixedAngleTask {
            width: 5,
            height: 5,
            theta,
            n_train: 2_000,
            n_test: 400,
            seed: 4,
        }
    }

    #[test]
    fn zero_angle_learns_zero_transport() {
        let task = small(0.0);
        let out = train_fixed_angle(&task, &OptimizerConfig::adam(1e-2, 64, 15)).unwrap();
        let el = eps_l(&out.checkpoint.layer).unwrap();
        assert!(el.max_abs() < 2e-2, "{}", el.max_abs());
        assert!(out.report.final_test_mse < 1e-5, "{}", out.report.final_test_mse);
    }

    #[test]
    fn small_run_approaches_regression_oracle() {
        let task = small(std::f64::consts::PI / 10.0);
        let out = train_fixed_angle(&task, &OptimizerConfig::adam(1e-2, 64, 20)).unwrap();
        assert!(out.report.metrics["corr_eps_l_vs_ls_minus_i"] > 0.9);
        assert!(out.report.final_test_mse < 1e-3);
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let task = FixedAngleTask {
            n_train: 300,
            n_test: 50,
            ..small(0.3)
        };
        let data = gen_fixed_angle_dataset(&task).unwrap();
        let full = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 32, 4), &data, None).unwrap();
        let again = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 32, 4), &data, None).unwrap();
        assert_eq!(full.report, again.report);

        let half = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 32, 2), &data, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        half.checkpoint.save(dir.path(), TASK_NAME).unwrap();
        let resumed = Checkpoint::load(dir.path(), TASK_NAME).unwrap();
        assert_eq!(resumed.epochs_completed(), 2);
        let rest = train_fixed_angle_on(&task, &OptimizerConfig::adam(1e-2, 32, 4), &data, Some(resumed)).unwrap();
        assert_eq!(rest.report.epochs, full.report.epochs);
        assert_eq!(rest.checkpoint.layer, full.checkpoint.layer);
    }

    #[test]
    fn sgd_loss_is_essentially_monotone() {
        let task = FixedAngleTask {
            n_train: 1_000,
            n_test: 100,
            ..small(0.3)
        };
        let out = train_fixed_angle(&task, &OptimizerConfig::sgd(1e-3, 1_000, 5)).unwrap();
        let losses: Vec<f64> = out.report.epochs.iter().map(|e| e.train_mse).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] * 1.01, "{losses:?}");
        }
    }
}
