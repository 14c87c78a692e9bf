//! Symmetry discovery: datasets, optimizers, and the two training pipelines
//! that learn a rotation generator from image pairs.

mod angle;
mod data;
mod fixed_angle;
mod optim;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use angle::{train_angle_regression, train_angle_regression_on, AngleModel};
pub use data::{
    gen_angle_pairs_dataset, gen_fixed_angle_dataset, AnglePairs, AngleRegressionTask, FixedAngleData,
    FixedAngleTask,
};
pub use fixed_angle::{fixed_angle_layer, train_fixed_angle, train_fixed_angle_on};
pub use optim::{adam_step, sgd_step, AdamSlot, Optimizer, OptimizerConfig, OptimizerKind};

use crate::error::{Error, Result};
use crate::layer::{load_layer, save_layer, LConvLayer};
use crate::numerics::{io, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Everything reported by a training run except wall-clock time, so that
/// identical seeds and configs give byte-identical `report.json` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub epochs: Vec<EpochRecord>,
    pub final_test_mse: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Resumable training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layer: LConvLayer,
    pub optimizer: Optimizer,
    /// Non-layer parameters by name (e.g. the angle-regression head).
    pub extras: Vec<(String, Matrix)>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
    pub wall_clock_seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    task: String,
    extras: Vec<String>,
    history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn epochs_completed(&self) -> usize {
        self.history.len()
    }

    pub fn save(&self, dir: impl AsRef<Path>, task: &str) -> Result<()> {
        let dir = dir.as_ref();
        save_layer(&self.layer, dir.join("layer"))?;
        self.optimizer.save(dir.join("optimizer"))?;
        for (name, m) in &self.extras {
            io::write_matrix(dir.join(format!("{name}.mat")), m)?;
        }
        io::write_json(
            dir.join("state.json"),
            &CheckpointState {
                task: task.to_string(),
                extras: self.extras.iter().map(|(n, _)| n.clone()).collect(),
                history: self.history.clone(),
            },
        )
    }

    /// Loads a checkpoint and checks that it was written by `task`.
    pub fn load(dir: impl AsRef<Path>, task: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let state: CheckpointState = io::read_json(dir.join("state.json"))?;
        if state.task != task {
            return Err(Error::Config(format!(
                "checkpoint at {} was written by task '{}', not '{task}'",
                dir.display(),
                state.task
            )));
        }
        let extras = state
            .extras
            .iter()
            .map(|n| Ok((n.clone(), io::read_matrix(dir.join(format!("{n}.mat")))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            layer: load_layer(dir.join("layer"))?,
            optimizer: Optimizer::load(dir.join("optimizer"))?,
            extras,
            history: state.history,
        })
    }
}

/// Writes `report.json`, `loss.csv`, `timing.json` and `checkpoint/`.
pub fn write_outcome(outcome: &TrainOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    io::ensure_dir(dir)?;
    io::write_json(dir.join("report.json"), &outcome.report)?;
    let rows: Vec<Vec<f64>> = outcome
        .report
        .epochs
        .iter()
        .map(|e| vec![e.epoch as f64, e.train_mse, e.test_mse])
        .collect();
    io::write_csv(dir.join("loss.csv"), &["epoch", "train_mse", "test_mse"], &rows)?;
    io::write_json(
        dir.join("timing.json"),
        &serde_json::json!({ "wall_clock_seconds": outcome.wall_clock_seconds }),
    )?;
    outcome.checkpoint.save(dir.join("checkpoint"), &outcome.report.task)
}

/// Shuffle stream for one epoch; depends only on the seed and epoch so a
/// resumed run sees the same batches as an uninterrupted one.
pub(crate) fn epoch_rng(seed: u64, epoch: usize) -> SeededRng {
    SeededRng::new((seed ^ 0x9E37_79B9_7F4A_7C15).wrapping_mul(0x100_0000_01B3).wrapping_add(epoch as u64))
}

/// Runs epochs `history.len() .. cfg.epochs`. `step` trains on one batch of
/// sample indices and returns its loss; `eval` returns `(train, test)` MSE.
pub(crate) fn run_epochs<M>(
    model: &mut M,
    optimizer: &mut Optimizer,
    n_train: usize,
    seed: u64,
    history: &mut Vec<EpochRecord>,
    mut step: impl FnMut(&mut M, &[usize], &mut Optimizer) -> Result<f64>,
    mut eval: impl FnMut(&M) -> Result<(f64, f64)>,
) -> Result<()> {
    let cfg = optimizer.cfg;
    let last_finite = |h: &Vec<EpochRecord>| h.last().map(|e| e.epoch);
    for epoch in history.len()..cfg.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        epoch_rng(seed, epoch).shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let loss = match step(model, batch, optimizer) {
                Ok(l) => l,
                Err(Error::NonFinite(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    last_finite_epoch: last_finite(history),
                });
            }
        }
        let (train_mse, test_mse) = eval(model)?;
        if !train_mse.is_finite() || !test_mse.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                last_finite_epoch: last_finite(history),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_mse,
            test_mse,
        });
    }
    Ok(())
}

/// Mean squared difference over all entries.
pub(crate) fn mse(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(a.sub(b)?.sum_of_squares() / a.as_slice().len() as f64)
}

pub(crate) fn all_rows(d: usize) -> Vec<usize> {
    (0..d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_reports_last_finite_epoch() {
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1, 2, 5)).unwrap();
        let mut history = Vec::new();
        let mut calls = 0usize;
        let r = run_epochs(
            &mut (),
            &mut opt,
            4,
            0,
            &mut history,
            |_, _, _| {
                calls += 1;
                Ok(if calls > 4 { f64::INFINITY } else { 1.0 })
            },
            |_| Ok((1.0, 1.0)),
        );
        match r {
            Err(Error::TrainingDiverged {
                epoch,
                last_finite_epoch,
            }) => assert_eq!((epoch, last_finite_epoch), (2, Some(1))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn epoch_streams_differ_and_repeat() {
        let a: Vec<u64> = (0..4).map(|_| epoch_rng(3, 0).next_u64()).collect();
        assert!(a.iter().all(|x| *x == a[0]));
        assert_ne!(epoch_rng(3, 0).next_u64(), epoch_rng(3, 1).next_u64());
    }
}
