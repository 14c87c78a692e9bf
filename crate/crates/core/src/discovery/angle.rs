//! Regressing the rotation angle from `(f, R(θ)f)` pairs through a recursive
//! single-generator layer and a small tanh head.

use std::collections::BTreeMap;
use std::time::Instant;

use super::{all_rows, run_epochs, AnglePairs, AngleRegressionTask, Checkpoint, Optimizer, OptimizerConfig, TrainOutcome, TrainReport};
use crate::error::{Error, Result};
use crate::groups::sw_rotation_generator;
use crate::layer::{recursive_backward, recursive_forward_cached, LConvLayer, LayerInit};
use crate::numerics::{cosine_correlation, Matrix, SeededRng};

pub const TASK_NAME: &str = "angle_regression";

const HEAD_NAMES: [&str; 4] = ["fc1_w", "fc1_b", "fc2_w", "fc2_b"];

/// `θ̂ = FC2(tanh(FC1(g)))` with `g_a = tanh(yᵀ h_t^a)`, where `h_t` is `t`
/// applications of the layer to `f` broadcast over `m` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleModel {
    pub layer: LConvLayer,
    pub recursions: usize,
    /// `hidden × m`
    pub fc1_w: Matrix,
    /// `1 × hidden`
    pub fc1_b: Matrix,
    /// `1 × hidden`
    pub fc2_w: Matrix,
    /// `1 × 1`
    pub fc2_b: Matrix,
}

struct Tape {
    caches: Vec<crate::layer::ForwardCache>,
    g: Matrix,
    z1: Matrix,
    out: Vec<f64>,
}

fn broadcast(f: &Matrix, m: usize) -> Matrix {
    Matrix::from_fn(f.rows(), f.cols() * m, |r, c| f[(r, c / m)])
}

impl AngleModel {
    /// `W0 = I` (frozen), `ε̄ ~ U(±0.1)`, `L ~ U(±1/√d)`, FC weights and
    /// biases `~ U(±1/√fan_in)`.
    pub fn init(task: &AngleRegressionTask, seed: u64) -> Result<Self> {
        task.validate()?;
        let m = task.channels;
        let mut layer = LConvLayer::init(
            LayerInit {
                d: task.d(),
                m_in: m,
                m_out: m,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            seed,
        )?;
        layer.w0 = Matrix::identity(m);
        layer.trainable.w0 = false;
        let mut rng = SeededRng::new(seed.wrapping_add(1_000));
        let s1 = 1.0 / (m as f64).sqrt();
        let s2 = 1.0 / (task.hidden as f64).sqrt();
        Ok(AngleModel {
            layer,
            recursions: task.recursions,
            fc1_w: rng.uniform_matrix(task.hidden, m, -s1, s1),
            fc1_b: rng.uniform_matrix(1, task.hidden, -s1, s1),
            fc2_w: rng.uniform_matrix(1, task.hidden, -s2, s2),
            fc2_b: rng.uniform_matrix(1, 1, -s2, s2),
        })
    }

    pub fn channels(&self) -> usize {
        self.layer.m_in()
    }

    fn head_params(&self) -> [&Matrix; 4] {
        [&self.fc1_w, &self.fc1_b, &self.fc2_w, &self.fc2_b]
    }

    /// Layer parameters followed by the head.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut p = self.layer.params();
        p.extend(self.head_params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.layer.params_mut();
        p.extend([&mut self.fc1_w, &mut self.fc1_b, &mut self.fc2_w, &mut self.fc2_b]);
        p
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut m = self.layer.trainable_mask();
        m.extend([true; 4]);
        m
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.as_slice().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|p| p.as_slice().len()).sum();
        if values.len() != total {
            return Err(Error::dim("flat angle-model parameters", total, values.len()));
        }
        let mut k = 0;
        for p in self.params_mut() {
            let n = p.as_slice().len();
            p.as_mut_slice().copy_from_slice(&values[k..k + n]);
            k += n;
        }
        Ok(())
    }

    fn run(&self, f: &Matrix, y: &Matrix) -> Result<Tape> {
        if f.shape() != y.shape() {
            return Err(Error::dim(
                "angle-model input pair",
                format!("{}x{}", f.rows(), f.cols()),
                format!("{}x{}", y.rows(), y.cols()),
            ));
        }
        let m = self.channels();
        let b = f.cols();
        let caches = recursive_forward_cached(&broadcast(f, m), &self.layer, self.recursions)?;
        let h = caches.last().map(|c| &c.output);
        let h0;
        let h = match h {
            Some(h) => h,
            None => {
                h0 = broadcast(f, m);
                &h0
            }
        };
        let mut g = Matrix::zeros(b, m);
        for mu in 0..f.rows() {
            for s in 0..b {
                let yv = y[(mu, s)];
                for a in 0..m {
                    g[(s, a)] += yv * h[(mu, s * m + a)];
                }
            }
        }
        let g = g.map(f64::tanh);
        let mut pre1 = g.matmul_t(&self.fc1_w)?;
        for r in 0..b {
            for (v, bias) in pre1.row_mut(r).iter_mut().zip(self.fc1_b.as_slice()) {
                *v += bias;
            }
        }
        let z1 = pre1.map(f64::tanh);
        let out = z1
            .matmul_t(&self.fc2_w)?
            .as_slice()
            .iter()
            .map(|v| v + self.fc2_b[(0, 0)])
            .collect();
        Ok(Tape { caches, g, z1, out })
    }

    /// Predicted angles for the columns of `f` and `y`.
    pub fn predict(&self, f: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
        Ok(self.run(f, y)?.out)
    }

    /// Mean squared error against `theta`, with gradients in the order of
    /// [`AngleModel::params`].
    pub fn loss_and_grads(&self, f: &Matrix, y: &Matrix, theta: &[f64]) -> Result<(f64, Vec<Matrix>)> {
        let tape = self.run(f, y)?;
        let b = f.cols();
        if theta.len() != b {
            return Err(Error::dim("angle labels", b, theta.len()));
        }
        let m = self.channels();
        let n = b as f64;
        let resid: Vec<f64> = tape.out.iter().zip(theta).map(|(o, t)| o - t).collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;

        let d_out = Matrix::from_vec(b, 1, resid.iter().map(|r| 2.0 * r / n).collect())?;
        let d_fc2_w = d_out.t_matmul(&tape.z1)?;
        let d_fc2_b = Matrix::filled(1, 1, d_out.sum());
        let d_pre1 = d_out.matmul(&self.fc2_w)?.hadamard(&tape.z1.map(|z| 1.0 - z * z))?;
        let d_fc1_w = d_pre1.t_matmul(&tape.g)?;
        let d_fc1_b = Matrix::from_vec(1, d_pre1.cols(), (0..d_pre1.cols()).map(|c| d_pre1.column(c).iter().sum()).collect())?;
        let d_gpre = d_pre1.matmul(&self.fc1_w)?.hadamard(&tape.g.map(|g| 1.0 - g * g))?;

        let mut d_h = Matrix::zeros(f.rows(), b * m);
        for mu in 0..f.rows() {
            for s in 0..b {
                let yv = y[(mu, s)];
                for a in 0..m {
                    d_h[(mu, s * m + a)] = yv * d_gpre[(s, a)];
                }
            }
        }
        let mut grads: Vec<Matrix> = if tape.caches.is_empty() {
            self.layer.params().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect()
        } else {
            let lg = recursive_backward(&self.layer, &tape.caches, &d_h)?;
            lg.as_list().into_iter().cloned().collect()
        };
        grads.extend([d_fc1_w, d_fc1_b, d_fc2_w, d_fc2_b]);
        Ok((loss, grads))
    }

    pub fn mse(&self, pairs: &AnglePairs) -> Result<f64> {
        let pred = self.predict(&pairs.f, &pairs.rotated)?;
        Ok(pred.iter().zip(&pairs.theta).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
    }

    fn extras(&self) -> Vec<(String, Matrix)> {
        HEAD_NAMES
            .iter()
            .zip(self.head_params())
            .map(|(n, m)| (n.to_string(), m.clone()))
            .collect()
    }

    fn from_checkpoint(c: &Checkpoint, recursions: usize) -> Result<Self> {
        let get = |name: &str| {
            c.extras
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| Error::Config(format!("checkpoint is missing '{name}'")))
        };
        Ok(AngleModel {
            layer: c.layer.clone(),
            recursions,
            fc1_w: get("fc1_w")?,
            fc1_b: get("fc1_b")?,
            fc2_w: get("fc2_w")?,
            fc2_b: get("fc2_b")?,
        })
    }
}

pub fn train_angle_regression(task: &AngleRegressionTask, opt: &OptimizerConfig) -> Result<TrainOutcome> {
    let (train, test) = super::gen_angle_pairs_dataset(task)?;
    train_angle_regression_on(task, opt, &train, &test, None)
}

/// Trains on pre-generated pairs, optionally continuing from a checkpoint.
/// The learned generator's correlation with the analytic rotation
/// generator is reported both signed and in absolute value, since `ε̄` and
/// `L̂` can swap sign together without changing the model.
pub fn train_angle_regression_on(
    task: &AngleRegressionTask,
    opt: &OptimizerConfig,
    train: &AnglePairs,
    test: &AnglePairs,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    task.validate()?;
    opt.validate()?;
    let start = Instant::now();
    let d = task.d();
    let rows = all_rows(d);
    let initial = AngleModel::init(task, task.seed.wrapping_add(2))?;
    let baseline = initial.mse(test)?;
    let (mut model, mut optimizer, mut history) = match resume {
        Some(c) => {
            let mut o = c.optimizer.clone();
            o.cfg = *opt;
            (AngleModel::from_checkpoint(&c, task.recursions)?, o, c.history)
        }
        None => (initial, Optimizer::new(*opt)?, Vec::new()),
    };
    let mask = model.trainable_mask();

    run_epochs(
        &mut model,
        &mut optimizer,
        train.f.cols(),
        task.seed,
        &mut history,
        |model, batch, optimizer| {
            let fb = train.f.select(&rows, batch);
            let yb = train.rotated.select(&rows, batch);
            let tb: Vec<f64> = batch.iter().map(|&j| train.theta[j]).collect();
            let (loss, grads) = model.loss_and_grads(&fb, &yb, &tb)?;
            let refs: Vec<&Matrix> = grads.iter().collect();
            optimizer.step(model.params_mut(), &refs, &mask)?;
            Ok(loss)
        },
        |model| Ok((model.mse(train)?, model.mse(test)?)),
    )?;

    let mut metrics = BTreeMap::new();
    metrics.insert("baseline_test_mse".to_string(), baseline);
    let mean = test.theta.iter().sum::<f64>() / test.theta.len() as f64;
    let var = test.theta.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / test.theta.len() as f64;
    metrics.insert("label_variance".to_string(), var);
    let learned = model.layer.generators[0].materialize()?;
    if let Ok(lt) = sw_rotation_generator(task.width, task.height) {
        if let Ok(c) = cosine_correlation(&learned, &lt.materialize()?) {
            metrics.insert("corr_l_vs_sw_rotation".to_string(), c);
            metrics.insert("abs_corr_l_vs_sw_rotation".to_string(), c.abs());
        }
    }
    let report = TrainReport {
        task: TASK_NAME.into(),
        seed: task.seed,
        config: serde_json::json!({ "task": task, "optimizer": opt }),
        final_test_mse: history.last().map(|e| e.test_mse).unwrap_or(f64::NAN),
        epochs: history.clone(),
        metrics,
    };
    let extras = model.extras();
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint {
            layer: model.layer,
            optimizer,
            extras,
            history,
        },
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
