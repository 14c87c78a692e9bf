//! SGD and Adam over lists of parameter matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{io, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64, batch_size: usize, epochs: usize) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            batch_size,
            epochs,
        }
    }

    pub fn sgd(lr: f64, batch_size: usize, epochs: usize) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr, batch_size, epochs)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "Adam betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("Adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// `p ← p − lr·g`.
pub fn sgd_step(param: &mut Matrix, grad: &Matrix, lr: f64) -> Result<()> {
    param.axpy(-lr, grad)
}

/// First and second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSlot {
    pub m: Matrix,
    pub v: Matrix,
}

impl AdamSlot {
    pub fn zeros_like(p: &Matrix) -> Self {
        AdamSlot {
            m: Matrix::zeros(p.rows(), p.cols()),
            v: Matrix::zeros(p.rows(), p.cols()),
        }
    }
}

/// Bias-corrected Adam update at timestep `t ≥ 1`.
pub fn adam_step(param: &mut Matrix, grad: &Matrix, slot: &mut AdamSlot, t: u64, cfg: &OptimizerConfig) -> Result<()> {
    if param.shape() != grad.shape() || slot.m.shape() != grad.shape() {
        return Err(Error::dim(
            "Adam parameter/gradient shape",
            format!("{}x{}", param.rows(), param.cols()),
            format!("{}x{}", grad.rows(), grad.cols()),
        ));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let p = param.as_mut_slice();
    let m = slot.m.as_mut_slice();
    let v = slot.v.as_mut_slice();
    for (k, &g) in grad.as_slice().iter().enumerate() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let mh = m[k] / bc1;
        let vh = v[k] / bc2;
        p[k] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Optimizer state over a fixed, ordered list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    pub t: u64,
    pub slots: Vec<AdamSlot>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer { cfg, t: 0, slots: Vec::new() })
    }

    /// Updates every parameter whose `mask` entry is set. The whole step is
    /// rejected, leaving parameters and state untouched, if any masked
    /// gradient is non-finite.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[&Matrix], mask: &[bool]) -> Result<()> {
        if params.len() != grads.len() || params.len() != mask.len() {
            return Err(Error::dim("optimizer parameter list", params.len(), grads.len()));
        }
        for (k, (g, &on)) in grads.iter().zip(mask).enumerate() {
            if on && !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {k}; update rejected")));
            }
        }
        if self.slots.is_empty() && self.cfg.kind == OptimizerKind::Adam {
            self.slots = params.iter().map(|p| AdamSlot::zeros_like(p)).collect();
        }
        self.t += 1;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if !mask[k] {
                continue;
            }
            match self.cfg.kind {
                OptimizerKind::Sgd => sgd_step(p, g, self.cfg.lr)?,
                OptimizerKind::Adam => adam_step(p, g, &mut self.slots[k], self.t, &self.cfg)?,
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        io::ensure_dir(dir)?;
        io::write_json(dir.join("optimizer.json"), &OptimizerFile { cfg: self.cfg, t: self.t, slots: self.slots.len() })?;
        for (k, s) in self.slots.iter().enumerate() {
            io::write_matrix(dir.join(format!("adam_m_{k}.mat")), &s.m)?;
            io::write_matrix(dir.join(format!("adam_v_{k}.mat")), &s.v)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let f: OptimizerFile = io::read_json(dir.join("optimizer.json"))?;
        let slots = (0..f.slots)
            .map(|k| {
                Ok(AdamSlot {
                    m: io::read_matrix(dir.join(format!("adam_m_{k}.mat")))?,
                    v: io::read_matrix(dir.join(format!("adam_v_{k}.mat")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut opt = Optimizer::new(f.cfg)?;
        opt.t = f.t;
        opt.slots = slots;
        Ok(opt)
    }
}

#[derive(Serialize, Deserialize)]
struct OptimizerFile {
    cfg: OptimizerConfig,
    t: u64,
    slots: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_example() {
        let mut p = Matrix::filled(1, 1, 1.0);
        sgd_step(&mut p, &Matrix::filled(1, 1, 2.0), 0.1).unwrap();
        assert!((p[(0, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [OptimizerConfig::adam(0.1, 1, 1), OptimizerConfig::sgd(0.1, 1, 1)] {
            let mut opt = Optimizer::new(cfg).unwrap();
            let mut p = Matrix::filled(2, 2, 3.0);
            let g = Matrix::zeros(2, 2);
            opt.step(vec![&mut p], &[&g], &[true]).unwrap();
            assert_eq!(p, Matrix::filled(2, 2, 3.0));
        }
    }

    #[test]
    fn first_adam_step_is_lr() {
        let cfg = OptimizerConfig::adam(1e-3, 1, 1);
        let mut p = Matrix::zeros(1, 1);
        let mut slot = AdamSlot::zeros_like(&p);
        adam_step(&mut p, &Matrix::filled(1, 1, 1.0), &mut slot, 1, &cfg).unwrap();
        let closed_form = 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p[(0, 0)] + closed_form).abs() < 1e-6 * 1e-3);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1, 1, 1)).unwrap();
        let mut a = Matrix::filled(1, 1, 1.0);
        let mut b = Matrix::filled(1, 1, 1.0);
        let ga = Matrix::filled(1, 1, 1.0);
        let gb = Matrix::filled(1, 1, f64::NAN);
        let r = opt.step(vec![&mut a, &mut b], &[&ga, &gb], &[true, true]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert_eq!((a[(0, 0)], b[(0, 0)], opt.t), (1.0, 1.0, 0));
    }

    #[test]
    fn masked_parameters_are_frozen() {
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.5, 1, 1)).unwrap();
        let mut a = Matrix::filled(1, 1, 1.0);
        let mut b = Matrix::filled(1, 1, 1.0);
        let g = Matrix::filled(1, 1, 1.0);
        opt.step(vec![&mut a, &mut b], &[&g, &g], &[false, true]).unwrap();
        assert_eq!((a[(0, 0)], b[(0, 0)]), (1.0, 0.5));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::adam(-1.0, 1, 1).validate().is_err());
        assert!(OptimizerConfig::adam(1e-3, 0, 1).validate().is_err());
        assert!(OptimizerConfig::adam(1e-3, 16, 1).validate().is_ok());
    }

    #[test]
    fn state_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1, 1, 1)).unwrap();
        let mut p = Matrix::filled(2, 1, 1.0);
        opt.step(vec![&mut p], &[&Matrix::filled(2, 1, 0.3)], &[true]).unwrap();
        opt.save(dir.path()).unwrap();
        assert_eq!(Optimizer::load(dir.path()).unwrap(), opt);
    }
}
