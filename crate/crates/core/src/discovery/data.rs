//! Synthetic rotation datasets of random images.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{rotate_image_bilinear, rotation_matrix_bilinear};
use crate::numerics::{Matrix, SeededRng};

/// Fixed small rotation of random images with pixels in `[−0.5, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedAngleTask {
    pub width: usize,
    pub height: usize,
    pub theta: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for FixedAngleTask {
    fn default() -> Self {
        FixedAngleTask {
            width: 7,
            height: 7,
            theta: PI / 10.0,
            n_train: 50_000,
            n_test: 10_000,
            seed: 0,
        }
    }
}

impl FixedAngleTask {
    pub fn d(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!("image must be at least 2x2, got {}x{}", self.width, self.height)));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        Ok(())
    }
}

/// Pairs `(f, R(θ)f, θ)` with `θ` uniform in `[0, θ_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleRegressionTask {
    pub width: usize,
    pub height: usize,
    pub theta_max: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub channels: usize,
    pub recursions: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for AngleRegressionTask {
    fn default() -> Self {
        AngleRegressionTask {
            width: 7,
            height: 7,
            theta_max: PI / 3.0,
            n_train: 10_000,
            n_test: 2_000,
            channels: 10,
            recursions: 3,
            hidden: 5,
            seed: 0,
        }
    }
}

impl AngleRegressionTask {
    /// The 20×20 variant with `θ ∈ [0, π/4)` and 8 recursions.
    pub fn large_variant() -> Self {
        AngleRegressionTask {
            width: 20,
            height: 20,
            theta_max: PI / 4.0,
            recursions: 8,
            ..Self::default()
        }
    }

    pub fn d(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 4 || self.height < 4 {
            return Err(Error::Config(format!("image must be at least 4x4, got {}x{}", self.width, self.height)));
        }
        if self.n_train == 0 || self.n_test == 0 || self.channels == 0 || self.hidden == 0 {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if !(self.theta_max >= 0.0) || !self.theta_max.is_finite() {
            return Err(Error::Config(format!("theta_max must be finite and >= 0, got {}", self.theta_max)));
        }
        Ok(())
    }
}

/// Column `j` of each matrix is sample `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAngleData {
    pub x_train: Matrix,
    pub y_train: Matrix,
    pub x_test: Matrix,
    pub y_test: Matrix,
}

fn random_images(d: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    let mut x = Matrix::zeros(d, n);
    for j in 0..n {
        for p in 0..d {
            x[(p, j)] = rng.centered();
        }
    }
    x
}

/// Train split from `seed`, test split from `seed + 1`.
pub fn gen_fixed_angle_dataset(task: &FixedAngleTask) -> Result<FixedAngleData> {
    task.validate()?;
    let d = task.d();
    let r = rotation_matrix_bilinear(task.width, task.height, task.theta)?.matrix;
    let x_train = random_images(d, task.n_train, task.seed);
    let x_test = random_images(d, task.n_test, task.seed.wrapping_add(1));
    Ok(FixedAngleData {
        y_train: r.matmul(&x_train)?,
        y_test: r.matmul(&x_test)?,
        x_train,
        x_test,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnglePairs {
    /// `d × N` inputs.
    pub f: Matrix,
    /// `d × N` rotated inputs.
    pub rotated: Matrix,
    pub theta: Vec<f64>,
}

fn angle_pairs(task: &AngleRegressionTask, n: usize, seed: u64) -> Result<AnglePairs> {
    let d = task.d();
    let mut rng = SeededRng::new(seed);
    let mut f = Matrix::zeros(d, n);
    let mut rotated = Matrix::zeros(d, n);
    let mut theta = Vec::with_capacity(n);
    let mut img = vec![0.0; d];
    for j in 0..n {
        let th = task.theta_max * rng.unit();
        for v in img.iter_mut() {
            *v = rng.centered();
        }
        let out = rotate_image_bilinear(&img, task.width, task.height, th)?;
        for p in 0..d {
            f[(p, j)] = img[p];
            rotated[(p, j)] = out[p];
        }
        theta.push(th);
    }
    Ok(AnglePairs { f, rotated, theta })
}

/// `(train, test)` with seeds `seed` and `seed + 1`.
pub fn gen_angle_pairs_dataset(task: &AngleRegressionTask) -> Result<(AnglePairs, AnglePairs)> {
    task.validate()?;
    Ok((
        angle_pairs(task, task.n_train, task.seed)?,
        angle_pairs(task, task.n_test, task.seed.wrapping_add(1))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FixedAngleTask {
        FixedAngleTask {
            n_train: 200,
            n_test: 50,
            ..FixedAngleTask::default()
        }
    }

    #[test]
    fn zero_angle_is_identity_map() {
        let data = gen_fixed_angle_dataset(&FixedAngleTask { theta: 0.0, ..small() }).unwrap();
        assert_eq!(data.x_train, data.y_train);
        assert_eq!(data.x_test, data.y_test);
    }

    #[test]
    fn fixed_angle_is_deterministic_and_in_range() {
        let a = gen_fixed_angle_dataset(&small()).unwrap();
        let b = gen_fixed_angle_dataset(&small()).unwrap();
        assert_eq!(a, b);
        assert!(a.x_train.as_slice().iter().all(|v| (-0.5..0.5).contains(v)));
        assert_ne!(a.x_train.select(&(0..49).collect::<Vec<_>>(), &[0]), a.x_test.select(&(0..49).collect::<Vec<_>>(), &[0]));
    }

    #[test]
    fn rotation_only_removes_mass() {
        let a = gen_fixed_angle_dataset(&small()).unwrap();
        for j in 0..a.x_train.cols() {
            let nx: f64 = a.x_train.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = a.y_train.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(ny <= nx + 1e-9);
        }
    }

    #[test]
    fn pairs_with_zero_range_are_identical() {
        let task = AngleRegressionTask {
            theta_max: 0.0,
            n_train: 20,
            n_test: 5,
            ..AngleRegressionTask::default()
        };
        let (train, _) = gen_angle_pairs_dataset(&task).unwrap();
        assert_eq!(train.f, train.rotated);
        assert!(train.theta.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn pairs_are_deterministic() {
        let task = AngleRegressionTask {
            n_train: 30,
            n_test: 10,
            ..AngleRegressionTask::default()
        };
        assert_eq!(gen_angle_pairs_dataset(&task).unwrap(), gen_angle_pairs_dataset(&task).unwrap());
    }

    #[test]
    fn labels_are_uniform() {
        let task = AngleRegressionTask {
            n_train: 10_000,
            n_test: 1,
            ..AngleRegressionTask::default()
        };
        let (train, _) = gen_angle_pairs_dataset(&task).unwrap();
        let mut counts = [0usize; 10];
        for t in &train.theta {
            assert!((0.0..task.theta_max).contains(t));
            counts[((t / task.theta_max) * 10.0) as usize] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of χ² with 9 degrees of freedom
        assert!(chi2 < 21.666, "χ² = {chi2}");
    }
}
