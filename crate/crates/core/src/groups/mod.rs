//! Matrix representations of the groups and Lie algebra generators acting on
//! discretized base spaces.
//!
//! A base space is a finite set of `d` grid points ([`GridSpec`]). Group
//! elements act on it as invertible `d × d` matrices ([`GroupElement`]), and
//! Lie algebra basis elements pushed forward onto the grid are `d × d`
//! matrices ([`Generator`]), optionally stored in low-rank form.

mod analytic;
mod graph;
mod rotation;
mod shift;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use analytic::{analytic_generator, AnalyticGenerator, AnalyticKind};
pub use graph::{assemble_generator_from_edges, normalized_adjacency, EdgeTopology};
pub use rotation::{
    image_coordinates, rotate_image_bilinear, rotation_matrix_bilinear, sw_axis_derivatives, sw_rotation_generator,
};
pub use shift::{nyquist_closure_defect, nyquist_projector, sw_shift_generator, sw_shift_matrix};

use crate::error::{Error, Result};
use crate::numerics::{io, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Line,
    Image,
}

/// A discrete base space of `d` points: a 1D line or a flattened 2D image
/// (row-major, index `row · width + col`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub d: usize,
    pub width: usize,
    pub height: usize,
    pub periodic: bool,
}

impl GridSpec {
    pub fn line(width: usize, periodic: bool) -> Self {
        GridSpec {
            kind: GridKind::Line,
            d: width,
            width,
            height: 1,
            periodic,
        }
    }

    pub fn image(width: usize, height: usize, periodic: bool) -> Self {
        GridSpec {
            kind: GridKind::Image,
            d: width * height,
            width,
            height,
            periodic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            GridKind::Line => self.width,
            GridKind::Image => self.width * self.height,
        };
        if self.d != expected || (self.kind == GridKind::Line && self.height != 1) {
            return Err(Error::dim(
                "GridSpec flattened size",
                expected,
                format!("{} ({:?} {}x{})", self.d, self.kind, self.width, self.height),
            ));
        }
        Ok(())
    }

    /// Number of spatial axes (1 for lines, 2 for images).
    pub fn dims(&self) -> usize {
        match self.kind {
            GridKind::Line => 1,
            GridKind::Image => 2,
        }
    }
}

/// An invertible `d × d` matrix acting on feature maps over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub matrix: Matrix,
    pub label: String,
}

impl GroupElement {
    pub fn new(matrix: Matrix, label: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dim("GroupElement must be square", matrix.rows(), matrix.cols()));
        }
        Ok(GroupElement {
            matrix,
            label: label.into(),
        })
    }

    pub fn identity(d: usize) -> Self {
        GroupElement {
            matrix: Matrix::identity(d),
            label: "identity".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        Ok(GroupElement {
            matrix: self.matrix.matmul(&other.matrix)?,
            label: format!("({})·({})", self.label, other.label),
        })
    }

    /// The action on feature maps, `w · f = w⁻ᵀ f`.
    pub fn act(&self, f: &Matrix) -> Result<Matrix> {
        let lu = crate::numerics::linalg::Lu::factor(&self.matrix.transpose())?;
        lu.solve(f)
    }

    pub fn save(&self, dir: impl AsRef<Path>, name: &str, grid: Option<GridSpec>) -> Result<()> {
        save_with_sidecar(dir.as_ref(), name, &self.matrix, &self.label, "group_element", grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorRepr {
    Dense(Matrix),
    /// `U · V` with `U` d×r and `V` r×d.
    LowRank { u: Matrix, v: Matrix },
}

/// A Lie algebra basis element pushed forward onto a grid of `d` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub repr: GeneratorRepr,
    pub label: String,
}

impl Generator {
    pub fn dense(matrix: Matrix, label: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dim("Generator must be square", matrix.rows(), matrix.cols()));
        }
        Ok(Generator {
            repr: GeneratorRepr::Dense(matrix),
            label: label.into(),
        })
    }

    pub fn low_rank(u: Matrix, v: Matrix, label: impl Into<String>) -> Result<Self> {
        if u.cols() != v.rows() {
            return Err(Error::dim("low-rank inner dimension (U cols vs V rows)", u.cols(), v.rows()));
        }
        if u.rows() != v.cols() {
            return Err(Error::dim("low-rank outer dimension (U rows vs V cols)", u.rows(), v.cols()));
        }
        Ok(Generator {
            repr: GeneratorRepr::LowRank { u, v },
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            GeneratorRepr::Dense(m) => m.rows(),
            GeneratorRepr::LowRank { u, .. } => u.rows(),
        }
    }

    pub fn is_low_rank(&self) -> bool {
        matches!(self.repr, GeneratorRepr::LowRank { .. })
    }

    /// Dense `d × d` form (`U·V` for low-rank generators).
    pub fn materialize(&self) -> Result<Matrix> {
        match &self.repr {
            GeneratorRepr::Dense(m) => Ok(m.clone()),
            GeneratorRepr::LowRank { u, v } => u.matmul(v),
        }
    }

    /// `L̂ · f` without forming the dense matrix.
    pub fn apply(&self, f: &Matrix) -> Result<Matrix> {
        match &self.repr {
            GeneratorRepr::Dense(m) => m.matmul(f),
            GeneratorRepr::LowRank { u, v } => u.matmul(&v.matmul(f)?),
        }
    }

    /// `L̂ᵀ · g`.
    pub fn apply_transpose(&self, g: &Matrix) -> Result<Matrix> {
        match &self.repr {
            GeneratorRepr::Dense(m) => m.t_matmul(g),
            GeneratorRepr::LowRank { u, v } => v.t_matmul(&u.t_matmul(g)?),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Generator {
        let repr = match &self.repr {
            GeneratorRepr::Dense(m) => GeneratorRepr::Dense(m.scale(alpha)),
            GeneratorRepr::LowRank { u, v } => GeneratorRepr::LowRank {
                u: u.scale(alpha),
                v: v.clone(),
            },
        };
        Generator {
            repr,
            label: self.label.clone(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>, name: &str, grid: Option<GridSpec>) -> Result<()> {
        let dir = dir.as_ref();
        match &self.repr {
            GeneratorRepr::Dense(m) => save_with_sidecar(dir, name, m, &self.label, "generator", grid),
            GeneratorRepr::LowRank { u, v } => {
                io::write_matrix(dir.join(format!("{name}_U.mat")), u)?;
                io::write_matrix(dir.join(format!("{name}_V.mat")), v)?;
                io::write_json(
                    dir.join(format!("{name}.json")),
                    &Sidecar {
                        label: self.label.clone(),
                        kind: "generator_low_rank".into(),
                        grid,
                    },
                )
            }
        }
    }
}

/// JSON metadata stored next to a matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub label: String,
    pub kind: String,
    pub grid: Option<GridSpec>,
}

fn save_with_sidecar(
    dir: &Path,
    name: &str,
    m: &Matrix,
    label: &str,
    kind: &str,
    grid: Option<GridSpec>,
) -> Result<()> {
    io::write_matrix(dir.join(format!("{name}.mat")), m)?;
    io::write_json(
        dir.join(format!("{name}.json")),
        &Sidecar {
            label: label.to_string(),
            kind: kind.to_string(),
            grid,
        },
    )
}

/// Loads a generator saved by [`Generator::save`].
pub fn load_generator(dir: impl AsRef<Path>, name: &str) -> Result<(Generator, Sidecar)> {
    let dir = dir.as_ref();
    let sidecar: Sidecar = io::read_json(dir.join(format!("{name}.json")))?;
    let gen = if sidecar.kind == "generator_low_rank" {
        let u = io::read_matrix(dir.join(format!("{name}_U.mat")))?;
        let v = io::read_matrix(dir.join(format!("{name}_V.mat")))?;
        Generator::low_rank(u, v, sidecar.label.clone())?
    } else {
        Generator::dense(io::read_matrix(dir.join(format!("{name}.mat")))?, sidecar.label.clone())?
    };
    Ok((gen, sidecar))
}

/// Commutator `[A, B] = AB − BA` of the dense forms.
pub fn lie_bracket(a: &Generator, b: &Generator) -> Result<Matrix> {
    if a.dim() != b.dim() {
        return Err(Error::dim("lie_bracket generator size", a.dim(), b.dim()));
    }
    let a = a.materialize()?;
    let b = b.materialize()?;
    a.matmul(&b)?.sub(&b.matmul(&a)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(n: usize, r: usize, c: usize) -> Generator {
        let mut m = Matrix::zeros(n, n);
        m[(r, c)] = 1.0;
        Generator::dense(m, format!("e{r}{c}")).unwrap()
    }

    #[test]
    fn bracket_with_self_vanishes() {
        let l = sw_shift_generator(8).unwrap();
        assert_eq!(lie_bracket(&l, &l).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bracket_of_one_hot_matrices() {
        let b = lie_bracket(&one_hot(2, 0, 1), &one_hot(2, 1, 0)).unwrap();
        assert_eq!(b, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]));
    }

    #[test]
    fn rotation_and_scaling_commute() {
        let so2 = analytic_generator(AnalyticKind::So2).generator(0).unwrap();
        let scale = analytic_generator(AnalyticKind::Scaling).generator(0).unwrap();
        assert_eq!(lie_bracket(&so2, &scale).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bracket_is_antisymmetric_and_checks_shape() {
        let a = one_hot(3, 0, 2);
        let b = one_hot(3, 2, 1);
        let ab = lie_bracket(&a, &b).unwrap();
        let ba = lie_bracket(&b, &a).unwrap();
        assert_eq!(ab, ba.scale(-1.0));
        assert!(lie_bracket(&a, &one_hot(2, 0, 0)).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::image(4, 3, false).validate().is_ok());
        let mut bad = GridSpec::image(4, 3, false);
        bad.d = 11;
        assert!(bad.validate().is_err());
        assert_eq!(GridSpec::line(8, true).dims(), 1);
    }

    #[test]
    fn low_rank_shape_checks() {
        let u = Matrix::zeros(4, 2);
        assert!(Generator::low_rank(u.clone(), Matrix::zeros(3, 4), "bad").is_err());
        assert!(Generator::low_rank(u, Matrix::zeros(2, 4), "ok").is_ok());
    }

    #[test]
    fn group_action_is_inverse_transpose() {
        let w = sw_shift_matrix(8, 1.0).unwrap();
        let f = Matrix::from_fn(8, 1, |r, _| r as f64);
        // w is orthogonal, so w⁻ᵀ = w
        let acted = w.act(&f).unwrap();
        assert!(acted.max_abs_diff(&w.matrix.matmul(&f).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn save_and_load_generators() {
        let dir = tempfile::tempdir().unwrap();
        let dense = sw_shift_generator(6).unwrap();
        dense.save(dir.path(), "dense", Some(GridSpec::line(6, true))).unwrap();
        let (back, side) = load_generator(dir.path(), "dense").unwrap();
        assert_eq!(back, dense);
        assert_eq!(side.grid, Some(GridSpec::line(6, true)));

        let lr = Generator::low_rank(Matrix::identity(3), Matrix::identity(3), "lr").unwrap();
        lr.save(dir.path(), "lr", None).unwrap();
        assert_eq!(load_generator(dir.path(), "lr").unwrap().0, lr);
    }
}
