//! Closed-form Lie algebras of small dimension and their vector fields.

use serde::{Deserialize, Serialize};

use super::Generator;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticKind {
    /// Translations of ℝⁿ in the affine `(n+1) × (n+1)` representation.
    Translations(usize),
    So2,
    Scaling,
}

/// Basis matrices `L_i` of a Lie algebra acting on ℝⁿ, with the vector
/// fields `x ↦ [g_x L_i x₀]` they induce (`g_x` the lift of `x`).
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGenerator {
    pub kind: AnalyticKind,
    pub basis: Vec<Matrix>,
}

pub fn analytic_generator(kind: AnalyticKind) -> AnalyticGenerator {
    let basis = match kind {
        AnalyticKind::Translations(n) => (0..n)
            .map(|i| {
                let mut m = Matrix::zeros(n + 1, n + 1);
                m[(i, n)] = 1.0;
                m
            })
            .collect(),
        AnalyticKind::So2 => vec![Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]])],
        AnalyticKind::Scaling => vec![Matrix::identity(2)],
    };
    AnalyticGenerator { kind, basis }
}

impl AnalyticGenerator {
    /// Dimension of the space the group acts on.
    pub fn space_dim(&self) -> usize {
        match self.kind {
            AnalyticKind::Translations(n) => n,
            AnalyticKind::So2 | AnalyticKind::Scaling => 2,
        }
    }

    pub fn generator(&self, i: usize) -> Result<Generator> {
        let m = self.basis.get(i).ok_or_else(|| {
            Error::dim("analytic generator index", format!("< {}", self.basis.len()), i)
        })?;
        Generator::dense(m.clone(), format!("{:?}[{i}]", self.kind))
    }

    /// Field components `L̂_i(x)`. The groups here are abelian, so the lift
    /// commutes with `L_i` and the field is `L_i` applied to `x` (in
    /// homogeneous coordinates for translations).
    pub fn field(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.space_dim();
        if x.len() != n {
            return Err(Error::dim("analytic field point", n, x.len()));
        }
        let m = self
            .basis
            .get(i)
            .ok_or_else(|| Error::dim("analytic generator index", format!("< {}", self.basis.len()), i))?;
        let mut point = x.to_vec();
        if matches!(self.kind, AnalyticKind::Translations(_)) {
            point.push(1.0);
        }
        let v = m.matmul(&Matrix::column_vector(&point))?;
        Ok(v.as_slice()[..n].to_vec())
    }
}
