//! Equivariance and reduction diagnostics for a layer.

use super::LConvLayer;
use crate::error::{Error, Result};
use crate::groups::{normalized_adjacency, Generator, GroupElement};
use crate::numerics::{log_log_slope, Matrix};

/// `‖Q[w·f] − w·Q[f]‖ / max(‖Q[f]‖, 1e-300)` with `w·f = w⁻ᵀ f`.
pub fn equivariance_residual(f: &Matrix, w: &GroupElement, layer: &LConvLayer) -> Result<f64> {
    let q = layer.forward(f)?;
    let lhs = layer.forward(&w.act(f)?)?;
    let rhs = w.act(&q)?;
    Ok(lhs.sub(&rhs)?.frobenius_norm() / q.frobenius_norm().max(1e-300))
}

/// Equivariance residuals for the near-identity elements `w = I + ηL`, and
/// the fitted log-log slope of residual against `η`.
///
/// For a linear layer the residual is `Σ_i [L̂_i, w⁻ᵀ] f ε̄_iᵀ W0ᵀ`, whose
/// leading term is `−η [L̂_i, Lᵀ]`. If that commutator vanishes then `L̂_i`
/// commutes with every power of `Lᵀ` and the residual is zero to rounding.
pub fn near_identity_equivariance_sweep(
    f: &Matrix,
    l: &Matrix,
    layer: &LConvLayer,
    etas: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if !l.is_square() || Some(l.rows()) != layer.d() {
        return Err(Error::dim("near-identity direction size", layer.d().unwrap_or(0), l.rows()));
    }
    let mut residuals = Vec::with_capacity(etas.len());
    for &eta in etas {
        let w = Matrix::identity(l.rows()).add(&l.scale(eta))?;
        let w = GroupElement::new(w, format!("I + {eta}·L"))?;
        residuals.push(equivariance_residual(f, &w, layer)?);
    }
    let slope = log_log_slope(etas, &residuals);
    Ok((residuals, slope))
}

/// Compares a residual-free single-generator layer with `ε̄ = I`, `W0 = W`
/// and `L̂ = D^{-1/2} A D^{-1/2}` against the graph convolution `L̂ f Wᵀ`.
pub fn gcn_reduction_check(f: &Matrix, adjacency: &Matrix, w: &Matrix) -> Result<f64> {
    let l = normalized_adjacency(adjacency)?;
    let m_in = w.cols();
    let mut layer = LConvLayer::new(
        w.clone(),
        vec![Matrix::identity(m_in)],
        vec![Generator::dense(l.clone(), "normalized adjacency")?],
    )?;
    layer.residual = false;
    let q = layer.forward(f)?;
    let gcn = super::mix_channels(&l.matmul(f)?, m_in, &w.transpose())?;
    Ok(q.sub(&gcn)?.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{rotation_matrix_bilinear, sw_shift_generator, sw_shift_matrix};
    use crate::layer::LayerInit;
    use crate::numerics::SeededRng;

    #[test]
    fn identity_element_has_zero_residual() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 6,
                m_in: 2,
                m_out: 2,
                n_generators: 2,
                rank: None,
                scalar_eps: false,
            },
            1,
        )
        .unwrap();
        let f = SeededRng::new(2).normal_matrix(6, 2);
        assert_eq!(equivariance_residual(&f, &GroupElement::identity(6), &layer).unwrap(), 0.0);
    }

    #[test]
    fn sw_shift_layer_is_equivariant() {
        let d = 16;
        let mut rng = SeededRng::new(3);
        let layer = LConvLayer::new(
            rng.uniform_matrix(3, 2, -1.0, 1.0),
            vec![rng.uniform_matrix(2, 2, -0.3, 0.3)],
            vec![sw_shift_generator(d).unwrap()],
        )
        .unwrap();
        let f = rng.normal_matrix(d, 4);
        for z in [0.3, 1.0, 2.3] {
            let w = sw_shift_matrix(d, z).unwrap();
            assert!(equivariance_residual(&f, &w, &layer).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn rotation_residual_is_a_finite_diagnostic() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 49,
                m_in: 1,
                m_out: 1,
                n_generators: 1,
                rank: None,
                scalar_eps: true,
            },
            4,
        )
        .unwrap();
        let f = SeededRng::new(5).normal_matrix(49, 1);
        let w = rotation_matrix_bilinear(7, 7, 0.3).unwrap();
        let r = equivariance_residual(&f, &w, &layer).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn near_identity_residual_with_commuting_direction_vanishes() {
        let d = 8;
        let l = sw_shift_generator(d).unwrap();
        let layer = LConvLayer::with_scalar_eps(Matrix::identity(1), &[0.3], vec![l.clone()]).unwrap();
        let f = SeededRng::new(6).normal_matrix(d, 1);
        let (res, _) =
            near_identity_equivariance_sweep(&f, &l.materialize().unwrap(), &layer, &[0.1, 0.01]).unwrap();
        assert!(res.iter().all(|r| *r < 1e-13), "{res:?}");
    }

    #[test]
    fn near_identity_residual_is_first_order_for_non_normal_direction() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 6,
                m_in: 1,
                m_out: 1,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            7,
        )
        .unwrap();
        let l = layer.generators[0].materialize().unwrap();
        let f = SeededRng::new(8).normal_matrix(6, 1);
        let (_, slope) =
            near_identity_equivariance_sweep(&f, &l, &layer, &[1e-1, 3e-2, 1e-2, 3e-3]).unwrap();
        assert!((slope - 1.0).abs() < 0.1, "{slope}");
    }

    fn random_graph(rng: &mut SeededRng, n: usize) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.unit() < 0.4 {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
        a
    }

    #[test]
    fn gcn_reduction_holds() {
        let mut rng = SeededRng::new(9);
        let a = random_graph(&mut rng, 6);
        let f = rng.normal_matrix(6, 2);
        let w = rng.normal_matrix(3, 2);
        assert!(gcn_reduction_check(&f, &a, &w).unwrap() <= 1e-12);
    }

    #[test]
    fn gcn_degenerate_inputs() {
        let mut rng = SeededRng::new(10);
        let w = rng.normal_matrix(2, 2);
        let f = rng.normal_matrix(5, 2);
        assert_eq!(gcn_reduction_check(&f, &Matrix::zeros(5, 5), &w).unwrap(), 0.0);
        let a = random_graph(&mut rng, 5);
        assert_eq!(gcn_reduction_check(&Matrix::zeros(5, 2), &a, &w).unwrap(), 0.0);
    }

    #[test]
    fn low_rank_product_has_bounded_rank() {
        let mut rng = SeededRng::new(11);
        let u = rng.normal_matrix(8, 2);
        let v = rng.normal_matrix(2, 8);
        let m = Generator::low_rank(u, v, "r2").unwrap().materialize().unwrap();
        let na = nalgebra::DMatrix::from_row_slice(8, 8, m.as_slice());
        let mut s: Vec<f64> = na.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[2] <= 1e-10 * s[0]);
    }
}
