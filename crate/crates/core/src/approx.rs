//! Finite group elements from products of near-identity steps, a point-mass
//! group convolution as a reference, and the CNN special case.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groups::{sw_shift_generator, sw_shift_matrix, Generator, GroupElement};
use crate::layer::LConvLayer;
use crate::numerics::{cosine_correlation, log_log_slope, Matrix};

/// Kernel made of point masses `c_k` at group elements `u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    /// `(u_k, c_k)` with `c_k` of shape `m_out × m_in`.
    pub anchors: Vec<(GroupElement, Matrix)>,
}

impl SampledKernel {
    pub fn new(anchors: Vec<(GroupElement, Matrix)>) -> Result<Self> {
        let Some((u0, c0)) = anchors.first() else {
            return Err(Error::Config("a sampled kernel needs at least one anchor".into()));
        };
        for (u, c) in &anchors {
            if u.dim() != u0.dim() {
                return Err(Error::dim("kernel anchor dimension", u0.dim(), u.dim()));
            }
            if c.shape() != c0.shape() {
                return Err(Error::dim(
                    "kernel anchor weight shape",
                    format!("{}x{}", c0.rows(), c0.cols()),
                    format!("{}x{}", c.rows(), c.cols()),
                ));
            }
        }
        Ok(SampledKernel { anchors })
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].0.dim()
    }

    pub fn m_in(&self) -> usize {
        self.anchors[0].1.cols()
    }

    pub fn m_out(&self) -> usize {
        self.anchors[0].1.rows()
    }
}

/// `Σ_k (u_k f) c_kᵀ` for `f` of shape `d × m_in`. With integer shifts
/// `u_k = g(k)` this is the circular convolution `out_ν = Σ_k c_k f_{ν−k}`.
pub fn gconv_reference(f: &Matrix, kernel: &SampledKernel) -> Result<Matrix> {
    if f.rows() != kernel.dim() || f.cols() != kernel.m_in() {
        return Err(Error::dim(
            "gconv input",
            format!("{}x{}", kernel.dim(), kernel.m_in()),
            format!("{}x{}", f.rows(), f.cols()),
        ));
    }
    let mut out = Matrix::zeros(f.rows(), kernel.m_out());
    for (u, c) in &kernel.anchors {
        out.add_assign(&u.matrix.matmul(f)?.matmul_t(c)?)?;
    }
    Ok(out)
}

/// `(I + (z/n) L̂)ⁿ`.
pub fn approx_group_element(l: &Generator, z: f64, n: usize) -> Result<GroupElement> {
    if n == 0 {
        return Err(Error::Config("approx_group_element needs n >= 1".into()));
    }
    let step = Matrix::identity(l.dim()).add(&l.materialize()?.scale(z / n as f64))?;
    let n32 = u32::try_from(n).map_err(|_| Error::Config(format!("n = {n} is too large")))?;
    GroupElement::new(step.pow(n32)?, format!("({}) product z={z} n={n}", l.label))
}

/// A path of near-identity steps: step `a` is `I + Σ_i t_a^i L̂_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub eta: f64,
    pub path: Vec<Vec<f64>>,
}

impl ApproxConfig {
    /// `n` equal steps of `z/n` along a single generator.
    pub fn one_parameter(z: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("path needs at least one step".into()));
        }
        let t = z / n as f64;
        Ok(ApproxConfig {
            eta: t.abs().max(f64::MIN_POSITIVE),
            path: vec![vec![t]; n],
        })
    }

    pub fn validate(&self, n_generators: usize) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        for (a, t) in self.path.iter().enumerate() {
            if t.len() != n_generators {
                return Err(Error::dim("path step coefficients", n_generators, t.len()));
            }
            let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > self.eta * (1.0 + 1e-12) {
                return Err(Error::Config(format!("step {a} has norm {norm} > eta = {}", self.eta)));
            }
        }
        Ok(())
    }
}

/// Layers realizing a path toward an anchor, with the composed transport
/// and its distance from the anchor.
#[derive(Debug, Clone)]
pub struct AnchorStack {
    pub layers: Vec<LConvLayer>,
    pub transport: Matrix,
    pub frobenius_error: f64,
}

/// One single-channel layer `I + Σ_i t_a^i L̂_i` (with `W0 = 1`) per step.
pub fn lconv_stack_for_anchor(u: &GroupElement, basis: &[Generator], cfg: &ApproxConfig) -> Result<AnchorStack> {
    cfg.validate(basis.len())?;
    let d = u.dim();
    for g in basis {
        if g.dim() != d {
            return Err(Error::dim("basis generator size", d, g.dim()));
        }
    }
    let layers = cfg
        .path
        .iter()
        .map(|t| LConvLayer::with_scalar_eps(Matrix::identity(1), t, basis.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let transport = stack_transport(&layers, d)?;
    let frobenius_error = transport.sub(&u.matrix)?.frobenius_norm();
    Ok(AnchorStack {
        layers,
        transport,
        frobenius_error,
    })
}

/// `Q_p ⋯ Q_1` as a `d × d` matrix, found by pushing the identity through
/// the single-channel layers.
pub fn stack_transport(layers: &[LConvLayer], d: usize) -> Result<Matrix> {
    let mut x = Matrix::identity(d);
    for layer in layers {
        if layer.m_in() != 1 || layer.m_out() != 1 {
            return Err(Error::dim("transport layer channels", 1, layer.m_in()));
        }
        x = layer.forward(&x)?;
    }
    Ok(x)
}

/// Circular convolution `out_ν = Σ_μ w_μ f_{ν−μ}` against the same map
/// written as `Σ_μ w_μ g(μ) f` with integer shift-interpolation elements.
/// Returns the max abs difference.
pub fn cnn_equivalence_check(kernel: &[f64], f: &Matrix) -> Result<f64> {
    let d = f.rows();
    if kernel.is_empty() || kernel.len() > d {
        return Err(Error::Config(format!("kernel size {} must be in 1..={d}", kernel.len())));
    }
    let anchors = kernel
        .iter()
        .enumerate()
        .map(|(mu, &w)| Ok((sw_shift_matrix(d, mu as f64)?, Matrix::filled(1, 1, w))))
        .collect::<Result<Vec<_>>>()?;
    let mut diff = 0.0f64;
    for col in 0..f.cols() {
        let fc = Matrix::column_vector(&f.column(col));
        let via_group = gconv_reference(&fc, &SampledKernel::new(anchors.clone())?)?;
        for nu in 0..d {
            let direct: f64 = kernel.iter().enumerate().map(|(mu, w)| w * fc[((nu + d - mu) % d, 0)]).sum();
            diff = diff.max((direct - via_group[(nu, 0)]).abs());
        }
    }
    Ok(diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub eta: f64,
    pub frobenius_error: f64,
    pub correlation: f64,
}

/// `(I + z/n L̂)ⁿ` against the exact shift `g(z)` for each `n`, on a line of
/// `d` points.
pub fn shift_approx_sweep(d: usize, z: f64, ns: &[usize]) -> Result<Vec<SweepRow>> {
    if ns.is_empty() {
        return Err(Error::Config("sweep needs at least one n".into()));
    }
    let l = sw_shift_generator(d)?;
    let exact = sw_shift_matrix(d, z)?.matrix;
    ns.iter()
        .map(|&n| {
            let approx = approx_group_element(&l, z, n)?.matrix;
            Ok(SweepRow {
                n,
                eta: z / n as f64,
                frobenius_error: approx.sub(&exact)?.frobenius_norm(),
                correlation: cosine_correlation(&approx, &exact)?,
            })
        })
        .collect()
}

/// Per-`d` correlations at the requested `n` values.
pub fn shift_d_sweep(ds: &[usize], z: f64, ns: &[usize]) -> Result<Vec<(usize, Vec<SweepRow>)>> {
    if ds.is_empty() {
        return Err(Error::Config("d sweep needs at least one size".into()));
    }
    ds.iter().map(|&d| Ok((d, shift_approx_sweep(d, z, ns)?))).collect()
}

/// Error orders for the SW shift family on `d` points: the single-step
/// error `‖(I + ηL̂) − g(η)‖` against `η`, and the fixed-total error
/// `‖(I + (z/n)L̂)ⁿ − g(z)‖` against the step `z/n`. Returns
/// `(single_step_slope, fixed_total_slope)`.
pub fn shift_error_orders(d: usize, etas: &[f64], z: f64, ns: &[usize]) -> Result<(f64, f64)> {
    let l = sw_shift_generator(d)?;
    let lm = l.materialize()?;
    let single: Vec<f64> = etas
        .iter()
        .map(|&eta| {
            let step = Matrix::identity(d).add(&lm.scale(eta))?;
            Ok(step.sub(&sw_shift_matrix(d, eta)?.matrix)?.frobenius_norm())
        })
        .collect::<Result<_>>()?;
    let rows = shift_approx_sweep(d, z, ns)?;
    let steps: Vec<f64> = rows.iter().map(|r| r.eta.abs()).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.frobenius_error).collect();
    Ok((log_log_slope(etas, &single), log_log_slope(&steps, &errs)))
}
