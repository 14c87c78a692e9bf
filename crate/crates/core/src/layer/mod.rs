//! The L-conv layer.
//!
//! A batch of `B` feature maps over `d` grid points with `m` channels is a
//! `d × (B·m)` matrix whose row `μ` holds `[f_μ(sample 0) | f_μ(sample 1) | …]`.
//! Spatial operators act by left multiplication on the whole batch at once.
//! Because storage is row-major, reshaping to `(d·B) × m` puts one channel
//! vector per row, so channel mixing is a single right multiplication.
//!
//! The layer computes
//!
//! ```text
//! Q[f] = f·W0ᵀ + Σ_i (L̂_i f)·ε̄_iᵀ·W0ᵀ
//! ```
//!
//! with `W0` of shape `m_out × m_in` and `ε̄_i` of shape `m_in × m_in` (or a
//! scalar multiple of the identity in scalar mode). An optional channel-wise
//! `tanh(a ⊙ Q + b)` head can follow.

mod checkpoint;
mod checks;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_layer, save_layer, LayerManifest};
pub use checks::{equivariance_residual, gcn_reduction_check, near_identity_equivariance_sweep};

use crate::error::{Error, Result};
use crate::groups::{Generator, GeneratorRepr, GridSpec};
use crate::numerics::{Matrix, SeededRng};

/// Dense form of a generator.
pub fn materialize(g: &Generator) -> Result<Matrix> {
    g.materialize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub w0: bool,
    pub eps: bool,
    pub generators: bool,
    pub head: bool,
}

impl Default for Trainable {
    fn default() -> Self {
        Trainable {
            w0: true,
            eps: true,
            generators: true,
            head: true,
        }
    }
}

/// Channel-wise `tanh(scale ⊙ q + bias)`, both `1 × m_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelHead {
    pub scale: Matrix,
    pub bias: Matrix,
}

impl ChannelHead {
    pub fn identity_init(m: usize) -> Self {
        ChannelHead {
            scale: Matrix::filled(1, m, 1.0),
            bias: Matrix::zeros(1, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LConvLayer {
    pub w0: Matrix,
    /// `m_in × m_in` each, or `1 × 1` in scalar mode.
    pub eps: Vec<Matrix>,
    pub generators: Vec<Generator>,
    pub scalar_eps: bool,
    /// When false the `f·W0ᵀ` path is dropped (graph-convolution form).
    pub residual: bool,
    pub head: Option<ChannelHead>,
    pub trainable: Trainable,
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInit {
    pub d: usize,
    pub m_in: usize,
    pub m_out: usize,
    pub n_generators: usize,
    /// Low-rank generators `U·V` of this rank when set.
    pub rank: Option<usize>,
    pub scalar_eps: bool,
}

/// A batch of feature maps with the grid they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub grid: GridSpec,
    pub values: Matrix,
}

impl FeatureMap {
    pub fn new(grid: GridSpec, values: Matrix) -> Result<Self> {
        grid.validate()?;
        if values.rows() != grid.d {
            return Err(Error::dim("feature map spatial axis (d)", grid.d, values.rows()));
        }
        Ok(FeatureMap { grid, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorGrad {
    Dense(Matrix),
    LowRank { du: Matrix, dv: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub dw0: Matrix,
    pub d_eps: Vec<Matrix>,
    pub d_generators: Vec<GeneratorGrad>,
    pub d_head: Option<(Matrix, Matrix)>,
    pub d_input: Matrix,
}

impl LayerGradients {
    /// Gradients in the order of [`LConvLayer::params`].
    pub fn as_list(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.dw0];
        out.extend(self.d_eps.iter());
        for g in &self.d_generators {
            match g {
                GeneratorGrad::Dense(m) => out.push(m),
                GeneratorGrad::LowRank { du, dv } => {
                    out.push(du);
                    out.push(dv);
                }
            }
        }
        if let Some((ds, db)) = &self.d_head {
            out.push(ds);
            out.push(db);
        }
        out
    }

    /// Accumulates `other` into `self` (used across recursive applications).
    pub fn accumulate(&mut self, other: &LayerGradients) -> Result<()> {
        let mine = self.as_list_mut();
        let theirs = other.as_list();
        if mine.len() != theirs.len() {
            return Err(Error::dim("gradient list length", mine.len(), theirs.len()));
        }
        for (a, b) in mine.into_iter().zip(theirs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    fn as_list_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.dw0];
        out.extend(self.d_eps.iter_mut());
        for g in &mut self.d_generators {
            match g {
                GeneratorGrad::Dense(m) => out.push(m),
                GeneratorGrad::LowRank { du, dv } => {
                    out.push(du);
                    out.push(dv);
                }
            }
        }
        if let Some((ds, db)) = &mut self.d_head {
            out.push(ds);
            out.push(db);
        }
        out
    }
}

/// Intermediate values of a forward pass needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub lf: Vec<Matrix>,
    pub s: Matrix,
    pub q: Matrix,
    pub output: Matrix,
}

/// Applies `right` (m × k) to every channel vector of a `d × (B·m)` batch.
pub(crate) fn mix_channels(x: &Matrix, m: usize, right: &Matrix) -> Result<Matrix> {
    if right.rows() != m {
        return Err(Error::dim("channel mixing input channels", m, right.rows()));
    }
    if m == 0 || x.cols() % m != 0 {
        return Err(Error::dim("batch columns (multiple of channels)", m, x.cols()));
    }
    let d = x.rows();
    let b = x.cols() / m;
    let flat = x.clone().reshape(d * b, m)?;
    flat.matmul(right)?.reshape(d, b * right.cols())
}

fn as_channel_rows(x: &Matrix, m: usize) -> Result<Matrix> {
    let d = x.rows();
    x.clone().reshape(d * x.cols() / m, m)
}

impl LConvLayer {
    pub fn new(w0: Matrix, eps: Vec<Matrix>, generators: Vec<Generator>) -> Result<Self> {
        let layer = LConvLayer {
            w0,
            eps,
            generators,
            scalar_eps: false,
            residual: true,
            head: None,
            trainable: Trainable::default(),
            init_seed: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Scalar mode: `ε̄_i = e_i · I`.
    pub fn with_scalar_eps(w0: Matrix, eps: &[f64], generators: Vec<Generator>) -> Result<Self> {
        let layer = LConvLayer {
            w0,
            eps: eps.iter().map(|&e| Matrix::filled(1, 1, e)).collect(),
            generators,
            scalar_eps: true,
            residual: true,
            head: None,
            trainable: Trainable::default(),
            init_seed: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Random initialization: `W0 ~ U(±1/√m_in)`, `ε̄ ~ U(±0.1/n_L)`,
    /// generator entries (or `U`, `V` factors) `~ U(±1/√d)`.
    pub fn init(spec: LayerInit, seed: u64) -> Result<Self> {
        if spec.d == 0 || spec.m_in == 0 || spec.m_out == 0 {
            return Err(Error::Config(format!("layer sizes must be positive: {spec:?}")));
        }
        let mut rng = SeededRng::new(seed);
        let w_scale = 1.0 / (spec.m_in as f64).sqrt();
        let w0 = rng.uniform_matrix(spec.m_out, spec.m_in, -w_scale, w_scale);
        let e_scale = 0.1 / spec.n_generators.max(1) as f64;
        let eps_shape = if spec.scalar_eps { (1, 1) } else { (spec.m_in, spec.m_in) };
        let eps = (0..spec.n_generators)
            .map(|_| rng.uniform_matrix(eps_shape.0, eps_shape.1, -e_scale, e_scale))
            .collect();
        let g_scale = 1.0 / (spec.d as f64).sqrt();
        let mut generators = Vec::with_capacity(spec.n_generators);
        for i in 0..spec.n_generators {
            let g = match spec.rank {
                None => Generator::dense(
                    rng.uniform_matrix(spec.d, spec.d, -g_scale, g_scale),
                    format!("learned-{i}"),
                )?,
                Some(r) => Generator::low_rank(
                    rng.uniform_matrix(spec.d, r, -g_scale, g_scale),
                    rng.uniform_matrix(r, spec.d, -g_scale, g_scale),
                    format!("learned-{i}"),
                )?,
            };
            generators.push(g);
        }
        let mut layer = LConvLayer {
            w0,
            eps,
            generators,
            scalar_eps: spec.scalar_eps,
            residual: true,
            head: None,
            trainable: Trainable::default(),
            init_seed: Some(seed),
        };
        layer.validate()?;
        layer.init_seed = Some(seed);
        Ok(layer)
    }

    pub fn with_head(mut self, head: ChannelHead) -> Result<Self> {
        self.head = Some(head);
        self.validate()?;
        Ok(self)
    }

    pub fn m_in(&self) -> usize {
        self.w0.cols()
    }

    pub fn m_out(&self) -> usize {
        self.w0.rows()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Grid size, or `None` for a layer without generators.
    pub fn d(&self) -> Option<usize> {
        self.generators.first().map(|g| g.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() != self.generators.len() {
            return Err(Error::dim("number of ε̄ matrices vs generators", self.generators.len(), self.eps.len()));
        }
        let m = self.m_in();
        let want = if self.scalar_eps { (1, 1) } else { (m, m) };
        for (i, e) in self.eps.iter().enumerate() {
            if e.shape() != want {
                return Err(Error::dim(
                    format!("ε̄_{i} shape"),
                    format!("{}x{}", want.0, want.1),
                    format!("{}x{}", e.rows(), e.cols()),
                ));
            }
        }
        if let Some(d) = self.d() {
            for (i, g) in self.generators.iter().enumerate() {
                if g.dim() != d {
                    return Err(Error::dim(format!("generator {i} grid size"), d, g.dim()));
                }
            }
        }
        if let Some(h) = &self.head {
            let k = self.m_out();
            if h.scale.shape() != (1, k) || h.bias.shape() != (1, k) {
                return Err(Error::dim("head parameters (1 x m_out)", k, h.scale.cols()));
            }
        }
        Ok(())
    }

    fn check_input(&self, f: &Matrix) -> Result<usize> {
        if let Some(d) = self.d() {
            if f.rows() != d {
                return Err(Error::dim("input spatial axis (d)", d, f.rows()));
            }
        }
        let m = self.m_in();
        if f.cols() == 0 || f.cols() % m != 0 {
            return Err(Error::dim("input channel axis (multiple of m_in)", m, f.cols()));
        }
        Ok(f.cols() / m)
    }

    pub fn forward(&self, f: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(f)?.output)
    }

    pub fn forward_cached(&self, f: &Matrix) -> Result<ForwardCache> {
        self.check_input(f)?;
        let m = self.m_in();
        let mut s = if self.residual {
            f.clone()
        } else {
            Matrix::zeros(f.rows(), f.cols())
        };
        let mut lf = Vec::with_capacity(self.generators.len());
        for (g, e) in self.generators.iter().zip(&self.eps) {
            let a = g.apply(f)?;
            if self.scalar_eps {
                s.axpy(e[(0, 0)], &a)?;
            } else {
                s.add_assign(&mix_channels(&a, m, &e.transpose())?)?;
            }
            lf.push(a);
        }
        let q = mix_channels(&s, m, &self.w0.transpose())?;
        let output = match &self.head {
            None => q.clone(),
            Some(h) => {
                let k = self.m_out();
                let mut out = q.clone();
                for row in 0..out.rows() {
                    for (j, v) in out.row_mut(row).iter_mut().enumerate() {
                        let c = j % k;
                        *v = (h.scale[(0, c)] * *v + h.bias[(0, c)]).tanh();
                    }
                }
                out
            }
        };
        Ok(ForwardCache {
            input: f.clone(),
            lf,
            s,
            q,
            output,
        })
    }

    /// Gradients of `⟨upstream, Q[f]⟩` with respect to every parameter and
    /// the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<LayerGradients> {
        if upstream.shape() != cache.output.shape() {
            return Err(Error::dim(
                "upstream gradient shape",
                format!("{}x{}", cache.output.rows(), cache.output.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let m = self.m_in();
        let k = self.m_out();
        let (dq, d_head) = match &self.head {
            None => (upstream.clone(), None),
            Some(h) => {
                let mut dq = Matrix::zeros(upstream.rows(), upstream.cols());
                let mut ds = Matrix::zeros(1, k);
                let mut db = Matrix::zeros(1, k);
                for row in 0..dq.rows() {
                    for j in 0..dq.cols() {
                        let c = j % k;
                        let y = cache.output[(row, j)];
                        let dz = upstream[(row, j)] * (1.0 - y * y);
                        ds[(0, c)] += dz * cache.q[(row, j)];
                        db[(0, c)] += dz;
                        dq.row_mut(row)[j] = dz * h.scale[(0, c)];
                    }
                }
                (dq, Some((ds, db)))
            }
        };
        let dq_rows = as_channel_rows(&dq, k)?;
        let s_rows = as_channel_rows(&cache.s, m)?;
        let dw0 = dq_rows.t_matmul(&s_rows)?;
        let ds_rows = dq_rows.matmul(&self.w0)?;
        let d = cache.input.rows();
        let ds = ds_rows.clone().reshape(d, cache.input.cols())?;

        let mut d_input = if self.residual {
            ds.clone()
        } else {
            Matrix::zeros(d, cache.input.cols())
        };
        let mut d_eps = Vec::with_capacity(self.eps.len());
        let mut d_generators = Vec::with_capacity(self.generators.len());
        for ((g, e), a) in self.generators.iter().zip(&self.eps).zip(&cache.lf) {
            let da = if self.scalar_eps {
                d_eps.push(Matrix::filled(1, 1, ds.frobenius_dot(a)?));
                ds.scale(e[(0, 0)])
            } else {
                let a_rows = as_channel_rows(a, m)?;
                d_eps.push(ds_rows.t_matmul(&a_rows)?);
                ds_rows.matmul(e)?.reshape(d, cache.input.cols())?
            };
            let grad = match &g.repr {
                GeneratorRepr::Dense(_) => GeneratorGrad::Dense(da.matmul_t(&cache.input)?),
                GeneratorRepr::LowRank { u, v } => {
                    let vf = v.matmul(&cache.input)?;
                    GeneratorGrad::LowRank {
                        du: da.matmul_t(&vf)?,
                        dv: u.t_matmul(&da)?.matmul_t(&cache.input)?,
                    }
                }
            };
            d_generators.push(grad);
            d_input.add_assign(&g.apply_transpose(&da)?)?;
        }
        Ok(LayerGradients {
            dw0,
            d_eps,
            d_generators,
            d_head,
            d_input,
        })
    }

    /// Every parameter matrix in a fixed order: `W0`, `ε̄_i`, generator
    /// matrices (`U_i`, `V_i` for low-rank), head scale and bias.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.w0];
        out.extend(self.eps.iter());
        for g in &self.generators {
            match &g.repr {
                GeneratorRepr::Dense(m) => out.push(m),
                GeneratorRepr::LowRank { u, v } => {
                    out.push(u);
                    out.push(v);
                }
            }
        }
        if let Some(h) = &self.head {
            out.push(&h.scale);
            out.push(&h.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w0];
        out.extend(self.eps.iter_mut());
        for g in &mut self.generators {
            match &mut g.repr {
                GeneratorRepr::Dense(m) => out.push(m),
                GeneratorRepr::LowRank { u, v } => {
                    out.push(u);
                    out.push(v);
                }
            }
        }
        if let Some(h) = &mut self.head {
            out.push(&mut h.scale);
            out.push(&mut h.bias);
        }
        out
    }

    /// Whether each entry of [`Self::params`] is trainable.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let t = self.trainable;
        let mut out = vec![t.w0];
        out.extend(self.eps.iter().map(|_| t.eps));
        for g in &self.generators {
            out.push(t.generators);
            if g.is_low_rank() {
                out.push(t.generators);
            }
        }
        if self.head.is_some() {
            out.extend([t.head, t.head]);
        }
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|m| m.as_slice().len()).sum();
        if values.len() != total {
            return Err(Error::dim("flat parameter vector", total, values.len()));
        }
        let mut offset = 0;
        for m in self.params_mut() {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Dense `ε̄_i` (expanding scalar mode to `e_i · I`).
    pub fn eps_matrix(&self, i: usize) -> Matrix {
        if self.scalar_eps {
            Matrix::identity(self.m_in()).scale(self.eps[i][(0, 0)])
        } else {
            self.eps[i].clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|m| m.is_finite())
    }
}

/// Single-sample forward on a [`FeatureMap`].
pub fn lconv_forward(f: &FeatureMap, layer: &LConvLayer) -> Result<FeatureMap> {
    Ok(FeatureMap {
        grid: f.grid,
        values: layer.forward(&f.values)?,
    })
}

pub fn lconv_backward(f: &FeatureMap, layer: &LConvLayer, upstream: &Matrix) -> Result<LayerGradients> {
    let cache = layer.forward_cached(&f.values)?;
    layer.backward(&cache, upstream)
}

fn check_shape_preserving(layer: &LConvLayer) -> Result<()> {
    if layer.m_in() != layer.m_out() {
        return Err(Error::dim(
            "recursive application needs m_in = m_out",
            layer.m_in(),
            layer.m_out(),
        ));
    }
    Ok(())
}

/// `h_t` with `h_0 = f` and `h_k = Q[h_{k−1}]`.
pub fn recursive_apply(f: &Matrix, layer: &LConvLayer, t: usize) -> Result<Matrix> {
    check_shape_preserving(layer)?;
    let mut h = f.clone();
    for _ in 0..t {
        h = layer.forward(&h)?;
    }
    Ok(h)
}

/// Caches of every application, first to last.
pub fn recursive_forward_cached(f: &Matrix, layer: &LConvLayer, t: usize) -> Result<Vec<ForwardCache>> {
    check_shape_preserving(layer)?;
    let mut caches: Vec<ForwardCache> = Vec::with_capacity(t);
    let mut h = f.clone();
    for _ in 0..t {
        let c = layer.forward_cached(&h)?;
        h = c.output.clone();
        caches.push(c);
    }
    Ok(caches)
}

/// Backpropagates `upstream` (gradient with respect to `h_t`) through all
/// applications, summing the shared parameter gradients.
pub fn recursive_backward(
    layer: &LConvLayer,
    caches: &[ForwardCache],
    upstream: &Matrix,
) -> Result<LayerGradients> {
    let mut grad: Option<LayerGradients> = None;
    let mut g = upstream.clone();
    for cache in caches.iter().rev() {
        let step = layer.backward(cache, &g)?;
        g = step.d_input.clone();
        match &mut grad {
            None => grad = Some(step),
            Some(acc) => acc.accumulate(&step)?,
        }
    }
    let mut grad = grad.ok_or_else(|| Error::Degenerate("recursive backward with t = 0".into()))?;
    grad.d_input = g;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::sw_shift_generator;
    use crate::numerics::{finite_difference_gradient, relative_error};
    use proptest::prelude::*;

    fn ring3() -> Generator {
        // (L f)_μ = f_{μ+1} − f_{μ−1}
        Generator::dense(
            Matrix::from_rows(&[
                vec![0.0, 1.0, -1.0],
                vec![-1.0, 0.0, 1.0],
                vec![1.0, -1.0, 0.0],
            ]),
            "ring3",
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_ring_example() {
        let layer = LConvLayer::new(
            Matrix::identity(1),
            vec![Matrix::filled(1, 1, 0.1)],
            vec![ring3()],
        )
        .unwrap();
        let f = Matrix::column_vector(&[1.0, 2.0, 3.0]);
        let q = layer.forward(&f).unwrap();
        let want = [0.9, 2.2, 2.9];
        for r in 0..3 {
            assert!((q[(r, 0)] - want[r]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_eps_is_channel_mix() {
        let mut layer = LConvLayer::init(
            LayerInit {
                d: 6,
                m_in: 2,
                m_out: 3,
                n_generators: 2,
                rank: None,
                scalar_eps: false,
            },
            1,
        )
        .unwrap();
        for e in &mut layer.eps {
            *e = Matrix::zeros(2, 2);
        }
        let f = SeededRng::new(2).normal_matrix(6, 2);
        let q = layer.forward(&f).unwrap();
        assert!(q.max_abs_diff(&f.matmul_t(&layer.w0).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn scalar_identity_layer_is_near_identity_transport() {
        let l = sw_shift_generator(8).unwrap();
        let eps = 0.05;
        let layer = LConvLayer::with_scalar_eps(Matrix::identity(1), &[eps], vec![l.clone()]).unwrap();
        let f = SeededRng::new(3).normal_matrix(8, 1);
        let want = f.add(&l.apply(&f).unwrap().scale(eps)).unwrap();
        assert!(layer.forward(&f).unwrap().max_abs_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn dimension_errors_name_the_axis() {
        let layer = LConvLayer::with_scalar_eps(Matrix::identity(2), &[0.1], vec![ring3()]).unwrap();
        let err = layer.forward(&Matrix::zeros(4, 2)).unwrap_err().to_string();
        assert!(err.contains("spatial"), "{err}");
        let err = layer.forward(&Matrix::zeros(3, 3)).unwrap_err().to_string();
        assert!(err.contains("channel"), "{err}");
        assert!(LConvLayer::new(Matrix::identity(2), vec![], vec![ring3()]).is_err());
    }

    #[test]
    fn batch_forward_matches_per_sample() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 5,
                m_in: 2,
                m_out: 3,
                n_generators: 2,
                rank: Some(2),
                scalar_eps: false,
            },
            4,
        )
        .unwrap();
        let mut rng = SeededRng::new(5);
        let a = rng.normal_matrix(5, 2);
        let b = rng.normal_matrix(5, 2);
        let batch = Matrix::from_fn(5, 4, |r, c| if c < 2 { a[(r, c)] } else { b[(r, c - 2)] });
        let qb = layer.forward(&batch).unwrap();
        let qa = layer.forward(&a).unwrap();
        let qbb = layer.forward(&b).unwrap();
        for r in 0..5 {
            for c in 0..3 {
                assert!((qb[(r, c)] - qa[(r, c)]).abs() < 1e-14);
                assert!((qb[(r, 3 + c)] - qbb[(r, c)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 4,
                m_in: 2,
                m_out: 2,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            0,
        )
        .unwrap();
        let f = SeededRng::new(1).normal_matrix(4, 2);
        let cache = layer.forward_cached(&f).unwrap();
        let g = layer.backward(&cache, &Matrix::zeros(4, 2)).unwrap();
        assert!(g.as_list().iter().all(|m| m.max_abs() == 0.0));
        assert_eq!(g.d_input.max_abs(), 0.0);
    }

    fn fd_check(layer: &LConvLayer, f: &Matrix, seed: u64) -> f64 {
        let cache = layer.forward_cached(f).unwrap();
        let up = SeededRng::new(seed).normal_matrix(cache.output.rows(), cache.output.cols());
        let grads = layer.backward(&cache, &up).unwrap();
        let analytic: Vec<f64> = grads
            .as_list()
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .chain(grads.d_input.as_slice().iter().copied())
            .collect();
        let np = layer.flat_params().len();
        let mut p0 = layer.flat_params();
        p0.extend_from_slice(f.as_slice());
        let mut work = layer.clone();
        let numeric = finite_difference_gradient(
            |p| {
                work.set_flat_params(&p[..np]).unwrap();
                let x = Matrix::from_vec(f.rows(), f.cols(), p[np..].to_vec()).unwrap();
                work.forward(&x).unwrap().frobenius_dot(&up).unwrap()
            },
            &p0,
            1e-6,
        )
        .unwrap();
        relative_error(&analytic, &numeric, 1e-12)
    }

    #[test]
    fn single_channel_w0_gradient() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 4,
                m_in: 1,
                m_out: 1,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            7,
        )
        .unwrap();
        let f = SeededRng::new(8).normal_matrix(4, 1);
        let cache = layer.forward_cached(&f).unwrap();
        let up = Matrix::filled(4, 1, 1.0);
        let g = layer.backward(&cache, &up).unwrap();
        let mut work = layer.clone();
        let h = 1e-6;
        let w = layer.w0[(0, 0)];
        work.w0[(0, 0)] = w + h;
        let plus = work.forward(&f).unwrap().sum();
        work.w0[(0, 0)] = w - h;
        let minus = work.forward(&f).unwrap().sum();
        let fd = (plus - minus) / (2.0 * h);
        assert!((g.dw0[(0, 0)] - fd).abs() / fd.abs().max(1e-12) <= 1e-6);
    }

    #[test]
    fn dense_generator_gradient_5x5() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 5,
                m_in: 2,
                m_out: 2,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            9,
        )
        .unwrap();
        let f = SeededRng::new(10).normal_matrix(5, 2);
        assert!(fd_check(&layer, &f, 11) <= 1e-5);
    }

    #[test]
    fn head_and_scalar_and_no_residual_gradients() {
        let mut layer = LConvLayer::init(
            LayerInit {
                d: 6,
                m_in: 3,
                m_out: 2,
                n_generators: 2,
                rank: Some(2),
                scalar_eps: true,
            },
            12,
        )
        .unwrap()
        .with_head(ChannelHead {
            scale: Matrix::from_rows(&[vec![0.7, -1.3]]),
            bias: Matrix::from_rows(&[vec![0.1, 0.2]]),
        })
        .unwrap();
        let f = SeededRng::new(13).normal_matrix(6, 6);
        assert!(fd_check(&layer, &f, 14) <= 1e-5);
        layer.residual = false;
        assert!(fd_check(&layer, &f, 15) <= 1e-5);
    }

    #[test]
    fn recursive_zero_and_one() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 4,
                m_in: 2,
                m_out: 2,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            3,
        )
        .unwrap();
        let f = SeededRng::new(4).normal_matrix(4, 2);
        assert_eq!(recursive_apply(&f, &layer, 0).unwrap(), f);
        assert_eq!(recursive_apply(&f, &layer, 1).unwrap(), layer.forward(&f).unwrap());
        let wide = LConvLayer::init(
            LayerInit {
                d: 4,
                m_in: 2,
                m_out: 3,
                n_generators: 1,
                rank: None,
                scalar_eps: false,
            },
            3,
        )
        .unwrap();
        assert!(recursive_apply(&f, &wide, 2).is_err());
    }

    #[test]
    fn recursive_matches_matrix_power() {
        let l = sw_shift_generator(8).unwrap();
        let eps = 0.2;
        let layer = LConvLayer::with_scalar_eps(Matrix::identity(1), &[eps], vec![l.clone()]).unwrap();
        let f = SeededRng::new(6).normal_matrix(8, 1);
        let step = Matrix::identity(8).add(&l.materialize().unwrap().scale(eps)).unwrap();
        let mut want = f.clone();
        for _ in 0..5 {
            want = step.matmul(&want).unwrap();
        }
        let got = recursive_apply(&f, &layer, 5).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn recursive_backward_matches_fd() {
        let layer = LConvLayer::init(
            LayerInit {
                d: 5,
                m_in: 2,
                m_out: 2,
                n_generators: 2,
                rank: None,
                scalar_eps: false,
            },
            21,
        )
        .unwrap();
        let f = SeededRng::new(22).normal_matrix(5, 4);
        let up = SeededRng::new(23).normal_matrix(5, 4);
        let caches = recursive_forward_cached(&f, &layer, 3).unwrap();
        let g = recursive_backward(&layer, &caches, &up).unwrap();
        let analytic: Vec<f64> = g.as_list().iter().flat_map(|m| m.as_slice().iter().copied()).collect();
        let mut work = layer.clone();
        let numeric = finite_difference_gradient(
            |p| {
                work.set_flat_params(p).unwrap();
                recursive_apply(&f, &work, 3).unwrap().frobenius_dot(&up).unwrap()
            },
            &layer.flat_params(),
            1e-6,
        )
        .unwrap();
        assert!(relative_error(&analytic, &numeric, 1e-12) <= 1e-5);
    }

    #[test]
    fn trainable_mask_lines_up_with_params() {
        let mut layer = LConvLayer::init(
            LayerInit {
                d: 4,
                m_in: 2,
                m_out: 2,
                n_generators: 2,
                rank: Some(1),
                scalar_eps: false,
            },
            0,
        )
        .unwrap()
        .with_head(ChannelHead::identity_init(2))
        .unwrap();
        layer.trainable.w0 = false;
        let mask = layer.trainable_mask();
        assert_eq!(mask.len(), layer.params().len());
        assert_eq!(mask, vec![false, true, true, true, true, true, true, true, true]);
    }

    #[test]
    fn materialize_one_hot_low_rank() {
        let u = Matrix::from_fn(4, 1, |r, _| if r == 0 { 1.0 } else { 0.0 });
        let v = Matrix::from_fn(1, 4, |_, c| if c == 1 { 1.0 } else { 0.0 });
        let m = materialize(&Generator::low_rank(u, v, "e12").unwrap()).unwrap();
        let mut want = Matrix::zeros(4, 4);
        want[(0, 1)] = 1.0;
        assert_eq!(m, want);
        let dense = Generator::dense(want.clone(), "d").unwrap();
        assert_eq!(materialize(&dense).unwrap(), want);
    }

    proptest! {
        #[test]
        fn forward_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let layer = LConvLayer::init(
                LayerInit { d: 6, m_in: 2, m_out: 3, n_generators: 2, rank: None, scalar_eps: false },
                seed,
            ).unwrap();
            let mut rng = SeededRng::new(seed ^ 0x55);
            let f = rng.normal_matrix(6, 2);
            let g = rng.normal_matrix(6, 2);
            let mut combo = f.scale(alpha);
            combo.axpy(beta, &g).unwrap();
            let lhs = layer.forward(&combo).unwrap();
            let mut rhs = layer.forward(&f).unwrap().scale(alpha);
            rhs.axpy(beta, &layer.forward(&g).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
        }

        #[test]
        fn backward_matches_fd_on_random_instances(seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let d = 2 + rng.below(7) as usize;
            let m_in = 1 + rng.below(3) as usize;
            let m_out = 1 + rng.below(3) as usize;
            let rank = if rng.unit() < 0.5 { None } else { Some(1 + rng.below(2) as usize) };
            let layer = LConvLayer::init(
                LayerInit { d, m_in, m_out, n_generators: 1 + rng.below(2) as usize, rank, scalar_eps: rng.unit() < 0.3 },
                seed,
            ).unwrap();
            let batch = 1 + rng.below(2) as usize;
            let f = rng.normal_matrix(d, m_in * batch);
            prop_assert!(fd_check(&layer, &f, seed.wrapping_add(1)) <= 1e-5);
        }
    }
}
