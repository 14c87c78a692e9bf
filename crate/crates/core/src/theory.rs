//! The MSE loss of a layer as a field theory: mass, kinetic and divergence
//! terms, the Euler-Lagrange residual, the Noether current, and the
//! invariance checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groups::{sw_axis_derivatives, sw_shift_generator, AnalyticGenerator, AnalyticKind, GridKind, GridSpec, GroupElement};
use crate::layer::LConvLayer;
use crate::numerics::{log_log_slope, Matrix, SeededRng};

/// Features and labels `φ = [f | y]` on a periodic grid, `d × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub phi: Matrix,
}

impl FieldSample {
    pub fn new(grid: GridSpec, phi: Matrix) -> Result<Self> {
        grid.validate()?;
        if !grid.periodic {
            return Err(Error::Config("loss decomposition needs a periodic grid".into()));
        }
        if phi.rows() != grid.d {
            return Err(Error::dim("field rows vs grid size", grid.d, phi.rows()));
        }
        Ok(FieldSample { grid, phi })
    }

    /// Shift-interpolation derivative generators of the grid's translation
    /// group: one for a line, `(Dx, Dy)` for a square.
    pub fn translation_generators(&self) -> Result<Vec<Matrix>> {
        match self.grid.kind {
            GridKind::Line => Ok(vec![sw_shift_generator(self.grid.width)?.materialize()?]),
            GridKind::Image => {
                let (dx, dy) = sw_axis_derivatives(self.grid.width, self.grid.height)?;
                Ok(vec![dx, dy])
            }
        }
    }
}

/// `m₂ = W0ᵀW0` and `v_i = m₂ ε̄_i`; the kinetic coupling between
/// generators `i, j` is `ε̄_iᵀ m₂ ε̄_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTheoryTerms {
    pub m2: Matrix,
    pub eps: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl FieldTheoryTerms {
    pub fn coupling(&self, i: usize, j: usize) -> Result<Matrix> {
        self.eps[i].t_matmul(&self.m2.matmul(&self.eps[j])?)
    }

    /// `h^{αβ} = Σ_ij ε̄_iᵀ m₂ ε̄_j [L̂_i]^α [L̂_j]^β` as an `(m·n) × (m·n)`
    /// matrix with channel-major blocks, given the field components
    /// `fields[i] = L̂_i(x)` in `n` spatial dimensions.
    pub fn h(&self, fields: &[Vec<f64>]) -> Result<Matrix> {
        if fields.len() != self.eps.len() {
            return Err(Error::dim("vector fields per generator", self.eps.len(), fields.len()));
        }
        let n = fields.first().map_or(0, Vec::len);
        let m = self.m2.rows();
        let mut h = Matrix::zeros(m * n, m * n);
        for (i, fi) in fields.iter().enumerate() {
            for (j, fj) in fields.iter().enumerate() {
                let outer = Matrix::from_fn(n, n, |a, b| fi[a] * fj[b]);
                h.add_assign(&self.coupling(i, j)?.kron(&outer))?;
            }
        }
        Ok(h)
    }

    /// Channel part of `h` for constant fields `c_i`: `Σ_ij c_i c_j ε̄_iᵀ m₂ ε̄_j`.
    fn h_constant(&self, c: &[f64]) -> Result<Matrix> {
        let m = self.m2.rows();
        let mut h = Matrix::zeros(m, m);
        for (i, ci) in c.iter().enumerate() {
            for (j, cj) in c.iter().enumerate() {
                h.axpy(ci * cj, &self.coupling(i, j)?)?;
            }
        }
        Ok(h)
    }
}

pub fn field_terms(layer: &LConvLayer) -> FieldTheoryTerms {
    let m2 = layer.w0.t_matmul(&layer.w0).expect("W0ᵀW0 is always defined");
    let eps: Vec<Matrix> = (0..layer.n_generators()).map(|i| layer.eps_matrix(i)).collect();
    let v = eps.iter().map(|e| m2.matmul(e).expect("m2 and ε̄ share the channel count")).collect();
    FieldTheoryTerms { m2, eps, v }
}

/// `Σ_x ‖Q[φ]_x‖²`: the grid sum stands in for the Haar integral, which is
/// exact for translations on a periodic grid.
pub fn mse_loss_direct(sample: &FieldSample, layer: &LConvLayer) -> Result<f64> {
    Ok(layer.forward(&sample.phi)?.sum_of_squares())
}

/// The three terms of the expanded loss, plus the part of the cross term
/// that is not a total derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecomposedLoss {
    /// `Σ_x φᵀ m₂ φ`
    pub mass: f64,
    /// `Σ_x Σ_ij (L̂_iφ)ᵀ ε̄_iᵀ m₂ ε̄_j (L̂_jφ)`
    pub kinetic: f64,
    /// `Σ_x Σ_i L̂_i(φᵀ v_i φ)`, a telescoping sum on periodic grids.
    pub divergence: f64,
    /// `2 Σ_x Σ_i φᵀ (v_i − v_iᵀ)/2 (L̂_iφ)`, which the three-term form drops;
    /// zero whenever every `v_i` is symmetric.
    pub antisymmetric_coupling: f64,
}

impl DecomposedLoss {
    /// Mass, kinetic and divergence terms.
    pub fn total(&self) -> f64 {
        self.mass + self.kinetic + self.divergence
    }
}

/// Evaluates the expanded loss with the given generator matrices, which
/// must be the layer's generators for the comparison with
/// [`mse_loss_direct`] to be meaningful. The three-term form equals the
/// direct loss when the generators are skew-symmetric circulants and the
/// `v_i` are symmetric.
pub fn mse_loss_decomposed(sample: &FieldSample, terms: &FieldTheoryTerms, generators: &[Matrix]) -> Result<DecomposedLoss> {
    if generators.len() != terms.eps.len() {
        return Err(Error::dim("generators vs ε̄ count", terms.eps.len(), generators.len()));
    }
    let phi = &sample.phi;
    let m = terms.m2.rows();
    if phi.cols() != m {
        return Err(Error::dim("field channels", m, phi.cols()));
    }
    let mass = phi.matmul(&terms.m2)?.frobenius_dot(phi)?;
    let lphi = generators.iter().map(|g| g.matmul(phi)).collect::<Result<Vec<_>>>()?;
    let mut kinetic = 0.0;
    for (i, li) in lphi.iter().enumerate() {
        for (j, lj) in lphi.iter().enumerate() {
            // rows are φ_xᵀ, so Σ_x (L_iφ)_x C (L_jφ)_xᵀ = ⟨L_iφ C, L_jφ⟩
            kinetic += li.matmul(&terms.coupling(i, j)?)?.frobenius_dot(lj)?;
        }
    }
    let mut divergence = 0.0;
    let mut antisymmetric_coupling = 0.0;
    for ((g, v), li) in generators.iter().zip(&terms.v).zip(&lphi) {
        let density = Matrix::from_vec(phi.rows(), 1, (0..phi.rows()).map(|x| quad(phi.row(x), v)).collect())?;
        divergence += g.matmul(&density)?.sum();
        let anti = v.sub(&v.transpose())?.scale(0.5);
        antisymmetric_coupling += 2.0 * phi.matmul(&anti)?.frobenius_dot(li)?;
    }
    Ok(DecomposedLoss {
        mass,
        kinetic,
        divergence,
        antisymmetric_coupling,
    })
}

fn quad(x: &[f64], a: &Matrix) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += x[i] * a[(i, j)] * x[j];
        }
    }
    s
}

/// Samples of a field on a uniform line grid, `n × m`, at positions
/// `x_k = x0 + k·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineField {
    pub x0: f64,
    pub spacing: f64,
    pub values: Matrix,
}

impl LineField {
    pub fn from_fn(x0: f64, spacing: f64, n: usize, m: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        LineField {
            x0,
            spacing,
            values: Matrix::from_fn(n, m, |k, a| f(x0 + k as f64 * spacing, a)),
        }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    /// Cell-centred samples of `f` on `[a, b]` with `n` cells.
    pub fn cell_centred(a: f64, b: f64, n: usize, m: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let h = (b - a) / n as f64;
        Self::from_fn(a + 0.5 * h, h, n, m, f)
    }
}

/// Constant field components `[L̂_i]^x` of a one-dimensional translation
/// group; any other group is rejected.
fn translation_components(group: &AnalyticGenerator, n_eps: usize) -> Result<Vec<f64>> {
    match group.kind {
        AnalyticKind::Translations(1) => {}
        AnalyticKind::Translations(n) => {
            return Err(Error::UnsupportedSize(format!(
                "field diagnostics run on a line; got translations of R^{n}"
            )))
        }
        other => {
            return Err(Error::UnsupportedGroup(format!(
                "Euler-Lagrange and Noether diagnostics need the translation group, got {other:?}"
            )))
        }
    }
    if n_eps != group.basis.len() {
        return Err(Error::dim("ε̄ count vs group generators", group.basis.len(), n_eps));
    }
    (0..n_eps).map(|i| Ok(group.field(i, &[0.0])?[0])).collect()
}

fn check_line(field: &LineField, m: usize) -> Result<()> {
    if field.values.cols() != m {
        return Err(Error::dim("field channels", m, field.values.cols()));
    }
    if field.len() < 3 {
        return Err(Error::Degenerate("field diagnostics need at least 3 samples".into()));
    }
    if !(field.spacing > 0.0) {
        return Err(Error::Config(format!("grid spacing must be > 0, got {}", field.spacing)));
    }
    Ok(())
}

/// Pointwise Euler-Lagrange residual `m₂φ − h φ″ + Σ_i c_i (v_i − v_iᵀ) φ′`
/// on interior points (rows `1..n−1`), using second-order central
/// differences. `h` is the symmetric part of the kinetic coupling.
pub fn el_residual(field: &LineField, terms: &FieldTheoryTerms, group: &AnalyticGenerator) -> Result<Matrix> {
    let m = terms.m2.rows();
    check_line(field, m)?;
    let c = translation_components(group, terms.eps.len())?;
    let h = terms.h_constant(&c)?.symmetric_part();
    let mut drift = Matrix::zeros(m, m);
    for (ci, v) in c.iter().zip(&terms.v) {
        drift.axpy(*ci, &v.sub(&v.transpose())?)?;
    }
    let (dx, n) = (field.spacing, field.len());
    let f = &field.values;
    let mut out = Matrix::zeros(n - 2, m);
    for k in 1..n - 1 {
        let phi = f.row(k);
        let d1: Vec<f64> = (0..m).map(|a| (f[(k + 1, a)] - f[(k - 1, a)]) / (2.0 * dx)).collect();
        let d2: Vec<f64> = (0..m).map(|a| (f[(k + 1, a)] - 2.0 * f[(k, a)] + f[(k - 1, a)]) / (dx * dx)).collect();
        for a in 0..m {
            let mut r = 0.0;
            for b in 0..m {
                r += terms.m2[(a, b)] * phi[b] - h[(a, b)] * d2[b] + drift[(a, b)] * d1[b];
            }
            out[(k - 1, a)] = r;
        }
    }
    Ok(out)
}

/// Noether current for translations, `J = φ′ᵀ h φ′ − φᵀ m₂ φ`, on interior
/// points. The symmetric `v` terms are total derivatives and the
/// antisymmetric ones cancel between the two parts of the current.
pub fn noether_current(field: &LineField, terms: &FieldTheoryTerms, group: &AnalyticGenerator) -> Result<Vec<f64>> {
    let m = terms.m2.rows();
    check_line(field, m)?;
    let c = translation_components(group, terms.eps.len())?;
    let h = terms.h_constant(&c)?.symmetric_part();
    let (dx, n) = (field.spacing, field.len());
    let f = &field.values;
    Ok((1..n - 1)
        .map(|k| {
            let d1: Vec<f64> = (0..m).map(|a| (f[(k + 1, a)] - f[(k - 1, a)]) / (2.0 * dx)).collect();
            quad(&d1, &h) - quad(f.row(k), &terms.m2)
        })
        .collect())
}

/// `max |∂_x J|` by central differences of the current. `direction`
/// selects the translation generator and must be 0 on a line.
pub fn noether_divergence(field: &LineField, terms: &FieldTheoryTerms, group: &AnalyticGenerator, direction: usize) -> Result<f64> {
    if direction >= group.basis.len() {
        return Err(Error::dim("Noether direction", format!("< {}", group.basis.len()), direction));
    }
    let j = noether_current(field, terms, group)?;
    if j.len() < 3 {
        return Err(Error::Degenerate("Noether divergence needs at least 5 samples".into()));
    }
    let dx = field.spacing;
    Ok((1..j.len() - 1).map(|k| ((j[k + 1] - j[k - 1]) / (2.0 * dx)).abs()).fold(0.0, f64::max))
}

/// One row of the grid-refinement table for the one-channel Helmholtz
/// solution `φ = cosh(x/|ε|)` on `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HelmholtzRow {
    pub grid_size: usize,
    pub el_residual: f64,
    pub noether_divergence: f64,
}

/// A single-channel layer with `W0 = mass` and scalar `ε̄ = eps` whose EL
/// equation is `ε² mass² φ″ = mass² φ`.
pub fn helmholtz_layer(mass: f64, eps: f64, d: usize) -> Result<LConvLayer> {
    LConvLayer::with_scalar_eps(Matrix::filled(1, 1, mass), &[eps], vec![sw_shift_generator(d)?])
}

/// EL residual and Noether divergence (max abs over interior points) of
/// `cosh(x/|ε|)` on cell-centred grids of the given sizes.
pub fn helmholtz_table(mass: f64, eps: f64, sizes: &[usize]) -> Result<Vec<HelmholtzRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("helmholtz table needs at least one grid size".into()));
    }
    let group = crate::groups::analytic_generator(AnalyticKind::Translations(1));
    let terms = field_terms(&helmholtz_layer(mass, eps, 4)?);
    sizes
        .iter()
        .map(|&n| {
            let field = LineField::cell_centred(-1.0, 1.0, n, 1, |x, _| (x / eps.abs()).cosh());
            Ok(HelmholtzRow {
                grid_size: n,
                el_residual: el_residual(&field, &terms, &group)?.max_abs(),
                noether_divergence: noether_divergence(&field, &terms, &group, 0)?,
            })
        })
        .collect()
}

/// Log-log convergence orders `(el, noether)` of a refinement table
/// against grid spacing.
pub fn convergence_orders(rows: &[HelmholtzRow]) -> (f64, f64) {
    let h: Vec<f64> = rows.iter().map(|r| 2.0 / r.grid_size as f64).collect();
    let el: Vec<f64> = rows.iter().map(|r| r.el_residual).collect();
    let no: Vec<f64> = rows.iter().map(|r| r.noether_divergence).collect();
    (log_log_slope(&h, &el), log_log_slope(&h, &no))
}

/// `‖R(−ξ) h(R(θ)x₀) R(−ξ)ᵀ − h(R(θ−ξ)x₀)‖` with `h` built from the layer's
/// `W0`, `ε̄` and the so(2) vector field, and `R` acting on the spatial
/// indices of `h`.
pub fn metric_equivariance_check(layer: &LConvLayer, x0: [f64; 2], xi: f64, theta: f64) -> Result<f64> {
    let so2 = crate::groups::analytic_generator(AnalyticKind::So2);
    let terms = field_terms(layer);
    if terms.eps.len() != 1 {
        return Err(Error::dim("so(2) layer generators", 1, terms.eps.len()));
    }
    let rot = |a: f64| Matrix::from_rows(&[vec![a.cos(), -a.sin()], vec![a.sin(), a.cos()]]);
    let point = |a: f64| {
        let p = rot(a).matmul(&Matrix::column_vector(&x0))?;
        Ok::<_, Error>(vec![p[(0, 0)], p[(1, 0)]])
    };
    let h_at = |a: f64| terms.h(&[so2.field(0, &point(a)?)?]);
    let big = Matrix::identity(terms.m2.rows()).kron(&rot(-xi));
    let lhs = big.matmul(&h_at(theta)?)?.matmul_t(&big)?;
    Ok(lhs.sub(&h_at(theta - xi)?)?.frobenius_norm())
}

/// `|I(w·φ) − I(φ)| / max(I(φ), 1e-300)` with `w·φ = w⁻ᵀφ`.
pub fn loss_invariance_check(sample: &FieldSample, layer: &LConvLayer, w: &GroupElement) -> Result<f64> {
    let before = mse_loss_direct(sample, layer)?;
    let moved = FieldSample::new(sample.grid, w.act(&sample.phi)?)?;
    let after = mse_loss_direct(&moved, layer)?;
    Ok((after - before).abs() / before.max(1e-300))
}

/// A random layer on a periodic ring whose `v = m₂ε̄` is symmetric, and a
/// random field on that ring.
pub fn symmetric_instance(rng: &mut SeededRng, d: usize, m: usize) -> Result<(LConvLayer, FieldSample)> {
    let w0 = rng.uniform_matrix(m + 1, m, -1.0, 1.0);
    let m2 = w0.t_matmul(&w0)?;
    let s = rng.uniform_matrix(m, m, -0.3, 0.3).symmetric_part();
    let eps = crate::numerics::linalg::inverse(&m2)?.matmul(&s)?;
    let layer = LConvLayer::new(w0, vec![eps], vec![sw_shift_generator(d)?])?;
    let sample = FieldSample::new(GridSpec::line(d, true), rng.normal_matrix(d, m))?;
    Ok((layer, sample))
}
