//! Problem data, discrete fields, the collision operator, and the quadratic
//! forms of the discretization: norms, the upwind DG bilinear form a_h, its
//! load functional, and a one-pass Galerkin residual assembly.
//!
//! Conventions used throughout: cells carry a modal Legendre basis P_m on the
//! reference interval [-1, 1]; volume integrals use a shared Gauss rule exact
//! to degree 2k+2, so the energy identity a_h(v,v) = |v|_Q^2 + boundary/jump
//! terms holds to roundoff for every discrete field, not just asymptotically.

use std::fmt;
use std::sync::Arc;

use crate::basis::{deriv_overlap, legendre_all, GaussRule};
use crate::mesh::Mesh1D;
use crate::AngularQuadrature;
use crate::{Error, Result};

/// A shareable scalar function of one variable (position or direction).
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn constant(c: f64) -> Self {
        Self(Arc::new(move |_| c))
    }

    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    /// The standard mollifier of unit total mass supported on |x| < radius:
    /// (c/radius) exp(1/((x/radius)^2 - 1)) with 1/c = ∫ exp(1/(t^2-1)) dt.
    pub fn bump(radius: f64) -> Self {
        // 1/c computed once by quadrature; the integrand is smooth and
        // vanishes with all derivatives at ±1.
        const NORM: f64 = 0.443_993_816_168_068_4;
        let scale = 1.0 / (NORM * radius);
        Self::new(move |x| {
            let t = x / radius;
            let s = t * t - 1.0;
            if s < 0.0 {
                scale * (1.0 / s).exp()
            } else {
                0.0
            }
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

/// Coefficients and data of the scaled transport problem
///
///   mu du/dx + (sigma_t/eps) u = (sigma_t/eps - eps sigma_a) ubar + eps f
///
/// with incoming intensity alpha_l(mu) at the left edge (mu > 0) and
/// alpha_r(mu) at the right edge (mu < 0).
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub sigma_t: ScalarFn,
    pub sigma_a: ScalarFn,
    pub epsilon: f64,
    pub source: ScalarFn,
    pub boundary_left: ScalarFn,
    pub boundary_right: ScalarFn,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0,1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Cross-sections at x, checked against the model assumptions:
    /// sigma_a > 0 and sigma_t - eps^2 sigma_a > 0.
    pub fn cross_sections_at(&self, x: f64) -> Result<(f64, f64)> {
        let st = self.sigma_t.eval(x);
        let sa = self.sigma_a.eval(x);
        if !st.is_finite() || !sa.is_finite() || sa <= 0.0 {
            return Err(Error::Domain(format!(
                "sigma_a(x) must be positive and finite; sigma_a({x}) = {sa}"
            )));
        }
        if st - self.epsilon * self.epsilon * sa < 0.0 {
            return Err(Error::Domain(format!(
                "sigma_t - eps^2 sigma_a must be nonnegative; at x = {x}: {st} - {:.3e}",
                self.epsilon * self.epsilon * sa
            )));
        }
        Ok((st, sa))
    }

    /// Scattering coefficient sigma_t/eps - eps*sigma_a at x.
    pub fn sigma_s_at(&self, x: f64) -> Result<f64> {
        let (st, sa) = self.cross_sections_at(x)?;
        Ok(st / self.epsilon - self.epsilon * sa)
    }
}

/// Per-ordinate, per-cell modal coefficients of a discrete intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    degree: usize,
    ncells: usize,
    n_angles: usize,
    coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(n_angles: usize, ncells: usize, degree: usize) -> Self {
        Self {
            degree,
            ncells,
            n_angles,
            coeffs: vec![0.0; n_angles * ncells * (degree + 1)],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn modes(&self) -> usize {
        self.degree + 1
    }

    #[inline]
    fn base(&self, l: usize, cell: usize) -> usize {
        (l * self.ncells + cell) * (self.degree + 1)
    }

    pub fn cell_coeffs(&self, l: usize, cell: usize) -> &[f64] {
        let b = self.base(l, cell);
        &self.coeffs[b..b + self.degree + 1]
    }

    pub fn cell_coeffs_mut(&mut self, l: usize, cell: usize) -> &mut [f64] {
        let b = self.base(l, cell);
        let k = self.degree;
        &mut self.coeffs[b..b + k + 1]
    }

    /// Evaluate ordinate l in cell `cell` at reference coordinate xi.
    pub fn eval_ref(&self, l: usize, cell: usize, xi: f64) -> f64 {
        let mut basis = [0.0; 8];
        let m = self.degree + 1;
        legendre_all(xi, &mut basis[..m]);
        self.cell_coeffs(l, cell)
            .iter()
            .zip(&basis[..m])
            .map(|(c, p)| c * p)
            .sum()
    }

    /// Trace at the left cell edge (xi = -1): sum of (-1)^m c_m.
    pub fn trace_left(&self, l: usize, cell: usize) -> f64 {
        self.cell_coeffs(l, cell)
            .iter()
            .enumerate()
            .map(|(m, c)| if m % 2 == 0 { *c } else { -*c })
            .sum()
    }

    /// Trace at the right cell edge (xi = +1): sum of c_m.
    pub fn trace_right(&self, l: usize, cell: usize) -> f64 {
        self.cell_coeffs(l, cell).iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Largest absolute coefficient; a cheap field magnitude proxy. Any
    /// non-finite coefficient poisons the result to infinity — f64::max would
    /// silently drop a NaN, and magnitude checks must not mask a blow-up.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| {
            if c.is_finite() {
                m.max(c.abs())
            } else {
                f64::INFINITY
            }
        })
    }
}

/// Per-cell modal coefficients of an isotropic (angle-independent) quantity:
/// scalar fluxes, scattering sources, flux corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    degree: usize,
    ncells: usize,
    coeffs: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(ncells: usize, degree: usize) -> Self {
        Self {
            degree,
            ncells,
            coeffs: vec![0.0; ncells * (degree + 1)],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn cell_coeffs(&self, cell: usize) -> &[f64] {
        let k = self.degree + 1;
        &self.coeffs[cell * k..(cell + 1) * k]
    }

    pub fn cell_coeffs_mut(&mut self, cell: usize) -> &mut [f64] {
        let k = self.degree + 1;
        &mut self.coeffs[cell * k..(cell + 1) * k]
    }

    pub fn eval_ref(&self, cell: usize, xi: f64) -> f64 {
        let mut basis = [0.0; 8];
        let m = self.degree + 1;
        legendre_all(xi, &mut basis[..m]);
        self.cell_coeffs(cell)
            .iter()
            .zip(&basis[..m])
            .map(|(c, p)| c * p)
            .sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// L2 norm over the mesh, exact for the modal representation.
    pub fn l2_norm(&self, mesh: &Mesh1D) -> f64 {
        let h = mesh.h();
        let mut acc = 0.0;
        for cell in 0..self.ncells {
            for (m, c) in self.cell_coeffs(cell).iter().enumerate() {
                acc += 0.5 * h * c * c * 2.0 / (2.0 * m as f64 + 1.0);
            }
        }
        acc.sqrt()
    }

    /// max_cells |difference|, measured coefficient-wise. A non-finite
    /// difference poisons the result to infinity rather than vanishing in the
    /// max fold; convergence tests rely on that.
    pub fn max_coeff_diff(&self, other: &ScalarField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |m, (a, b)| {
            let d = (a - b).abs();
            if d.is_finite() {
                m.max(d)
            } else {
                f64::INFINITY
            }
        })
    }
}

/// Apply the collision operator Q = (sigma_t/eps)(I - P) + eps*sigma_a*P to a
/// per-ordinate value vector at position x, P being the angular average.
pub fn apply_collision(
    spec: &ProblemSpec,
    quad: &AngularQuadrature,
    values: &[f64],
    x: f64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let (st, sa) = spec.cross_sections_at(x)?;
    let mean = quad.average(values)?;
    let eps = spec.epsilon;
    Ok(values
        .iter()
        .map(|v| st / eps * (v - mean) + eps * sa * mean)
        .collect())
}

/// Apply Q^{-1} = (1/(eps*sigma_a)) P + (eps/sigma_t)(I - P).
pub fn apply_collision_inverse(
    spec: &ProblemSpec,
    quad: &AngularQuadrature,
    values: &[f64],
    x: f64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let (st, sa) = spec.cross_sections_at(x)?;
    let mean = quad.average(values)?;
    let eps = spec.epsilon;
    Ok(values
        .iter()
        .map(|v| mean / (eps * sa) + eps / st * (v - mean))
        .collect())
}

/// Which part of the domain boundary a boundary norm covers, classified by
/// the direction of travel: inflow is mu > 0 at the left edge and mu < 0 at
/// the right edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPart {
    Inflow,
    Outflow,
    Both,
}

/// P_m(xi_q) for all rule nodes, flattened as [q * (degree+1) + m].
pub(crate) fn basis_table(degree: usize, rule: &GaussRule) -> Vec<f64> {
    let modes = degree + 1;
    let mut table = vec![0.0; rule.len() * modes];
    for (q, &xi) in rule.nodes.iter().enumerate() {
        legendre_all(xi, &mut table[q * modes..(q + 1) * modes]);
    }
    table
}

/// The one Gauss rule shared by assembly, load, residual certification, and
/// norms: one node above the minimum for the polynomial products, so the same
/// rule that is exact for the operator also gives the non-polynomial source
/// and variable cross-sections a margin against aliasing.
pub(crate) fn volume_rule(degree: usize) -> Result<GaussRule> {
    GaussRule::for_degree(2 * degree + 4)
}

fn check_field_quad(field: &DgField, quad: &AngularQuadrature) -> Result<()> {
    if field.n_angles() != quad.len() {
        return Err(Error::InvalidArgument(format!(
            "field has {} ordinates but quadrature has {}",
            field.n_angles(),
            quad.len()
        )));
    }
    Ok(())
}

fn check_field_mesh(field: &DgField, mesh: &Mesh1D) -> Result<()> {
    if field.ncells() != mesh.ncells() {
        return Err(Error::InvalidArgument(format!(
            "field has {} cells but mesh has {}",
            field.ncells(),
            mesh.ncells()
        )));
    }
    Ok(())
}

/// Angle-weighted L2 norm: sqrt( sum_l w_l ||v_l||^2 ).
pub fn l2_norm(field: &DgField, mesh: &Mesh1D, quad: &AngularQuadrature) -> Result<f64> {
    check_field_quad(field, quad)?;
    check_field_mesh(field, mesh)?;
    let rule = volume_rule(field.degree())?;
    let table = basis_table(field.degree(), &rule);
    let modes = field.modes();
    let h2 = 0.5 * mesh.h();
    let mut acc = 0.0;
    for (l, w) in quad.weights().iter().enumerate() {
        for cell in 0..field.ncells() {
            let coeffs = field.cell_coeffs(l, cell);
            for q in 0..rule.len() {
                let v: f64 = coeffs
                    .iter()
                    .zip(&table[q * modes..(q + 1) * modes])
                    .map(|(c, p)| c * p)
                    .sum();
                acc += w * rule.weights[q] * h2 * v * v;
            }
        }
    }
    Ok(acc.sqrt())
}

/// The eps-weighted energy norm:
/// |v|_Q^2 = (1/eps)||sigma_t^{1/2}(v - vbar)||^2 + eps||sigma_a^{1/2} vbar||^2.
pub fn q_norm(
    field: &DgField,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
) -> Result<f64> {
    Ok(q_norm_squared(field, mesh, quad, spec)?.sqrt())
}

pub(crate) fn q_norm_squared(
    field: &DgField,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
) -> Result<f64> {
    spec.validate()?;
    check_field_quad(field, quad)?;
    check_field_mesh(field, mesh)?;
    let rule = volume_rule(field.degree())?;
    let table = basis_table(field.degree(), &rule);
    let modes = field.modes();
    let eps = spec.epsilon;
    let h2 = 0.5 * mesh.h();
    let nl = quad.len();
    let mut values = vec![0.0; nl];
    let mut acc = 0.0;
    for cell in 0..field.ncells() {
        for q in 0..rule.len() {
            let x = mesh.cell_x(cell, rule.nodes[q]);
            let (st, sa) = spec.cross_sections_at(x)?;
            for (l, value) in values.iter_mut().enumerate() {
                *value = field
                    .cell_coeffs(l, cell)
                    .iter()
                    .zip(&table[q * modes..(q + 1) * modes])
                    .map(|(c, p)| c * p)
                    .sum();
            }
            let mean: f64 = quad.weights().iter().zip(&values).map(|(w, v)| w * v).sum();
            let mut aniso = 0.0;
            for (w, v) in quad.weights().iter().zip(&values) {
                aniso += w * (v - mean) * (v - mean);
            }
            acc += rule.weights[q] * h2 * (st / eps * aniso + eps * sa * mean * mean);
        }
    }
    Ok(acc)
}

/// |mu|-weighted boundary norm over the selected inflow/outflow part.
pub fn boundary_norm(
    field: &DgField,
    quad: &AngularQuadrature,
    part: BoundaryPart,
) -> Result<f64> {
    Ok(boundary_norm_squared(field, quad, part)?.sqrt())
}

pub(crate) fn boundary_norm_squared(
    field: &DgField,
    quad: &AngularQuadrature,
    part: BoundaryPart,
) -> Result<f64> {
    check_field_quad(field, quad)?;
    let last = field.ncells() - 1;
    let mut acc = 0.0;
    for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
        let (left_in, right_in) = (mu > 0.0, mu < 0.0);
        let take_left = match part {
            BoundaryPart::Inflow => left_in,
            BoundaryPart::Outflow => !left_in,
            BoundaryPart::Both => true,
        };
        let take_right = match part {
            BoundaryPart::Inflow => right_in,
            BoundaryPart::Outflow => !right_in,
            BoundaryPart::Both => true,
        };
        if take_left {
            let v = field.trace_left(l, 0);
            acc += w * mu.abs() * v * v;
        }
        if take_right {
            let v = field.trace_right(l, last);
            acc += w * mu.abs() * v * v;
        }
    }
    Ok(acc)
}

/// Jump seminorm over interior edges: sum_e sum_l w_l |mu_l| [v_l]^2, the
/// jump being left-trace minus right-trace.
pub fn jump_seminorm(field: &DgField, quad: &AngularQuadrature) -> Result<f64> {
    Ok(jump_seminorm_squared(field, quad)?.sqrt())
}

pub(crate) fn jump_seminorm_squared(field: &DgField, quad: &AngularQuadrature) -> Result<f64> {
    check_field_quad(field, quad)?;
    let mut acc = 0.0;
    for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
        for edge in 1..field.ncells() {
            let jump = field.trace_right(l, edge - 1) - field.trace_left(l, edge);
            acc += w * mu.abs() * jump * jump;
        }
    }
    Ok(acc)
}

/// The scheme's full energy norm: |||v|||^2 = eps * a_h(v, v), expanded via
/// the energy identity into Q-norm, boundary, and jump contributions.
pub fn triple_norm(
    field: &DgField,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
) -> Result<f64> {
    let q2 = q_norm_squared(field, mesh, quad, spec)?;
    let b2 = boundary_norm_squared(field, quad, BoundaryPart::Both)?;
    let j2 = jump_seminorm_squared(field, quad)?;
    Ok((spec.epsilon * (q2 + 0.5 * b2 + 0.5 * j2)).sqrt())
}

/// The upwind DG bilinear form a_h(u, v): interior upwind edge terms, the
/// advective volume term, the outflow boundary term, and the collision term.
pub fn bilinear_form(
    u: &DgField,
    v: &DgField,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
) -> Result<f64> {
    spec.validate()?;
    check_field_quad(u, quad)?;
    check_field_quad(v, quad)?;
    check_field_mesh(u, mesh)?;
    check_field_mesh(v, mesh)?;
    if u.degree() != v.degree() {
        return Err(Error::InvalidArgument(
            "bilinear form requires fields of equal degree".into(),
        ));
    }
    let degree = u.degree();
    let modes = degree + 1;
    let rule = volume_rule(degree)?;
    let table = basis_table(degree, &rule);
    let ncells = mesh.ncells();
    let last = ncells - 1;
    let h2 = 0.5 * mesh.h();
    let eps = spec.epsilon;
    let nl = quad.len();

    let mut acc = 0.0;

    // advective part, ordinate by ordinate
    for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
        let mut part = 0.0;
        // interior upwind edge terms: mu * uhat * [v]
        for edge in 1..ncells {
            let uhat = if mu > 0.0 {
                u.trace_right(l, edge - 1)
            } else {
                u.trace_left(l, edge)
            };
            let jump_v = v.trace_right(l, edge - 1) - v.trace_left(l, edge);
            part += mu * uhat * jump_v;
        }
        // volume: -integral of u * mu * v'
        for cell in 0..ncells {
            let cu = u.cell_coeffs(l, cell);
            let cv = v.cell_coeffs(l, cell);
            let mut vol = 0.0;
            for m in 0..modes {
                for n in 0..modes {
                    let d = deriv_overlap(m, n);
                    if d != 0.0 {
                        vol += cu[n] * cv[m] * d;
                    }
                }
            }
            part -= mu * vol;
        }
        // outflow boundary
        if mu > 0.0 {
            part += mu * u.trace_right(l, last) * v.trace_right(l, last);
        } else {
            part += -mu * u.trace_left(l, 0) * v.trace_left(l, 0);
        }
        acc += w * part;
    }

    // collision: integral of (Q u) . v under the angular weights
    let mut uvals = vec![0.0; nl];
    let mut vvals = vec![0.0; nl];
    for cell in 0..ncells {
        for q in 0..rule.len() {
            let x = mesh.cell_x(cell, rule.nodes[q]);
            let (st, sa) = spec.cross_sections_at(x)?;
            for l in 0..nl {
                uvals[l] = u
                    .cell_coeffs(l, cell)
                    .iter()
                    .zip(&table[q * modes..(q + 1) * modes])
                    .map(|(c, p)| c * p)
                    .sum();
                vvals[l] = v
                    .cell_coeffs(l, cell)
                    .iter()
                    .zip(&table[q * modes..(q + 1) * modes])
                    .map(|(c, p)| c * p)
                    .sum();
            }
            let umean: f64 = quad.weights().iter().zip(&uvals).map(|(w, a)| w * a).sum();
            let vmean: f64 = quad.weights().iter().zip(&vvals).map(|(w, a)| w * a).sum();
            let mut dev = 0.0;
            for (w, (uv, vv)) in quad.weights().iter().zip(uvals.iter().zip(&vvals)) {
                dev += w * (uv - umean) * vv;
            }
            acc += rule.weights[q] * h2 * (st / eps * dev + eps * sa * umean * vmean);
        }
    }
    Ok(acc)
}

/// The load functional l(v) = eps (f, v) + inflow boundary pairing with the
/// prescribed incoming intensity.
pub fn rhs_functional(
    v: &DgField,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
) -> Result<f64> {
    spec.validate()?;
    check_field_quad(v, quad)?;
    check_field_mesh(v, mesh)?;
    let degree = v.degree();
    let modes = degree + 1;
    let eps = spec.epsilon;
    let last = v.ncells() - 1;
    let rule = volume_rule(degree)?;
    let table = basis_table(degree, &rule);
    let h2 = 0.5 * mesh.h();

    let mut acc = 0.0;
    for cell in 0..v.ncells() {
        for (q, &xi) in rule.nodes.iter().enumerate() {
            let fw = h2 * rule.weights[q] * spec.source.eval(mesh.cell_x(cell, xi));
            if fw == 0.0 {
                continue;
            }
            for (l, w) in quad.weights().iter().enumerate() {
                let vq: f64 = v
                    .cell_coeffs(l, cell)
                    .iter()
                    .zip(&table[q * modes..(q + 1) * modes])
                    .map(|(c, p)| c * p)
                    .sum();
                acc += eps * fw * w * vq;
            }
        }
    }
    for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
        if mu > 0.0 {
            acc += w * mu * spec.boundary_left.eval(mu) * v.trace_left(l, 0);
        } else {
            acc += w * (-mu) * spec.boundary_right.eval(mu) * v.trace_right(l, last);
        }
    }
    Ok(acc)
}

/// Residual of the discrete variational problem for every basis field.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// l(phi) - a_h(u, phi), one entry per (ordinate, cell, mode).
    pub entries: Vec<f64>,
    /// Largest |entry|.
    pub max_abs: f64,
    /// Magnitude of the equations themselves: max |a_h(u, phi)| + max |l(phi)|.
    pub scale: f64,
}

impl ResidualReport {
    /// Residual relative to the problem scale.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

/// Assemble l(phi) - a_h(u, phi) for all basis fields phi in one pass over
/// cells; equivalent to calling `bilinear_form`/`rhs_functional` against every
/// unit field, at a cost linear in the number of unknowns.
pub fn galerkin_residual(
    u: &DgField,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
) -> Result<ResidualReport> {
    spec.validate()?;
    check_field_quad(u, quad)?;
    check_field_mesh(u, mesh)?;
    let degree = u.degree();
    let modes = degree + 1;
    let rule = volume_rule(degree)?;
    let nq = rule.len();
    let table = basis_table(degree, &rule);
    let ncells = mesh.ncells();
    let last = ncells - 1;
    let h2 = 0.5 * mesh.h();
    let eps = spec.epsilon;
    let nl = quad.len();

    // point values of u and the data per (l, q) in the current cell
    let mut st_q = vec![0.0; nq];
    let mut sa_q = vec![0.0; nq];
    let mut f_q = vec![0.0; nq];
    let mut uvals = vec![0.0; nl * nq];
    let mut umean = vec![0.0; nq];

    let mut entries = vec![0.0; nl * ncells * modes];
    let mut max_a = 0.0f64;
    let mut max_l = 0.0f64;

    for cell in 0..ncells {
        for q in 0..nq {
            let x = mesh.cell_x(cell, rule.nodes[q]);
            let (st, sa) = spec.cross_sections_at(x)?;
            st_q[q] = st;
            sa_q[q] = sa;
            f_q[q] = spec.source.eval(x);
        }
        for l in 0..nl {
            for q in 0..nq {
                uvals[l * nq + q] = u
                    .cell_coeffs(l, cell)
                    .iter()
                    .zip(&table[q * modes..(q + 1) * modes])
                    .map(|(c, p)| c * p)
                    .sum();
            }
        }
        for q in 0..nq {
            umean[q] = (0..nl)
                .map(|l| quad.weights()[l] * uvals[l * nq + q])
                .sum();
        }

        for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
            let cu = u.cell_coeffs(l, cell);
            for m in 0..modes {
                let sign_m = if m % 2 == 0 { 1.0 } else { -1.0 };
                let mut a_entry = 0.0;
                // collision against P_m
                let mut coll = 0.0;
                for q in 0..nq {
                    let qu = st_q[q] / eps * (uvals[l * nq + q] - umean[q])
                        + eps * sa_q[q] * umean[q];
                    coll += rule.weights[q] * qu * table[q * modes + m];
                }
                a_entry += h2 * coll;
                // advective volume term
                let mut vol = 0.0;
                for n in 0..modes {
                    let d = deriv_overlap(m, n);
                    if d != 0.0 {
                        vol += cu[n] * d;
                    }
                }
                a_entry -= mu * vol;
                // edge terms (upwind interior traces; outflow boundary)
                if mu > 0.0 {
                    if cell > 0 {
                        a_entry += mu * u.trace_right(l, cell - 1) * (-sign_m);
                    }
                    a_entry += mu * u.trace_right(l, cell);
                } else {
                    a_entry += -mu * u.trace_left(l, cell) * sign_m;
                    if cell < last {
                        a_entry += mu * u.trace_left(l, cell + 1);
                    }
                }
                a_entry *= w;

                // load: volume source plus inflow data
                let mut fsrc = 0.0;
                for q in 0..nq {
                    fsrc += rule.weights[q] * f_q[q] * table[q * modes + m];
                }
                let mut l_entry = eps * h2 * fsrc;
                if mu > 0.0 && cell == 0 {
                    l_entry += mu * spec.boundary_left.eval(mu) * sign_m;
                }
                if mu < 0.0 && cell == last {
                    l_entry += -mu * spec.boundary_right.eval(mu);
                }
                l_entry *= w;

                entries[(l * ncells + cell) * modes + m] = l_entry - a_entry;
                max_a = max_a.max(a_entry.abs());
                max_l = max_l.max(l_entry.abs());
            }
        }
    }
    // Non-finite entries poison the report: a diverged field must never
    // certify because NaN fell out of a max fold.
    let max_abs = entries.iter().fold(0.0f64, |m, e| {
        if e.is_finite() {
            m.max(e.abs())
        } else {
            f64::INFINITY
        }
    });
    Ok(ResidualReport {
        entries,
        max_abs,
        scale: max_a + max_l,
    })
}

/// The field minus its own angular average, cellwise in modal space.
pub fn isotropic_deviation(field: &DgField, quad: &AngularQuadrature) -> Result<DgField> {
    check_field_quad(field, quad)?;
    let mut out = field.clone();
    let modes = field.modes();
    let mut mean = vec![0.0; modes];
    for cell in 0..field.ncells() {
        mean.iter_mut().for_each(|m| *m = 0.0);
        for (l, w) in quad.weights().iter().enumerate() {
            for (m, c) in field.cell_coeffs(l, cell).iter().enumerate() {
                mean[m] += w * c;
            }
        }
        for l in 0..field.n_angles() {
            for (m, c) in out.cell_coeffs_mut(l, cell).iter_mut().enumerate() {
                *c -= mean[m];
            }
        }
    }
    Ok(out)
}

/// |mu|-weighted boundary mismatch against prescribed isotropic values, over
/// the whole boundary (both directions at both edges).
pub fn boundary_mismatch(
    field: &DgField,
    quad: &AngularQuadrature,
    left_value: f64,
    right_value: f64,
) -> Result<f64> {
    check_field_quad(field, quad)?;
    let last = field.ncells() - 1;
    let mut acc = 0.0;
    for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
        let dl = field.trace_left(l, 0) - left_value;
        let dr = field.trace_right(l, last) - right_value;
        acc += w * mu.abs() * (dl * dl + dr * dr);
    }
    Ok(acc.sqrt())
}
