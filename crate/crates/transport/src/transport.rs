//! Cell-local upwind systems and the full transport sweep.
//!
//! With the scattering source lagged, each ordinate decouples into a chain of
//! (k+1)x(k+1) systems that are solved in the direction of travel: left to
//! right for mu > 0, right to left for mu < 0. The volume integrals reuse the
//! exact same quadrature as the Galerkin residual assembly, so a converged
//! sweep satisfies the discrete variational equations to roundoff.

use crate::basis::{deriv_overlap, GaussRule};
use crate::linalg::solve_dense;
use crate::mesh::Mesh1D;
use crate::operators::{basis_table, volume_rule, DgField, ProblemSpec, ScalarField};
use crate::AngularQuadrature;
use crate::{Error, Result};

/// One cell's assembled upwind system for a single ordinate.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub size: usize,
    /// Row-major (size x size) matrix.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LocalSystem {
    pub fn solve(&self) -> Result<Vec<f64>> {
        let mut a = self.matrix.clone();
        let mut b = self.rhs.clone();
        solve_dense(self.size, &mut a, &mut b)?;
        Ok(b)
    }
}

/// Streaming-plus-edge matrix for one direction of travel, in modal indices:
/// mu > 0 couples to the cell's right edge, mu < 0 to its left edge.
fn flux_matrix(modes: usize, positive: bool) -> Vec<f64> {
    let mut f = vec![0.0; modes * modes];
    for m in 0..modes {
        for n in 0..modes {
            let d = deriv_overlap(m, n);
            f[m * modes + n] = if positive {
                1.0 - d
            } else {
                let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
                -sign - d
            };
        }
    }
    f
}

/// Shared assembly core working from per-node samples on one cell.
///
/// `st_over_eps` holds sigma_t(x_q)/eps and `source` the emission s(x_q) at
/// the rule's nodes; `inflow` is the upwind trace entering the cell.
pub(crate) fn assemble_from_samples(
    modes: usize,
    mu: f64,
    h: f64,
    rule: &GaussRule,
    table: &[f64],
    st_over_eps: &[f64],
    source: &[f64],
    inflow: f64,
) -> LocalSystem {
    let h2 = 0.5 * h;
    let mut matrix = flux_matrix(modes, mu > 0.0);
    matrix.iter_mut().for_each(|a| *a *= mu);
    let mut rhs = vec![0.0; modes];
    for q in 0..rule.len() {
        let wq = rule.weights[q];
        let b = &table[q * modes..(q + 1) * modes];
        let cw = h2 * wq * st_over_eps[q];
        for m in 0..modes {
            for n in 0..modes {
                matrix[m * modes + n] += cw * b[n] * b[m];
            }
            rhs[m] += h2 * wq * source[q] * b[m];
        }
    }
    if mu > 0.0 {
        for (m, r) in rhs.iter_mut().enumerate() {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            *r += mu * inflow * sign;
        }
    } else {
        for r in rhs.iter_mut() {
            *r += -mu * inflow;
        }
    }
    LocalSystem {
        size: modes,
        matrix,
        rhs,
    }
}

/// Assemble the upwind system on one cell [x_left, x_left + h] for ordinate
/// mu, from coefficient and emission functions of physical position.
pub fn assemble_local(
    degree: usize,
    mu: f64,
    x_left: f64,
    h: f64,
    st_over_eps: impl Fn(f64) -> f64,
    source: impl Fn(f64) -> f64,
    inflow: f64,
) -> Result<LocalSystem> {
    if mu == 0.0 || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ordinate must be nonzero and finite, got {mu}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cell width must be positive, got {h}"
        )));
    }
    let modes = degree + 1;
    let rule = volume_rule(degree)?;
    let table = basis_table(degree, &rule);
    let mut st = vec![0.0; rule.len()];
    let mut s = vec![0.0; rule.len()];
    for (q, &xi) in rule.nodes.iter().enumerate() {
        let x = x_left + 0.5 * h * (xi + 1.0);
        st[q] = st_over_eps(x);
        s[q] = source(x);
    }
    Ok(assemble_from_samples(
        modes, mu, h, &rule, &table, &st, &s, inflow,
    ))
}

/// Incoming intensity per ordinate, sampled from the problem data: the left
/// edge value for mu > 0, the right edge value for mu < 0.
pub fn boundary_samples(spec: &ProblemSpec, quad: &AngularQuadrature) -> Vec<f64> {
    quad.ordinates()
        .iter()
        .map(|&mu| {
            if mu > 0.0 {
                spec.boundary_left.eval(mu)
            } else {
                spec.boundary_right.eval(mu)
            }
        })
        .collect()
}

/// One transport sweep: solve every ordinate's chain of local systems with
/// the scattering source built from the lagged scalar flux.
///
/// `inflow` holds one incoming trace per ordinate, as produced by
/// [`boundary_samples`] or a blended variant of it.
pub fn sweep(
    spec: &ProblemSpec,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    flux: &ScalarField,
    inflow: &[f64],
    degree: usize,
) -> Result<DgField> {
    spec.validate()?;
    if flux.ncells() != mesh.ncells() {
        return Err(Error::InvalidArgument(format!(
            "flux has {} cells but mesh has {}",
            flux.ncells(),
            mesh.ncells()
        )));
    }
    if flux.degree() != degree {
        return Err(Error::InvalidArgument(format!(
            "flux degree {} does not match requested degree {}",
            flux.degree(),
            degree
        )));
    }
    if inflow.len() != quad.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inflow traces for {} ordinates",
            inflow.len(),
            quad.len()
        )));
    }
    let modes = degree + 1;
    let ncells = mesh.ncells();
    let h = mesh.h();
    let h2 = 0.5 * h;
    let rule = volume_rule(degree)?;
    let nq = rule.len();
    let table = basis_table(degree, &rule);

    // ordinate-independent per-cell samples on the shared volume rule:
    // sigma_t/eps, the lagged emission (scattering plus external source),
    // and the collision matrix contribution
    let eps = spec.epsilon;
    let mut st_over_eps = vec![0.0; ncells * nq];
    let mut emission = vec![0.0; ncells * nq];
    let mut collision = vec![0.0; ncells * modes * modes];
    let mut proj = vec![0.0; ncells * modes];
    for cell in 0..ncells {
        for q in 0..nq {
            let x = mesh.cell_x(cell, rule.nodes[q]);
            let (st, _) = spec.cross_sections_at(x)?;
            let scat = spec.sigma_s_at(x)?;
            let phi: f64 = flux
                .cell_coeffs(cell)
                .iter()
                .zip(&table[q * modes..(q + 1) * modes])
                .map(|(c, p)| c * p)
                .sum();
            st_over_eps[cell * nq + q] = st / eps;
            emission[cell * nq + q] = scat * phi + eps * spec.source.eval(x);
        }
        let cmat = &mut collision[cell * modes * modes..(cell + 1) * modes * modes];
        let pr = &mut proj[cell * modes..(cell + 1) * modes];
        for q in 0..nq {
            let b = &table[q * modes..(q + 1) * modes];
            let cw = h2 * rule.weights[q] * st_over_eps[cell * nq + q];
            let sw = h2 * rule.weights[q] * emission[cell * nq + q];
            for m in 0..modes {
                for n in 0..modes {
                    cmat[m * modes + n] += cw * b[n] * b[m];
                }
                pr[m] += sw * b[m];
            }
        }
    }

    let fpos = flux_matrix(modes, true);
    let fneg = flux_matrix(modes, false);
    let mut out = DgField::zeros(quad.len(), ncells, degree);
    let mut matrix = vec![0.0; modes * modes];
    let mut rhs = vec![0.0; modes];

    for (l, &mu) in quad.ordinates().iter().enumerate() {
        let fmat = if mu > 0.0 { &fpos } else { &fneg };
        let mut upwind = inflow[l];
        let order: Box<dyn Iterator<Item = usize>> = if mu > 0.0 {
            Box::new(0..ncells)
        } else {
            Box::new((0..ncells).rev())
        };
        for cell in order {
            let cmat = &collision[cell * modes * modes..(cell + 1) * modes * modes];
            for (a, (f, c)) in matrix.iter_mut().zip(fmat.iter().zip(cmat)) {
                *a = mu * f + c;
            }
            rhs.copy_from_slice(&proj[cell * modes..(cell + 1) * modes]);
            if mu > 0.0 {
                for (m, r) in rhs.iter_mut().enumerate() {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    *r += mu * upwind * sign;
                }
            } else {
                for r in rhs.iter_mut() {
                    *r += -mu * upwind;
                }
            }
            solve_dense(modes, &mut matrix, &mut rhs)?;
            out.cell_coeffs_mut(l, cell).copy_from_slice(&rhs);
            upwind = if mu > 0.0 {
                out.trace_right(l, cell)
            } else {
                out.trace_left(l, cell)
            };
        }
    }
    Ok(out)
}

/// Angular average of a discrete intensity, cellwise in modal space.
pub fn scalar_flux(field: &DgField, quad: &AngularQuadrature) -> Result<ScalarField> {
    if field.n_angles() != quad.len() {
        return Err(Error::InvalidArgument(format!(
            "field has {} ordinates but quadrature has {}",
            field.n_angles(),
            quad.len()
        )));
    }
    let mut flux = ScalarField::zeros(field.ncells(), field.degree());
    for cell in 0..field.ncells() {
        let out = flux.cell_coeffs_mut(cell);
        for (l, w) in quad.weights().iter().enumerate() {
            for (m, c) in field.cell_coeffs(l, cell).iter().enumerate() {
                out[m] += w * c;
            }
        }
    }
    Ok(flux)
}
