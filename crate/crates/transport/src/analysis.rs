//! Post-processing and study drivers: projection onto the broken basis,
//! discretization-error norms against a nested reference solution,
//! convergence-rate extraction, and parameter studies over eps and the
//! boundary blend weight.

use crate::basis::{legendre_all, GaussRule};
use crate::boundary::{blended_boundary, compute_h_function, lambda_star};
use crate::mesh::{nesting_gap, Mesh1D};
use crate::operators::{isotropic_deviation, l2_norm, volume_rule, DgField, ProblemSpec};
use crate::solver::{solve, SolveOptions, SolveResult};
use crate::transport::scalar_flux;
use crate::AngularQuadrature;
use crate::{Error, Result};

/// Project a function onto one cell's Legendre modes so that the result
/// keeps the exact trace at the cell's outflow edge (the edge the wind
/// leaves through) and matches the plain L2 projection in all lower modes.
///
/// This is the transfer operator whose approximation error respects the
/// upwind coupling between cells; a plain L2 projection would perturb the
/// traces that neighboring cells consume.
pub fn radau_project(
    degree: usize,
    wind: f64,
    f: impl Fn(f64) -> f64,
    x_left: f64,
    h: f64,
) -> Result<Vec<f64>> {
    if wind == 0.0 || !wind.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "wind direction must be nonzero and finite, got {wind}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cell width must be positive, got {h}"
        )));
    }
    // generous rule: the lower modes must be the L2 projection to far below
    // the accuracy of interest even for non-polynomial data
    let rule = GaussRule::for_degree(2 * degree + 20)?;
    let modes = degree + 1;
    let mut coeffs = vec![0.0; modes];
    let mut basis = vec![0.0; modes];
    for (&xi, &wq) in rule.nodes.iter().zip(&rule.weights) {
        let x = x_left + 0.5 * h * (xi + 1.0);
        let fx = f(x);
        legendre_all(xi, &mut basis);
        for m in 0..degree {
            coeffs[m] += 0.5 * wq * fx * basis[m] * (2.0 * m as f64 + 1.0);
        }
    }
    // top mode from the outflow trace condition
    if wind > 0.0 {
        let target = f(x_left + h);
        let partial: f64 = coeffs[..degree].iter().sum();
        coeffs[degree] = target - partial;
    } else {
        let target = f(x_left);
        let partial: f64 = coeffs[..degree]
            .iter()
            .enumerate()
            .map(|(m, c)| if m % 2 == 0 { *c } else { -*c })
            .sum();
        let sign = if degree % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[degree] = sign * (target - partial);
    }
    Ok(coeffs)
}

/// Which norm an error measurement uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Angle-weighted L2 norm.
    L2,
    /// The eps-weighted collision energy norm.
    Q,
    /// The full scheme norm including boundary and jump terms.
    Triple,
}

impl NormKind {
    pub fn label(&self) -> &'static str {
        match self {
            NormKind::L2 => "l2",
            NormKind::Q => "q",
            NormKind::Triple => "triple",
        }
    }
}

/// Norm of (coarse - reference) for fields on nested meshes, evaluated at
/// the reference mesh's own quadrature points so that no extra projection
/// error enters the measurement.
pub fn error_norm(
    coarse: &DgField,
    coarse_mesh: &Mesh1D,
    reference: &DgField,
    reference_mesh: &Mesh1D,
    quad: &AngularQuadrature,
    spec: &ProblemSpec,
    kind: NormKind,
) -> Result<f64> {
    let gap = nesting_gap(coarse_mesh, reference_mesh).ok_or_else(|| {
        Error::InvalidArgument("error norms need nested meshes from a common base".into())
    })?;
    if coarse.n_angles() != quad.len() || reference.n_angles() != quad.len() {
        return Err(Error::InvalidArgument(
            "fields and angular quadrature disagree on the ordinate count".into(),
        ));
    }
    if coarse.ncells() != coarse_mesh.ncells() || reference.ncells() != reference_mesh.ncells() {
        return Err(Error::InvalidArgument(
            "field and mesh cell counts disagree".into(),
        ));
    }
    let degree = coarse.degree().max(reference.degree());
    let rule = volume_rule(degree)?;
    let nl = quad.len();
    let hf2 = 0.5 * reference_mesh.h();
    let eps = spec.epsilon;

    let mut diff = vec![0.0; nl];
    let mut volume = 0.0;
    for fc in 0..reference_mesh.ncells() {
        let cc = fc >> gap;
        for (q, &xi) in rule.nodes.iter().enumerate() {
            let x = reference_mesh.cell_x(fc, xi);
            // reference coordinate of x inside the coarse cell
            let (cl, _) = coarse_mesh.cell(cc);
            let xi_c = (x - cl) / coarse_mesh.h() * 2.0 - 1.0;
            for (l, d) in diff.iter_mut().enumerate() {
                *d = coarse.eval_ref(l, cc, xi_c) - reference.eval_ref(l, fc, xi);
            }
            let wq = rule.weights[q] * hf2;
            match kind {
                NormKind::L2 => {
                    for (w, d) in quad.weights().iter().zip(&diff) {
                        volume += wq * w * d * d;
                    }
                }
                NormKind::Q | NormKind::Triple => {
                    let (st, sa) = spec.cross_sections_at(x)?;
                    let mean: f64 = quad.weights().iter().zip(&diff).map(|(w, d)| w * d).sum();
                    let mut aniso = 0.0;
                    for (w, d) in quad.weights().iter().zip(&diff) {
                        aniso += w * (d - mean) * (d - mean);
                    }
                    volume += wq * (st / eps * aniso + eps * sa * mean * mean);
                }
            }
        }
    }
    if kind != NormKind::Triple {
        return Ok(volume.sqrt());
    }

    // boundary and jump contributions of the difference, on reference edges
    let mut boundary = 0.0;
    let mut jumps = 0.0;
    let nfine = reference_mesh.ncells();
    let last_c = coarse_mesh.ncells() - 1;
    for (l, (&mu, &w)) in quad.ordinates().iter().zip(quad.weights()).enumerate() {
        let dl = coarse.trace_left(l, 0) - reference.trace_left(l, 0);
        let dr = coarse.trace_right(l, last_c) - reference.trace_right(l, nfine - 1);
        boundary += w * mu.abs() * (dl * dl + dr * dr);
        for edge in 1..nfine {
            let (xl, _) = reference_mesh.cell(edge);
            let cc_left = (edge - 1) >> gap;
            let cc_right = edge >> gap;
            let coarse_left = if cc_left == cc_right {
                // interior point of a coarse cell: evaluate the polynomial
                let (cl, _) = coarse_mesh.cell(cc_left);
                let xi_c = (xl - cl) / coarse_mesh.h() * 2.0 - 1.0;
                coarse.eval_ref(l, cc_left, xi_c)
            } else {
                coarse.trace_right(l, cc_left)
            };
            let coarse_right = if cc_left == cc_right {
                let (cl, _) = coarse_mesh.cell(cc_right);
                let xi_c = (xl - cl) / coarse_mesh.h() * 2.0 - 1.0;
                coarse.eval_ref(l, cc_right, xi_c)
            } else {
                coarse.trace_left(l, cc_right)
            };
            let jump = (coarse_left - reference.trace_right(l, edge - 1))
                - (coarse_right - reference.trace_left(l, edge));
            jumps += w * mu.abs() * jump * jump;
        }
    }
    Ok((eps * (volume + 0.5 * boundary + 0.5 * jumps)).sqrt())
}

/// log2 ratios of successive errors for meshes that halve h at every step.
pub fn convergence_rates(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} errors for {} mesh widths",
            errors.len(),
            hs.len()
        )));
    }
    for pair in hs.windows(2) {
        if (pair[1] - 0.5 * pair[0]).abs() > 1e-12 * pair[0] {
            return Err(Error::InvalidArgument(format!(
                "rates assume halving widths, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(errors
        .windows(2)
        .map(|pair| (pair[0] / pair[1]).log2())
        .collect())
}

/// How the boundary data is blended at each mesh level of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlendPolicy {
    /// Use the prescribed boundary data unchanged.
    None,
    /// A fixed blend weight for every level.
    Fixed(f64),
    /// The resolution-based weight eps^2 / (eps^2 + h^(2q)) per level.
    LambdaStar { q: u32 },
}

/// One level of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub level: u32,
    pub h: f64,
    pub epsilon: f64,
    pub degree: usize,
    pub lambda: f64,
    pub error: f64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<StudyRow>,
    pub norm: NormKind,
    pub reference_level: u32,
    pub reference_iterations: usize,
}

/// Drives a convergence study: which levels to run and against what.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub degree: usize,
    pub first_level: u32,
    pub nlevels: u32,
    /// Refinement level of the reference solution, counted from the base
    /// mesh like the study levels.
    pub reference_level: u32,
    pub norm: NormKind,
    pub blend: BlendPolicy,
    pub solve: SolveOptions,
    /// Grid size for the H-function table backing blended boundaries.
    pub h_nodes: usize,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nlevels == 0 {
            return Err(Error::InvalidArgument("study needs at least one level".into()));
        }
        let finest = self.first_level + self.nlevels - 1;
        if self.reference_level <= finest {
            return Err(Error::InvalidArgument(format!(
                "reference level {} must be finer than the finest study level {}",
                self.reference_level, finest
            )));
        }
        if let BlendPolicy::Fixed(lambda) = self.blend {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::InvalidArgument(format!(
                    "blend weight must lie in [0,1], got {lambda}"
                )));
            }
        }
        Ok(())
    }
}

fn solve_checked(
    spec: &ProblemSpec,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    degree: usize,
    options: &SolveOptions,
    what: &str,
) -> Result<SolveResult> {
    let result = solve(spec, mesh, quad, degree, options)?;
    if !result.converged {
        return Err(Error::NonConvergence(format!(
            "{what} on {} cells stalled after {} iterations \
             (flux change {:.3e}, residual {:.3e})",
            mesh.ncells(),
            result.iterations,
            result.flux_change,
            result.final_residual
        )));
    }
    Ok(result)
}

fn blend_weight(policy: BlendPolicy, epsilon: f64, h: f64) -> f64 {
    match policy {
        BlendPolicy::None => 1.0,
        BlendPolicy::Fixed(lambda) => lambda,
        BlendPolicy::LambdaStar { q } => lambda_star(epsilon, h, q),
    }
}

/// Solve a hierarchy of refinements against a fine reference computed from
/// the unblended data, and report errors and observed rates.
pub fn convergence_study(
    spec: &ProblemSpec,
    base: &Mesh1D,
    quad: &AngularQuadrature,
    config: &StudyConfig,
) -> Result<ConvergenceReport> {
    spec.validate()?;
    config.validate()?;
    let reference_mesh = base.refined_to(config.reference_level)?;
    let reference = solve_checked(
        spec,
        &reference_mesh,
        quad,
        config.degree,
        &config.solve,
        "reference solve",
    )?;

    let needs_blend = !matches!(config.blend, BlendPolicy::None);
    let table = if needs_blend {
        Some(compute_h_function(config.h_nodes, 1e-12)?)
    } else {
        None
    };

    let mut errors = Vec::new();
    let mut hs = Vec::new();
    let mut lambdas = Vec::new();
    for step in 0..config.nlevels {
        let level = config.first_level + step;
        let mesh = base.refined_to(level)?;
        let lambda = blend_weight(config.blend, spec.epsilon, mesh.h());
        let level_spec = match &table {
            Some(t) if lambda < 1.0 => blended_boundary(spec, t, lambda)?,
            _ => spec.clone(),
        };
        let result = solve_checked(
            &level_spec,
            &mesh,
            quad,
            config.degree,
            &config.solve,
            "study solve",
        )?;
        let error = error_norm(
            &result.field,
            &mesh,
            &reference.field,
            &reference_mesh,
            quad,
            spec,
            config.norm,
        )?;
        errors.push(error);
        hs.push(mesh.h());
        lambdas.push(lambda);
    }
    let rates = convergence_rates(&errors, &hs)?;
    let rows = errors
        .iter()
        .enumerate()
        .map(|(i, &error)| StudyRow {
            level: config.first_level + i as u32,
            h: hs[i],
            epsilon: spec.epsilon,
            degree: config.degree,
            lambda: lambdas[i],
            error,
            rate: if i == 0 { None } else { Some(rates[i - 1]) },
        })
        .collect();
    Ok(ConvergenceReport {
        rows,
        norm: config.norm,
        reference_level: config.reference_level,
        reference_iterations: reference.iterations,
    })
}

/// Anisotropy magnitude across a family of eps values on one mesh.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub epsilons: Vec<f64>,
    /// || u - ubar || per eps.
    pub anisotropy: Vec<f64>,
    /// || ubar || per eps.
    pub mean_norm: Vec<f64>,
    /// Least-squares slope of log anisotropy against log eps.
    pub slope: f64,
}

/// Solve the same problem for each eps and measure how the anisotropic part
/// of the solution scales; in the diffusive regime it shrinks linearly.
pub fn apriori_scaling_study(
    spec: &ProblemSpec,
    mesh: &Mesh1D,
    quad: &AngularQuadrature,
    degree: usize,
    epsilons: &[f64],
    options: &SolveOptions,
) -> Result<ScalingReport> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidArgument(
            "scaling study needs at least two eps values".into(),
        ));
    }
    let mut anisotropy = Vec::with_capacity(epsilons.len());
    let mut mean_norm = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut eps_spec = spec.clone();
        eps_spec.epsilon = eps;
        let result = solve_checked(&eps_spec, mesh, quad, degree, options, "scaling solve")?;
        let deviation = isotropic_deviation(&result.field, quad)?;
        anisotropy.push(l2_norm(&deviation, mesh, quad)?);
        mean_norm.push(scalar_flux(&result.field, quad)?.l2_norm(mesh));
    }
    // slope of ln(anisotropy) vs ln(eps)
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = anisotropy.iter().map(|a| a.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "scaling study needs distinct eps values".into(),
        ));
    }
    Ok(ScalingReport {
        epsilons: epsilons.to_vec(),
        anisotropy,
        mean_norm,
        slope: sxy / sxx,
    })
}

/// One blend weight's error in a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// The resolution-based weight for this (eps, h).
    pub lambda_star: f64,
    /// Index of the smallest error in `rows`.
    pub best: usize,
}

/// Solve one mesh level for every blend weight in `lambdas` and measure each
/// error against an unblended fine reference.
#[allow(clippy::too_many_arguments)]
pub fn lambda_sweep(
    spec: &ProblemSpec,
    base: &Mesh1D,
    quad: &AngularQuadrature,
    level: u32,
    reference_level: u32,
    degree: usize,
    norm: NormKind,
    lambdas: &[f64],
    q: u32,
    options: &SolveOptions,
    h_nodes: usize,
) -> Result<SweepReport> {
    spec.validate()?;
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one weight".into()));
    }
    if reference_level <= level {
        return Err(Error::InvalidArgument(format!(
            "reference level {reference_level} must be finer than the swept level {level}"
        )));
    }
    let mesh = base.refined_to(level)?;
    let reference_mesh = base.refined_to(reference_level)?;
    let reference = solve_checked(spec, &reference_mesh, quad, degree, options, "reference solve")?;
    let table = compute_h_function(h_nodes, 1e-12)?;

    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let level_spec = if lambda < 1.0 {
            blended_boundary(spec, &table, lambda)?
        } else {
            spec.clone()
        };
        let result = solve_checked(&level_spec, &mesh, quad, degree, options, "sweep solve")?;
        let error = error_norm(
            &result.field,
            &mesh,
            &reference.field,
            &reference_mesh,
            quad,
            spec,
            norm,
        )?;
        rows.push(SweepRow { lambda, error });
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.error.total_cmp(&b.error))
        .map(|(i, _)| i)
        .expect("rows is nonempty");
    Ok(SweepReport {
        rows,
        lambda_star: lambda_star(spec.epsilon, mesh.h(), q),
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::ScalarFn;

    #[test]
    fn transfer_reproduces_quadratic_fixtures() {
        // f(x) = x^2 on [0,1], linear modes
        let up = radau_project(1, 1.0, |x| x * x, 0.0, 1.0).unwrap();
        // matches -1/3 + (4/3) x, i.e. modal (1/3, 2/3)
        assert!((up[0] - 1.0 / 3.0).abs() <= 1e-14);
        assert!((up[1] - 2.0 / 3.0).abs() <= 1e-14);
        let down = radau_project(1, -1.0, |x| x * x, 0.0, 1.0).unwrap();
        // matches (2/3) x, i.e. modal (1/3, 1/3)
        assert!((down[0] - 1.0 / 3.0).abs() <= 1e-14);
        assert!((down[1] - 1.0 / 3.0).abs() <= 1e-14);
    }

    #[test]
    fn transfer_keeps_outflow_trace_and_lower_moments() {
        let f = |x: f64| (3.0 * x).sin();
        let x_left = 0.2;
        let h = 0.25;
        let check = GaussRule::for_degree(40).unwrap();
        for degree in [1usize, 2, 3] {
            for wind in [1.0, -1.0] {
                let coeffs = radau_project(degree, wind, f, x_left, h).unwrap();
                // trace at the outflow edge is exact
                let (xi_out, x_out) = if wind > 0.0 {
                    (1.0, x_left + h)
                } else {
                    (-1.0, x_left)
                };
                let mut basis = vec![0.0; degree + 1];
                legendre_all(xi_out, &mut basis);
                let trace: f64 = coeffs.iter().zip(&basis).map(|(c, p)| c * p).sum();
                assert!(
                    (trace - f(x_out)).abs() <= 1e-12,
                    "degree={degree} wind={wind}"
                );
                // residual is orthogonal to all lower modes
                for m in 0..degree {
                    let mut moment = 0.0;
                    for (q, &xi) in check.nodes.iter().enumerate() {
                        let x = x_left + 0.5 * h * (xi + 1.0);
                        let mut b = vec![0.0; degree + 1];
                        legendre_all(xi, &mut b);
                        let p: f64 = coeffs.iter().zip(&b).map(|(c, pb)| c * pb).sum();
                        moment += check.weights[q] * (f(x) - p) * b[m];
                    }
                    assert!(moment.abs() <= 1e-12, "degree={degree} wind={wind} m={m}");
                }
            }
        }
    }

    #[test]
    fn transfer_degree_zero_keeps_trace() {
        let c = radau_project(0, 1.0, |x| 2.0 * x + 1.0, 0.0, 0.5).unwrap();
        assert!((c[0] - 2.0).abs() <= 1e-14); // f at the right edge
        let c = radau_project(0, -1.0, |x| 2.0 * x + 1.0, 0.0, 0.5).unwrap();
        assert!((c[0] - 1.0).abs() <= 1e-14); // f at the left edge
    }

    #[test]
    fn rate_extraction_fixtures() {
        let errors = [4.00e-2, 9.52e-3, 3.28e-3];
        let hs = [0.25, 0.125, 0.0625];
        let rates = convergence_rates(&errors, &hs).unwrap();
        assert!((rates[0] - 2.07).abs() <= 5e-3, "{}", rates[0]);
        assert!((rates[1] - 1.54).abs() <= 5e-3, "{}", rates[1]);
    }

    #[test]
    fn rate_extraction_rejects_non_halving() {
        assert!(convergence_rates(&[1.0, 0.5], &[0.3, 0.2]).is_err());
        assert!(convergence_rates(&[1.0], &[0.3, 0.15]).is_err());
    }

    fn constant_field(value: f64, n_angles: usize, ncells: usize, degree: usize) -> DgField {
        let mut f = DgField::zeros(n_angles, ncells, degree);
        for l in 0..n_angles {
            for c in 0..ncells {
                f.cell_coeffs_mut(l, c)[0] = value;
            }
        }
        f
    }

    fn plain_spec(eps: f64) -> ProblemSpec {
        ProblemSpec {
            sigma_t: ScalarFn::constant(2.0),
            sigma_a: ScalarFn::constant(1.0),
            epsilon: eps,
            source: ScalarFn::constant(0.0),
            boundary_left: ScalarFn::constant(0.0),
            boundary_right: ScalarFn::constant(0.0),
        }
    }

    #[test]
    fn error_norm_of_identical_fields_vanishes() {
        let base = Mesh1D::uniform(-1.0, 1.0, 4).unwrap();
        let quad = AngularQuadrature::gauss(4).unwrap();
        let spec = plain_spec(0.5);
        let f = constant_field(0.3, 4, 4, 1);
        let e = error_norm(&f, &base, &f, &base, &quad, &spec, NormKind::L2).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn error_norm_of_constant_offset() {
        let base = Mesh1D::uniform(-1.0, 1.0, 4).unwrap();
        let fine = base.refined_to(3).unwrap();
        let quad = AngularQuadrature::gauss(4).unwrap();
        let spec = plain_spec(0.5);
        let coarse = constant_field(0.3, 4, 4, 1);
        let reference = DgField::zeros(4, fine.ncells(), 1);
        let e = error_norm(&coarse, &base, &reference, &fine, &quad, &spec, NormKind::L2).unwrap();
        assert!((e - 0.3 * 2f64.sqrt()).abs() <= 1e-13);

        // eps-weighted norm of an isotropic constant: eps*sigma_a*c^2*(b-a)
        let eq = error_norm(&coarse, &base, &reference, &fine, &quad, &spec, NormKind::Q).unwrap();
        assert!((eq * eq - 0.5 * 0.09 * 2.0).abs() <= 1e-14);

        // full norm adds half the |mu|-weighted boundary difference
        let et =
            error_norm(&coarse, &base, &reference, &fine, &quad, &spec, NormKind::Triple).unwrap();
        let mu_weight: f64 = quad
            .ordinates()
            .iter()
            .zip(quad.weights())
            .map(|(mu, w)| w * mu.abs())
            .sum();
        let expect = 0.5 * (eq * eq + 0.5 * 0.09 * 2.0 * mu_weight);
        assert!((et * et - expect).abs() <= 1e-14, "{} vs {expect}", et * et);
    }

    #[test]
    fn error_norm_is_exact_for_shared_polynomials() {
        // both fields represent u(x) = x; their difference must vanish
        let base = Mesh1D::uniform(-1.0, 1.0, 2).unwrap();
        let fine = base.refined_to(2).unwrap();
        let quad = AngularQuadrature::gauss(2).unwrap();
        let spec = plain_spec(1.0);
        let fill = |mesh: &Mesh1D| {
            let mut f = DgField::zeros(2, mesh.ncells(), 1);
            for l in 0..2 {
                for c in 0..mesh.ncells() {
                    let (xl, xr) = mesh.cell(c);
                    f.cell_coeffs_mut(l, c)[0] = 0.5 * (xl + xr);
                    f.cell_coeffs_mut(l, c)[1] = 0.5 * mesh.h();
                }
            }
            f
        };
        let coarse = fill(&base);
        let reference = fill(&fine);
        for kind in [NormKind::L2, NormKind::Q, NormKind::Triple] {
            let e = error_norm(&coarse, &base, &reference, &fine, &quad, &spec, kind).unwrap();
            assert!(e <= 1e-13, "{kind:?}: {e}");
        }
    }

    #[test]
    fn error_norm_rejects_unrelated_meshes() {
        let a = Mesh1D::uniform(-1.0, 1.0, 4).unwrap();
        let b = Mesh1D::uniform(-1.0, 1.0, 6).unwrap();
        let quad = AngularQuadrature::gauss(2).unwrap();
        let spec = plain_spec(1.0);
        let fa = DgField::zeros(2, 4, 1);
        let fb = DgField::zeros(2, 6, 1);
        assert!(error_norm(&fa, &a, &fb, &b, &quad, &spec, NormKind::L2).is_err());
    }

    #[test]
    fn study_config_validation() {
        let config = StudyConfig {
            degree: 1,
            first_level: 0,
            nlevels: 3,
            reference_level: 2,
            norm: NormKind::L2,
            blend: BlendPolicy::None,
            solve: SolveOptions::default(),
            h_nodes: 64,
        };
        assert!(config.validate().is_err()); // reference not finer than finest
        let ok = StudyConfig {
            reference_level: 5,
            ..config.clone()
        };
        assert!(ok.validate().is_ok());
        let bad_blend = StudyConfig {
            reference_level: 5,
            blend: BlendPolicy::Fixed(1.5),
            ..config
        };
        assert!(bad_blend.validate().is_err());
    }

    #[test]
    fn small_study_shows_second_order_means() {
        // smooth forcing, eps = 1: the scheme converges at least at second
        // order for linear elements, visible already on tiny meshes
        let spec = ProblemSpec {
            sigma_t: ScalarFn::constant(2.0),
            sigma_a: ScalarFn::constant(1.0),
            epsilon: 1.0,
            source: ScalarFn::new(|x: f64| (std::f64::consts::PI * x).cos()),
            boundary_left: ScalarFn::constant(0.0),
            boundary_right: ScalarFn::constant(0.0),
        };
        let base = Mesh1D::uniform(-1.0, 1.0, 4).unwrap();
        let quad = AngularQuadrature::gauss(4).unwrap();
        let config = StudyConfig {
            degree: 1,
            first_level: 0,
            nlevels: 3,
            reference_level: 6,
            norm: NormKind::L2,
            blend: BlendPolicy::None,
            solve: SolveOptions::default(),
            h_nodes: 64,
        };
        let report = convergence_study(&spec, &base, &quad, &config).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows[0].rate.is_none());
        for row in &report.rows[1..] {
            let rate = row.rate.unwrap();
            assert!(rate > 1.5, "rate {rate}");
        }
        assert!((report.rows[0].lambda - 1.0).abs() < 1e-15);
        // errors decrease monotonically
        for pair in report.rows.windows(2) {
            assert!(pair[1].error < pair[0].error);
        }
    }

    #[test]
    fn scaling_slope_needs_two_epsilons() {
        let spec = plain_spec(0.5);
        let mesh = Mesh1D::uniform(-1.0, 1.0, 4).unwrap();
        let quad = AngularQuadrature::gauss(2).unwrap();
        assert!(apriori_scaling_study(
            &spec,
            &mesh,
            &quad,
            1,
            &[0.1],
            &SolveOptions::default()
        )
        .is_err());
    }
}
