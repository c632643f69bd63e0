//! Self-checks of the numerical foundations, run end to end on a fresh
//! build: quadrature exactness, the quadratic-form energy identity on random
//! fields, the boundary-layer weight moments, the outflow-matching projection
//! conditions, the collision inverse, and the small-eps anisotropy scaling.
//!
//! Each check reports one PASS/FAIL line; any failure makes the whole run
//! fail. The hooks (`seed`, `h_nodes`, `h_tolerance`, and the hidden weight
//! perturbation) exist so the failure detection itself can be demonstrated.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slab_transport::analysis::{apriori_scaling_study, radau_project};
use slab_transport::basis::{legendre_all, GaussRule};
use slab_transport::boundary::{boundary_corrector, compute_h_function, Side};
use slab_transport::operators::{
    apply_collision, apply_collision_inverse, bilinear_form, boundary_norm, jump_seminorm, q_norm,
    BoundaryPart,
};
use slab_transport::{
    AngularQuadrature, DgField, Mesh1D, ProblemSpec, ScalarFn, SolveOptions,
};

pub struct VerifySettings {
    pub seed: u64,
    pub h_nodes: usize,
    /// Acceptance tolerance for the weight-table moment comparisons; the
    /// discretization error of `h_nodes` grid points must stay below it.
    pub h_tolerance: f64,
    pub perturb_quadrature: bool,
}

struct Check {
    name: &'static str,
    outcome: Result<String, String>,
}

/// Run every check; returns the printable report and whether all passed.
pub fn run(settings: &VerifySettings) -> (String, bool) {
    let checks = [
        quadrature_exactness(settings),
        energy_identity(settings),
        weight_table_moments(settings),
        projection_conditions(),
        collision_inverse(settings),
        anisotropy_scaling(),
    ];
    let mut text = String::new();
    let mut passed = 0usize;
    for check in &checks {
        match &check.outcome {
            Ok(detail) => {
                passed += 1;
                let _ = writeln!(text, "PASS {}: {detail}", check.name);
            }
            Err(detail) => {
                let _ = writeln!(text, "FAIL {}: {detail}", check.name);
            }
        }
    }
    let _ = writeln!(text, "verification: {passed} of {} checks passed", checks.len());
    (text, passed == checks.len())
}

fn quadrature_exactness(settings: &VerifySettings) -> Check {
    let name = "quadrature exactness";
    let outcome = (|| {
        for n in [2usize, 4, 8, 16] {
            let rule = GaussRule::new(n).map_err(|e| e.to_string())?;
            for j in 0..=(2 * n - 1) {
                let value: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(j as i32))
                    .sum();
                let exact = if j % 2 == 0 { 2.0 / (j as f64 + 1.0) } else { 0.0 };
                if (value - exact).abs() > 1e-13 {
                    return Err(format!(
                        "{n}-node rule misses moment {j}: {value:.15e} vs {exact:.15e}"
                    ));
                }
            }
        }
        // the normalized ordinate set: weights sum to one, directions pair up
        let quad = AngularQuadrature::gauss(8).map_err(|e| e.to_string())?;
        let mut weights = quad.weights().to_vec();
        if settings.perturb_quadrature {
            weights[1] += 1e-3;
        }
        let quad = AngularQuadrature::from_parts_unchecked(quad.ordinates().to_vec(), weights);
        let total: f64 = quad.weights().iter().sum();
        if (total - 1.0).abs() > 1e-14 {
            return Err(format!("ordinate weights sum to {total:.15e}, not one"));
        }
        let odd: f64 = quad
            .ordinates()
            .iter()
            .zip(quad.weights())
            .map(|(mu, w)| w * mu)
            .sum();
        if odd.abs() > 1e-14 {
            return Err(format!("ordinate set is not symmetric: mean direction {odd:.3e}"));
        }
        Ok("moments of degree up to 2n-1 are exact for n in {2,4,8,16}".to_string())
    })();
    Check { name, outcome }
}

fn energy_identity(settings: &VerifySettings) -> Check {
    let name = "energy identity";
    let outcome = (|| {
        let mesh = Mesh1D::uniform(-1.0, 1.0, 6).map_err(|e| e.to_string())?;
        let quad = AngularQuadrature::gauss(6).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut worst = 0.0f64;
        let mut checked = 0usize;
        for eps in [1.0, 1e-3] {
            let spec = ProblemSpec {
                sigma_t: ScalarFn::new(|x: f64| 2.0 + 0.5 * (3.0 * x).sin()),
                sigma_a: ScalarFn::new(|x: f64| 1.0 + 0.25 * x.cos()),
                epsilon: eps,
                source: ScalarFn::constant(0.0),
                boundary_left: ScalarFn::constant(0.0),
                boundary_right: ScalarFn::constant(0.0),
            };
            for degree in 0..=2usize {
                for _ in 0..17 {
                    let mut v = DgField::zeros(6, 6, degree);
                    for c in v.as_mut_slice() {
                        *c = rng.gen_range(-1.0..1.0);
                    }
                    let a = bilinear_form(&v, &v, &mesh, &quad, &spec).map_err(|e| e.to_string())?;
                    let q2 = q_norm(&v, &mesh, &quad, &spec).map_err(|e| e.to_string())?.powi(2);
                    let b2 = boundary_norm(&v, &quad, BoundaryPart::Both)
                        .map_err(|e| e.to_string())?
                        .powi(2);
                    let j2 = jump_seminorm(&v, &quad).map_err(|e| e.to_string())?.powi(2);
                    let gap = (a - (q2 + 0.5 * b2 + 0.5 * j2)).abs() / a;
                    if gap > 1e-12 {
                        return Err(format!(
                            "eps {eps} degree {degree}: relative identity gap {gap:.3e}"
                        ));
                    }
                    worst = worst.max(gap);
                    checked += 1;
                }
            }
        }
        Ok(format!(
            "a(v,v) matches its norm expansion on {checked} random fields (worst gap {worst:.1e})"
        ))
    })();
    Check { name, outcome }
}

fn weight_table_moments(settings: &VerifySettings) -> Check {
    let name = "boundary-layer weight moments";
    let tol = settings.h_tolerance;
    let outcome = (|| {
        let table = compute_h_function(settings.h_nodes, 1e-12).map_err(|e| e.to_string())?;
        let m0 = table.w_moment(0);
        if (m0 - 1.0).abs() > tol {
            return Err(format!(
                "zeroth weight moment off unity by {:.2e} on {} nodes (allowed {tol:.0e})",
                (m0 - 1.0).abs(),
                settings.h_nodes
            ));
        }
        let m1 = table.w_moment(1);
        let m1_exact = 0.710446089598763;
        if (m1 - m1_exact).abs() > tol {
            return Err(format!(
                "first weight moment off {m1_exact} by {:.2e} on {} nodes (allowed {tol:.0e})",
                (m1 - m1_exact).abs(),
                settings.h_nodes
            ));
        }
        let alpha = ScalarFn::new(|mu: f64| 0.1 + mu / 100.0);
        let corrected = boundary_corrector(&alpha, &table, Side::Left);
        let expected = 0.10710446089598763;
        if (corrected - expected).abs() > tol {
            return Err(format!(
                "corrector off {expected} by {:.2e} (allowed {tol:.0e})",
                (corrected - expected).abs()
            ));
        }
        Ok(format!(
            "weight integrates to one and corrects the affine inflow to {corrected:.11}"
        ))
    })();
    Check { name, outcome }
}

fn projection_conditions() -> Check {
    let name = "outflow-matching projection";
    let outcome = (|| {
        // hand-derived quadratic fixtures on [0,1]
        let up = radau_project(1, 1.0, |x| x * x, 0.0, 1.0).map_err(|e| e.to_string())?;
        if (up[0] - 1.0 / 3.0).abs() > 1e-14 || (up[1] - 2.0 / 3.0).abs() > 1e-14 {
            return Err(format!("x^2 downwind fixture broke: {up:?}"));
        }
        let down = radau_project(1, -1.0, |x| x * x, 0.0, 1.0).map_err(|e| e.to_string())?;
        if (down[0] - 1.0 / 3.0).abs() > 1e-14 || (down[1] - 1.0 / 3.0).abs() > 1e-14 {
            return Err(format!("x^2 upwind fixture broke: {down:?}"));
        }

        let f = |x: f64| (3.0 * x).sin();
        let x_left = 0.2;
        let h = 0.25;
        let rule = GaussRule::for_degree(40).map_err(|e| e.to_string())?;
        for degree in [1usize, 2, 3] {
            for wind in [1.0f64, -1.0] {
                let coeffs =
                    radau_project(degree, wind, f, x_left, h).map_err(|e| e.to_string())?;
                let (xi_out, x_out) = if wind > 0.0 { (1.0, x_left + h) } else { (-1.0, x_left) };
                let mut basis = vec![0.0; degree + 1];
                legendre_all(xi_out, &mut basis);
                let trace: f64 = coeffs.iter().zip(&basis).map(|(c, p)| c * p).sum();
                if (trace - f(x_out)).abs() > 1e-12 {
                    return Err(format!(
                        "degree {degree} wind {wind}: outflow trace off by {:.3e}",
                        (trace - f(x_out)).abs()
                    ));
                }
                for m in 0..degree {
                    let mut moment = 0.0;
                    for (&xi, &wq) in rule.nodes.iter().zip(&rule.weights) {
                        let x = x_left + 0.5 * h * (xi + 1.0);
                        legendre_all(xi, &mut basis);
                        let p: f64 = coeffs.iter().zip(&basis).map(|(c, pb)| c * pb).sum();
                        moment += wq * (f(x) - p) * basis[m];
                    }
                    if moment.abs() > 1e-12 {
                        return Err(format!(
                            "degree {degree} wind {wind}: residual has mode-{m} mass {moment:.3e}"
                        ));
                    }
                }
            }
        }
        Ok("trace matching and lower-moment orthogonality hold for degrees 1-3".to_string())
    })();
    Check { name, outcome }
}

fn collision_inverse(settings: &VerifySettings) -> Check {
    let name = "collision inverse";
    let outcome = (|| {
        let quad = AngularQuadrature::gauss(8).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0xc0111);
        for eps in [1.0, 1e-1, 1e-3] {
            let spec = ProblemSpec {
                sigma_t: ScalarFn::new(|x: f64| 2.0 + 0.5 * (3.0 * x).sin()),
                sigma_a: ScalarFn::new(|x: f64| 1.0 + 0.25 * x.cos()),
                epsilon: eps,
                source: ScalarFn::constant(0.0),
                boundary_left: ScalarFn::constant(0.0),
                boundary_right: ScalarFn::constant(0.0),
            };
            for _ in 0..20 {
                let x = rng.gen_range(-1.0..1.0);
                let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (st, sa) = spec.cross_sections_at(x).map_err(|e| e.to_string())?;
                let qv = apply_collision(&spec, &quad, &v, x).map_err(|e| e.to_string())?;
                let back =
                    apply_collision_inverse(&spec, &quad, &qv, x).map_err(|e| e.to_string())?;
                // recovering the mean from the large anisotropic part of Qv
                // amplifies roundoff by sigma_t / (eps^2 sigma_a)
                let tol = (64.0 * f64::EPSILON * st / (eps * eps * sa)).max(1e-14);
                for (a, b) in v.iter().zip(&back) {
                    if (a - b).abs() > tol {
                        return Err(format!(
                            "eps {eps}: inverse misses by {:.3e} (allowed {tol:.3e})",
                            (a - b).abs()
                        ));
                    }
                }
            }
        }
        Ok("Q^-1 Q = I on random data for eps down to 1e-3".to_string())
    })();
    Check { name, outcome }
}

fn anisotropy_scaling() -> Check {
    let name = "anisotropy scaling";
    let outcome = (|| {
        let spec = ProblemSpec {
            sigma_t: ScalarFn::constant(2.0),
            sigma_a: ScalarFn::constant(1.0),
            epsilon: 1.0,
            source: ScalarFn::bump(0.125),
            boundary_left: ScalarFn::constant(0.1),
            boundary_right: ScalarFn::constant(0.0),
        };
        let mesh = Mesh1D::uniform(-1.0, 1.0, 8)
            .and_then(|m| m.refined_to(3))
            .map_err(|e| e.to_string())?;
        let quad = AngularQuadrature::gauss(16).map_err(|e| e.to_string())?;
        let report = apriori_scaling_study(
            &spec,
            &mesh,
            &quad,
            1,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            &SolveOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        if !(0.8..=1.2).contains(&report.slope) {
            return Err(format!("anisotropy slope {:.3} outside [0.8, 1.2]", report.slope));
        }
        let max = report.mean_norm.iter().cloned().fold(f64::MIN, f64::max);
        let min = report.mean_norm.iter().cloned().fold(f64::MAX, f64::min);
        if max / min >= 2.0 {
            return Err(format!("mean-flux norm varies by {:.2}x across eps", max / min));
        }
        Ok(format!(
            "anisotropy scales like eps^{:.2} while the mean flux varies {:.2}x",
            report.slope,
            max / min
        ))
    })();
    Check { name, outcome }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_settings() -> VerifySettings {
        VerifySettings {
            seed: 0x5eed,
            h_nodes: 64,
            h_tolerance: 1e-6,
            perturb_quadrature: false,
        }
    }

    #[test]
    #[ignore = "diagnostic: print weight-table moment gaps per grid size"]
    fn dump_weight_table_resolution() {
        for n in [8usize, 16, 32, 64, 128] {
            let table = compute_h_function(n, 1e-12).unwrap();
            println!(
                "n={n:3}: |m0-1|={:.3e} |m1-ref|={:.3e}",
                (table.w_moment(0) - 1.0).abs(),
                (table.w_moment(1) - 0.710446089598763).abs()
            );
        }
    }

    #[test]
    fn clean_build_passes_every_check() {
        let (text, passed) = run(&default_settings());
        assert!(passed, "{text}");
        assert_eq!(text.matches("PASS ").count(), 6, "{text}");
        assert!(text.contains("verification: 6 of 6 checks passed"));
    }

    #[test]
    fn perturbed_weight_trips_the_exactness_check() {
        let settings = VerifySettings {
            perturb_quadrature: true,
            ..default_settings()
        };
        let (text, passed) = run(&settings);
        assert!(!passed);
        assert!(text.contains("FAIL quadrature exactness"), "{text}");
    }

    #[test]
    fn under_resolved_weight_table_cannot_meet_a_tight_tolerance() {
        let settings = VerifySettings {
            h_nodes: 16,
            h_tolerance: 1e-12,
            ..default_settings()
        };
        let (text, passed) = run(&settings);
        assert!(!passed);
        assert!(text.contains("FAIL boundary-layer weight moments"), "{text}");
    }
}
