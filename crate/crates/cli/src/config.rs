//! Experiment definitions: a declarative document mapping onto the solver's
//! problem, mesh, discretization, and study types.
//!
//! The primary encoding is TOML; a file ending in `.json` is read as JSON
//! with the identical schema. Validation collects every violated constraint
//! so a bad file is diagnosed in one pass.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use slab_transport::analysis::{BlendPolicy, NormKind, StudyConfig};
use slab_transport::{AngularQuadrature, Mesh1D, ProblemSpec, ScalarFn, SolveOptions};

use crate::expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: Domain,
    pub mesh: MeshSection,
    pub discretization: Discretization,
    pub epsilon: EpsilonSection,
    pub coefficients: Coefficients,
    pub source: SourceSpec,
    pub boundary: BoundarySection,
    #[serde(default)]
    pub norm: NormChoice,
    #[serde(default)]
    pub blend: BlendSpec,
    #[serde(default)]
    pub solver: SolverSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub base_cells: usize,
    /// Dyadic refinement indices of the base mesh, ascending.
    pub levels: Vec<u32>,
    pub reference_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    /// Polynomial degree per cell.
    pub k: usize,
    /// Number of ordinates; must be even so no direction is tangential.
    pub quadrature_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSection {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub sigma_t: CoefficientSpec,
    pub sigma_a: CoefficientSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    Constant { value: f64 },
    /// An expression over the position variable `x`.
    Expression { expr: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Zero,
    Constant { value: f64 },
    /// The unit-mass mollifier supported on |x| < radius.
    Bump { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub left: BoundarySpec,
    pub right: BoundarySpec,
}

/// Incoming intensity on one side as a function of the direction cosine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Constant { value: f64 },
    /// c0 + c1 * mu.
    Affine { c0: f64, c1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    #[default]
    L2,
    Q,
    Triple,
}

impl NormChoice {
    pub fn kind(self) -> NormKind {
        match self {
            NormChoice::L2 => NormKind::L2,
            NormChoice::Q => NormKind::Q,
            NormChoice::Triple => NormKind::Triple,
        }
    }
}

/// Boundary-data blending. `lambda_star` and `sweep` take the exponent `q`
/// of the resolution weight eps^2/(eps^2 + h^(2q)); it defaults to k + 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlendSpec {
    #[default]
    None,
    Fixed {
        lambda: f64,
    },
    LambdaStar {
        q: Option<u32>,
    },
    Sweep {
        grid: Vec<f64>,
        q: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub accelerate: bool,
    pub krylov_wrap: bool,
    pub residual_target: f64,
    /// Grid size of the boundary-layer weight table used when blending.
    pub h_table_nodes: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            accelerate: d.accelerate,
            krylov_wrap: d.krylov_wrap,
            residual_target: d.residual_target,
            h_table_nodes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: String,
}

impl Config {
    /// Parse a document; the encoding follows the file extension.
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let json = path.extension().is_some_and(|ext| ext == "json");
        Self::parse(&text, json).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }

    /// Every violated constraint, empty when the document is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.domain.a.is_finite() && self.domain.b.is_finite() && self.domain.a < self.domain.b)
        {
            errs.push(format!(
                "domain must satisfy a < b with finite endpoints, got ({}, {})",
                self.domain.a, self.domain.b
            ));
        }
        if self.mesh.base_cells == 0 {
            errs.push("mesh needs at least one base cell".into());
        }
        if self.mesh.levels.is_empty() {
            errs.push("levels list must not be empty".into());
        } else {
            if self.mesh.levels.windows(2).any(|p| p[0] >= p[1]) {
                errs.push(format!(
                    "levels must be strictly ascending, got {:?}",
                    self.mesh.levels
                ));
            }
            let finest = *self.mesh.levels.iter().max().expect("nonempty");
            if self.mesh.reference_level <= finest {
                errs.push(format!(
                    "reference_level {} must exceed the finest level {finest}",
                    self.mesh.reference_level
                ));
            }
        }
        if self.discretization.quadrature_size == 0 || self.discretization.quadrature_size % 2 != 0
        {
            errs.push(format!(
                "quadrature_size must be a positive even number, got {}",
                self.discretization.quadrature_size
            ));
        }
        if self.epsilon.values.is_empty() {
            errs.push("epsilon list must not be empty".into());
        }
        for &eps in &self.epsilon.values {
            if !eps.is_finite() || eps <= 0.0 || eps > 1.0 {
                errs.push(format!("epsilon must lie in (0,1], got {eps}"));
            }
        }
        for (name, spec) in [
            ("sigma_t", &self.coefficients.sigma_t),
            ("sigma_a", &self.coefficients.sigma_a),
        ] {
            match spec {
                CoefficientSpec::Constant { value } if !value.is_finite() => {
                    errs.push(format!("{name} must be finite, got {value}"));
                }
                CoefficientSpec::Expression { expr: text } => {
                    if let Err(e) = expr::compile(text) {
                        errs.push(format!("{name}: {e}"));
                    }
                }
                _ => {}
            }
        }
        match &self.source {
            SourceSpec::Bump { radius } if !(radius.is_finite() && *radius > 0.0) => {
                errs.push(format!("bump radius must be positive, got {radius}"));
            }
            SourceSpec::Constant { value } if !value.is_finite() => {
                errs.push(format!("source value must be finite, got {value}"));
            }
            _ => {}
        }
        match &self.blend {
            BlendSpec::None => {}
            BlendSpec::Fixed { lambda } => {
                if !(*lambda >= 0.0 && *lambda <= 1.0) {
                    errs.push(format!("blend weight must lie in [0,1], got {lambda}"));
                }
            }
            BlendSpec::LambdaStar { q } => {
                if q == &Some(0) {
                    errs.push("blend exponent q must be at least 1".into());
                }
            }
            BlendSpec::Sweep { grid, q } => {
                if grid.is_empty() {
                    errs.push("sweep grid must not be empty".into());
                }
                for &lambda in grid {
                    if !(lambda >= 0.0 && lambda <= 1.0) {
                        errs.push(format!("sweep weights must lie in [0,1], got {lambda}"));
                    }
                }
                if q == &Some(0) {
                    errs.push("blend exponent q must be at least 1".into());
                }
            }
        }
        if !(self.solver.tolerance.is_finite() && self.solver.tolerance > 0.0) {
            errs.push(format!(
                "solver tolerance must be positive, got {}",
                self.solver.tolerance
            ));
        }
        if self.solver.max_iterations == 0 {
            errs.push("solver needs at least one iteration".into());
        }
        if !(self.solver.residual_target.is_finite() && self.solver.residual_target > 0.0) {
            errs.push(format!(
                "residual target must be positive, got {}",
                self.solver.residual_target
            ));
        }
        if self.solver.h_table_nodes < 2 {
            errs.push(format!(
                "the weight table needs at least two nodes, got {}",
                self.solver.h_table_nodes
            ));
        }
        if self.output.path.is_empty() {
            errs.push("output path must not be empty".into());
        }
        errs
    }

    /// The violations joined into one diagnostic, or Ok.
    pub fn validated(self) -> Result<Self, String> {
        let errs = self.violations();
        if errs.is_empty() {
            return Ok(self);
        }
        let mut msg = String::from("invalid config:");
        for e in &errs {
            let _ = write!(msg, "\n  - {e}");
        }
        Err(msg)
    }

    pub fn base_mesh(&self) -> slab_transport::Result<Mesh1D> {
        Mesh1D::uniform(self.domain.a, self.domain.b, self.mesh.base_cells)
    }

    pub fn angular(&self) -> slab_transport::Result<AngularQuadrature> {
        AngularQuadrature::gauss(self.discretization.quadrature_size)
    }

    pub fn problem_spec(&self, epsilon: f64) -> Result<ProblemSpec, String> {
        let coefficient = |spec: &CoefficientSpec| match spec {
            CoefficientSpec::Constant { value } => Ok(ScalarFn::constant(*value)),
            CoefficientSpec::Expression { expr: text } => expr::compile(text),
        };
        let boundary = |spec: &BoundarySpec| match *spec {
            BoundarySpec::Constant { value } => ScalarFn::constant(value),
            BoundarySpec::Affine { c0, c1 } => ScalarFn::new(move |mu: f64| c0 + c1 * mu),
        };
        Ok(ProblemSpec {
            sigma_t: coefficient(&self.coefficients.sigma_t)?,
            sigma_a: coefficient(&self.coefficients.sigma_a)?,
            epsilon,
            source: match self.source {
                SourceSpec::Zero => ScalarFn::constant(0.0),
                SourceSpec::Constant { value } => ScalarFn::constant(value),
                SourceSpec::Bump { radius } => ScalarFn::bump(radius),
            },
            boundary_left: boundary(&self.boundary.left),
            boundary_right: boundary(&self.boundary.right),
        })
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            accelerate: self.solver.accelerate,
            krylov_wrap: self.solver.krylov_wrap,
            residual_target: self.solver.residual_target,
        }
    }

    /// The blend exponent, defaulting to degree + 1.
    pub fn blend_exponent(&self) -> u32 {
        let q = match self.blend {
            BlendSpec::LambdaStar { q } | BlendSpec::Sweep { q, .. } => q,
            _ => None,
        };
        q.unwrap_or(self.discretization.k as u32 + 1)
    }

    /// Study-level blend policy; sweeps are driven separately.
    pub fn blend_policy(&self) -> Result<BlendPolicy, String> {
        match self.blend {
            BlendSpec::None => Ok(BlendPolicy::None),
            BlendSpec::Fixed { lambda } => Ok(BlendPolicy::Fixed(lambda)),
            BlendSpec::LambdaStar { .. } => Ok(BlendPolicy::LambdaStar {
                q: self.blend_exponent(),
            }),
            BlendSpec::Sweep { .. } => {
                Err("a sweep blend only drives the sweep-lambda command".into())
            }
        }
    }

    /// Study driver over one contiguous level range; the rate column assumes
    /// successive widths halve.
    pub fn study_config(&self) -> Result<StudyConfig, String> {
        if self.mesh.levels.windows(2).any(|p| p[1] != p[0] + 1) {
            return Err(format!(
                "study levels must increase by one so successive widths halve, got {:?}",
                self.mesh.levels
            ));
        }
        Ok(StudyConfig {
            degree: self.discretization.k,
            first_level: self.mesh.levels[0],
            nlevels: self.mesh.levels.len() as u32,
            reference_level: self.mesh.reference_level,
            norm: self.norm.kind(),
            blend: self.blend_policy()?,
            solve: self.solve_options(),
            h_nodes: self.solver.h_table_nodes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
[domain]
a = -1.0
b = 1.0

[mesh]
base_cells = 8
levels = [0, 1, 2]
reference_level = 5

[discretization]
k = 1
quadrature_size = 8

[epsilon]
values = [1.0, 1e-3]

[coefficients]
sigma_t = { kind = "constant", value = 2.0 }
sigma_a = { kind = "constant", value = 1.0 }

[source]
kind = "bump"
radius = 0.125

[boundary.left]
kind = "constant"
value = 0.1

[boundary.right]
kind = "constant"
value = 0.0

[output]
path = "study.csv"
"#;

    #[test]
    fn example_parses_and_validates() {
        let config = Config::parse(EXAMPLE, false).unwrap();
        assert_eq!(config.violations(), Vec::<String>::new());
        assert_eq!(config.mesh.levels, vec![0, 1, 2]);
        assert_eq!(config.norm, NormChoice::L2);
        assert_eq!(config.blend, BlendSpec::None);
        assert_eq!(config.blend_exponent(), 2);
        let spec = config.problem_spec(1e-3).unwrap();
        assert_eq!(spec.epsilon, 1e-3);
        assert_eq!(spec.sigma_t.eval(0.3), 2.0);
    }

    #[test]
    fn roundtrip_is_identity_in_both_encodings() {
        let config = Config::parse(EXAMPLE, false).unwrap();
        let toml_text = toml::to_string(&config).unwrap();
        assert_eq!(Config::parse(&toml_text, false).unwrap(), config);
        let json_text = serde_json::to_string_pretty(&config).unwrap();
        assert_eq!(Config::parse(&json_text, true).unwrap(), config);
    }

    #[test]
    fn every_violation_is_reported() {
        let mut config = Config::parse(EXAMPLE, false).unwrap();
        config.epsilon.values = vec![0.0];
        config.discretization.quadrature_size = 5;
        config.mesh.levels = vec![2, 1];
        let errs = config.violations();
        assert!(errs.iter().any(|e| e.contains("epsilon must lie in (0,1]")));
        assert!(errs.iter().any(|e| e.contains("quadrature_size")));
        assert!(errs.iter().any(|e| e.contains("strictly ascending")));
        let msg = config.validated().unwrap_err();
        assert!(msg.matches("\n  - ").count() >= 3, "{msg}");
    }

    #[test]
    fn reference_must_exceed_finest_level() {
        let mut config = Config::parse(EXAMPLE, false).unwrap();
        config.mesh.reference_level = 2;
        assert!(config
            .violations()
            .iter()
            .any(|e| e.contains("reference_level")));
    }

    #[test]
    fn expression_coefficients_compile_or_report() {
        let mut config = Config::parse(EXAMPLE, false).unwrap();
        config.coefficients.sigma_t = CoefficientSpec::Expression {
            expr: "2 + 0.1*cos(x)".into(),
        };
        assert!(config.violations().is_empty());
        let spec = config.problem_spec(1.0).unwrap();
        assert!((spec.sigma_t.eval(0.4) - (2.0 + 0.1 * 0.4f64.cos())).abs() <= 1e-15);

        config.coefficients.sigma_a = CoefficientSpec::Expression { expr: "1 + y".into() };
        assert!(config.violations().iter().any(|e| e.contains("sigma_a")));
    }

    #[test]
    fn affine_boundary_and_blend_mappings() {
        let mut config = Config::parse(EXAMPLE, false).unwrap();
        config.boundary.left = BoundarySpec::Affine { c0: 0.1, c1: 0.01 };
        let spec = config.problem_spec(1e-3).unwrap();
        assert!((spec.boundary_left.eval(0.5) - 0.105).abs() <= 1e-15);

        config.blend = BlendSpec::LambdaStar { q: None };
        assert!(matches!(
            config.blend_policy().unwrap(),
            BlendPolicy::LambdaStar { q: 2 }
        ));
        config.blend = BlendSpec::Sweep { grid: vec![0.0, 0.5], q: Some(3) };
        assert!(config.blend_policy().is_err());
        assert_eq!(config.blend_exponent(), 3);
    }

    #[test]
    fn study_needs_contiguous_levels() {
        let mut config = Config::parse(EXAMPLE, false).unwrap();
        config.mesh.levels = vec![0, 2, 4];
        assert!(config.violations().is_empty()); // legal for sweeps
        assert!(config.study_config().is_err());
    }
}
