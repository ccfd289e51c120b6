//! Experiment configuration: JSON in, typed and checked before any work.

use std::path::PathBuf;
use std::sync::Arc;

use lamelab_core::fields::{
    AffineScalar, CoefficientPair, ConstantField, DisplacementField, Polynomial, PolynomialField, VectorField,
};
use lamelab_core::geometry::Grid3;
use lamelab_core::quadrature::ProductBallRule;
use lamelab_core::solutions::{
    harmonic_gradient_field, kelvin_field, solve_dirichlet, GridSolution, HarmonicGradient, KelvinSource,
};
use lamelab_core::{carleman, LabError, Point};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    EllipticityCheck(EllipticityConfig),
    FactorizationCheck(FactorizationConfig),
    CarlemanScan(CarlemanConfig),
    ThreeSpheres(ThreeSpheresConfig),
    IterationPlan(PlanConfig),
    Vanishing(VanishingConfig),
    CauchyStability(CauchyConfig),
    SolverConvergence(ConvergenceConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EllipticityCheck(_) => "ellipticity-check",
            Self::FactorizationCheck(_) => "factorization-check",
            Self::CarlemanScan(_) => "carleman-scan",
            Self::ThreeSpheres(_) => "three-spheres",
            Self::IterationPlan(_) => "iteration-plan",
            Self::Vanishing(_) => "vanishing",
            Self::CauchyStability(_) => "cauchy-stability",
            Self::SolverConvergence(_) => "solver-convergence",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::FactorizationCheck(c) => c.seed,
            Self::ThreeSpheres(c) => c.seed,
            Self::CauchyStability(c) => c.seed,
            Self::SolverConvergence(c) => c.seed,
            _ => None,
        }
    }

    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Self::EllipticityCheck(c) => c.out.as_ref(),
            Self::FactorizationCheck(c) => c.out.as_ref(),
            Self::CarlemanScan(c) => c.out.as_ref(),
            Self::ThreeSpheres(c) => c.out.as_ref(),
            Self::IterationPlan(c) => c.out.as_ref(),
            Self::Vanishing(c) => c.out.as_ref(),
            Self::CauchyStability(c) => c.out.as_ref(),
            Self::SolverConvergence(c) => c.out.as_ref(),
        }
    }
}

/// Lamé moduli.
#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        mu: f64,
        lambda: f64,
    },
    /// `mu = 1 + 0.2 sin x1`, `lambda = 0.5 + 0.1 x2`.
    SmoothVariable,
    /// `mu = base + slope . x` and the same form for `lambda`.
    Affine {
        mu: AffineSpec,
        lambda: AffineSpec,
        alpha0: f64,
        beta0: f64,
    },
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self::Constant { mu: 1.0, lambda: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub base: f64,
    pub slope: [f64; 3],
}

impl CoefficientSpec {
    pub fn build(&self) -> Result<CoefficientPair, Failure> {
        let pair = match self {
            Self::Constant { mu, lambda } => CoefficientPair::constant(*mu, *lambda),
            Self::SmoothVariable => Ok(CoefficientPair::smooth_variable()),
            Self::Affine {
                mu,
                lambda,
                alpha0,
                beta0,
            } => {
                let affine = |a: &AffineSpec| {
                    Arc::new(AffineScalar {
                        base: a.base,
                        slope: Vector3::from(a.slope),
                    })
                };
                CoefficientPair::new(affine(mu), affine(lambda), *alpha0, *beta0, "affine")
            }
        };
        pair.map_err(config_error)
    }

    fn constant_moduli(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Constant { mu, lambda } => Some((mu, lambda)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exponents: [u32; 3],
    pub coefficient: f64,
}

/// Field the experiment runs on.
#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolutionSpec {
    /// Kelvin solution of the constant-coefficient system; needs constant moduli.
    Kelvin { source: [f64; 3], direction: [f64; 3] },
    /// Gradient of a harmonic polynomial; `x1 x2 x3` when `terms` is absent.
    HarmonicGradient {
        #[serde(default)]
        terms: Option<Vec<Term>>,
    },
    Constant { value: [f64; 3] },
    /// `(4 (r - a)(b - r) / (b - a)^2)^3 * direction` on `a < |x| < b`.
    RadialBump { inner: f64, outer: f64, direction: [f64; 3] },
    /// Random polynomial field of the given degree drawn from the seed.
    Polynomial { degree: u32, seed: u64 },
    /// Finite-difference solution on the cube `[-half_width, half_width]^3`
    /// with the analytic `boundary` field as Dirichlet data; values only.
    FdDirichlet {
        boundary: Box<SolutionSpec>,
        half_width: f64,
        h: f64,
        #[serde(default = "default_fd_tol")]
        tol: f64,
    },
}

fn default_fd_tol() -> f64 {
    1e-10
}

pub enum Solution {
    Analytic(Arc<dyn DisplacementField>),
    Grid(GridSolution),
}

impl Solution {
    pub fn values(&self) -> &dyn VectorField {
        match self {
            Self::Analytic(u) => u.as_ref(),
            Self::Grid(g) => g,
        }
    }

    pub fn analytic(&self, what: &str) -> Result<&dyn DisplacementField, Failure> {
        match self {
            Self::Analytic(u) => Ok(u.as_ref()),
            Self::Grid(_) => Err(Failure::Config(format!(
                "{what} needs exact derivatives; fd_dirichlet solutions carry values only"
            ))),
        }
    }
}

impl SolutionSpec {
    /// Build the field. `study_radius` is the radius the field must be
    /// regular in.
    pub fn build(&self, coeffs: &CoefficientSpec, study_radius: f64, quiet: bool) -> Result<Solution, Failure> {
        let analytic = |u: Arc<dyn DisplacementField>| Ok(Solution::Analytic(u));
        match self {
            Self::Kelvin { source, direction } => {
                let (mu, lambda) = coeffs.constant_moduli().ok_or_else(|| {
                    Failure::Config("the Kelvin solution needs the constant coefficient family".into())
                })?;
                let src = KelvinSource::new(Point::from(*source), Vector3::from(*direction), mu, lambda, study_radius)
                    .map_err(config_error)?;
                analytic(Arc::new(kelvin_field(src)))
            }
            Self::HarmonicGradient { terms } => {
                let hg = match terms {
                    None => HarmonicGradient::x1x2x3(),
                    Some(t) => HarmonicGradient::new(Polynomial::from_terms(t.iter().map(|t| (t.exponents, t.coefficient))))
                        .map_err(config_error)?,
                };
                analytic(Arc::new(harmonic_gradient_field(&hg)))
            }
            Self::Constant { value } => analytic(Arc::new(ConstantField(Vector3::from(*value)))),
            Self::RadialBump { inner, outer, direction } => {
                analytic(Arc::new(carleman::radial_bump(*inner, *outer, Vector3::from(*direction)).map_err(config_error)?))
            }
            Self::Polynomial { degree, seed } => {
                analytic(Arc::new(PolynomialField::random(*degree, &mut ChaCha8Rng::seed_from_u64(*seed))))
            }
            Self::FdDirichlet {
                boundary,
                half_width,
                h,
                tol,
            } => {
                if !(*half_width >= study_radius) {
                    return Err(Failure::Config(format!(
                        "fd_dirichlet half_width {half_width} must cover the study radius {study_radius}"
                    )));
                }
                let coefficients = coeffs.build()?;
                let data = boundary.build(coeffs, *half_width * 3f64.sqrt(), quiet)?;
                let grid = Grid3::cube(-half_width, *half_width, *h).map_err(config_error)?;
                if !quiet {
                    eprintln!("solving the Dirichlet problem on {} nodes", grid.len());
                }
                let sol = solve_dirichlet(&coefficients, &lamelab_core::fields::ZeroField, data.values(), grid, *tol)
                    .map_err(Failure::from)?;
                Ok(Solution::Grid(sol))
            }
        }
    }
}

/// Product rule on balls and annuli.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub n_r: usize,
    pub n_p: usize,
    pub n_a: usize,
    #[serde(default = "one")]
    pub panels: usize,
}

fn one() -> usize {
    1
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            n_r: 8,
            n_p: 10,
            n_a: 20,
            panels: 1,
        }
    }
}

impl QuadratureSpec {
    pub fn build(&self) -> Result<ProductBallRule, Failure> {
        ProductBallRule::new(self.n_r, self.n_p, self.n_a)
            .and_then(|r| r.with_panels(self.panels))
            .map_err(config_error)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EllipticityConfig {
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Field whose declared derivatives are compared with central differences.
    #[serde(default)]
    pub solution: Option<SolutionSpec>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_consistency_tol")]
    pub consistency_tol: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_samples() -> usize {
    1000
}

fn default_step() -> f64 {
    1e-4
}

fn default_consistency_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FactorizationConfig {
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default = "ten")]
    pub fields: usize,
    #[serde(default = "three")]
    pub degree: u32,
    #[serde(default = "fifty")]
    pub probes: usize,
    #[serde(default = "unit")]
    pub radius: f64,
    #[serde(default = "default_vector_tol")]
    pub vector_tol: f64,
    #[serde(default = "default_scalar_tol")]
    pub scalar_tol: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn ten() -> usize {
    10
}

fn three() -> u32 {
    3
}

fn fifty() -> usize {
    50
}

fn unit() -> f64 {
    1.0
}

fn default_vector_tol() -> f64 {
    1e-8
}

fn default_scalar_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CarlemanConfig {
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub theta: f64,
    pub r_out: f64,
    pub s: f64,
    pub taus: Vec<f64>,
    /// Defaults to the radial bump on `(theta, r_out)` along `x1`.
    #[serde(default)]
    pub solution: Option<SolutionSpec>,
    #[serde(default = "carleman_rule")]
    pub quadrature: QuadratureSpec,
    /// Fail when `max ratio / min ratio` over the scan exceeds this.
    #[serde(default)]
    pub ratio_spread_bound: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn carleman_rule() -> QuadratureSpec {
    QuadratureSpec {
        n_r: 8,
        n_p: 8,
        n_a: 16,
        panels: 8,
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct KelvinFamily {
    pub count: usize,
    /// Source distances are drawn uniformly from this range.
    pub distance: [f64; 2],
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ThreeSpheresConfig {
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub radii: [f64; 3],
    #[serde(default)]
    pub solution: Option<SolutionSpec>,
    /// Random Kelvin sources with random unit directions, drawn from the seed.
    #[serde(default)]
    pub kelvin_family: Option<KelvinFamily>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_sigma_samples")]
    pub sigma_samples: usize,
    #[serde(default = "yes")]
    pub require_nondegenerate: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_sigma_samples() -> usize {
    99
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub e1: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    #[serde(default = "unit")]
    pub c_tilde: f64,
    /// Positive, decreasing.
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "R_out")]
    pub r_out: f64,
    pub eps: f64,
    pub s: f64,
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    #[serde(default)]
    pub decay: Option<DecaySpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SlopeExpectation {
    pub value: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VanishingConfig {
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub solution: SolutionSpec,
    #[serde(default)]
    pub center: [f64; 3],
    /// Positive, increasing.
    pub radii: Vec<f64>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub expect_slope: Option<SlopeExpectation>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaRuleSpec {
    Fixed { beta: f64 },
    Discrepancy { lo: f64, hi: f64, ratio: f64 },
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CauchyConfig {
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub solution: SolutionSpec,
    pub theta: f64,
    pub r_out: f64,
    #[serde(default = "unit")]
    pub s: f64,
    /// Relative noise levels, strictly decreasing.
    pub zeta_list: Vec<f64>,
    pub h: f64,
    pub beta_rule: BetaRuleSpec,
    #[serde(default = "default_cauchy_tol")]
    pub tol: f64,
    /// Angular resolution `[n_p, n_a]` of the data on the inner sphere.
    #[serde(default = "default_data_rule")]
    pub data_rule: [usize; 2],
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub require_holder: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_cauchy_tol() -> f64 {
    3e-3
}

fn default_data_rule() -> [usize; 2] {
    [16, 32]
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "smooth")]
    pub coefficients: CoefficientSpec,
    /// Grid spacings on the unit box, decreasing.
    pub spacings: Vec<f64>,
    #[serde(default = "three")]
    pub degree: u32,
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    /// Fail when an error ratio between successive spacings leaves this range.
    #[serde(default)]
    pub ratio_range: Option<[f64; 2]>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn smooth() -> CoefficientSpec {
    CoefficientSpec::SmoothVariable
}

fn default_solver_tol() -> f64 {
    1e-11
}

pub fn config_error(e: LabError) -> Failure {
    Failure::Config(e.to_string())
}

/// JSON schema of the configuration file.
pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("schema serializes")
}
