//! Python bindings for the Lamé unique continuation laboratory.

use std::sync::Arc;

use lamelab_core::carleman::{self, CarlemanWeights};
use lamelab_core::cauchy::{self, StabilitySettings};
use lamelab_core::fields::{self, CoefficientPair, ConstantField, DisplacementField, Polynomial, PolynomialField, VectorField};
use lamelab_core::geometry::{BallSpec, Grid3};
use lamelab_core::lame;
use lamelab_core::quadrature::{self, ProductBallRule};
use lamelab_core::solutions::{self, GridSolution, HarmonicGradient, KelvinSource};
use lamelab_core::three_spheres::{self as ts, ThreeRadii, ThreeSpheresReport};
use lamelab_core::{LabError, Point};
use nalgebra::Vector3;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pythonize::{depythonize, pythonize};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

type V3 = (f64, f64, f64);

fn err(e: LabError) -> PyErr {
    let m = e.to_string();
    match e {
        LabError::NonFinite { .. } | LabError::WeightOverflow { .. } | LabError::Singularity(_) => {
            PyArithmeticError::new_err(m)
        }
        LabError::NotConverged { .. } => PyRuntimeError::new_err(m),
        LabError::Io(_) | LabError::Json(_) => PyOSError::new_err(m),
        _ => PyValueError::new_err(m),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    pythonize(py, v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn pt(x: V3) -> Point {
    Point::new(x.0, x.1, x.2)
}

fn tup(v: Vector3<f64>) -> V3 {
    (v.x, v.y, v.z)
}

/// Lamé moduli `mu(x)`, `lambda(x)` with their ellipticity bounds.
#[pyclass(frozen, name = "Coefficients")]
struct PyCoefficients(CoefficientPair);

#[pymethods]
impl PyCoefficients {
    #[staticmethod]
    #[pyo3(signature = (mu = 1.0, lam = 1.0))]
    fn constant(mu: f64, lam: f64) -> PyResult<Self> {
        CoefficientPair::constant(mu, lam).map(Self).map_err(err)
    }

    #[staticmethod]
    fn smooth_variable() -> Self {
        Self(CoefficientPair::smooth_variable())
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    fn mu(&self, x: V3) -> f64 {
        self.0.mu_at(&pt(x))
    }

    fn lam(&self, x: V3) -> f64 {
        self.0.lambda_at(&pt(x))
    }

    /// Sample the ball and report the minima of mu and 2 mu + lambda.
    #[pyo3(signature = (radius, center = (0.0, 0.0, 0.0), samples = 1000))]
    fn validate<'py>(&self, py: Python<'py>, radius: f64, center: V3, samples: usize) -> PyResult<Bound<'py, PyAny>> {
        let ball = BallSpec::new(pt(center), radius).map_err(err)?;
        to_py(py, &fields::validate_ellipticity(&self.0, &ball, samples).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Coefficients({})", self.0.label())
    }
}

#[derive(Clone)]
enum Inner {
    Analytic(Arc<dyn DisplacementField>),
    Grid(Arc<GridSolution>),
}

/// A displacement field: closed form with exact derivatives, or a grid
/// solution carrying values only.
#[pyclass(frozen, name = "Field")]
struct PyField(Inner);

impl PyField {
    fn analytic(u: impl DisplacementField + 'static) -> Self {
        Self(Inner::Analytic(Arc::new(u)))
    }

    fn values(&self) -> &dyn VectorField {
        match &self.0 {
            Inner::Analytic(u) => u.as_ref(),
            Inner::Grid(g) => g.as_ref(),
        }
    }

    fn exact(&self) -> PyResult<&dyn DisplacementField> {
        match &self.0 {
            Inner::Analytic(u) => Ok(u.as_ref()),
            Inner::Grid(_) => Err(PyValueError::new_err("grid solutions carry values only, not derivatives")),
        }
    }
}

#[pymethods]
impl PyField {
    /// Kelvin point-force solution of the constant-coefficient system.
    #[staticmethod]
    #[pyo3(signature = (source, direction, mu = 1.0, lam = 1.0, study_radius = 1.0))]
    fn kelvin(source: V3, direction: V3, mu: f64, lam: f64, study_radius: f64) -> PyResult<Self> {
        let src = KelvinSource::new(pt(source), pt(direction), mu, lam, study_radius).map_err(err)?;
        Ok(Self::analytic(solutions::kelvin_field(src)))
    }

    /// Gradient of a harmonic polynomial given as `[((i, j, k), c), ...]`;
    /// defaults to x1 x2 x3.
    #[staticmethod]
    #[pyo3(signature = (terms = None))]
    fn harmonic_gradient(terms: Option<Vec<([u32; 3], f64)>>) -> PyResult<Self> {
        let hg = match terms {
            None => HarmonicGradient::x1x2x3(),
            Some(t) => HarmonicGradient::new(Polynomial::from_terms(t)).map_err(err)?,
        };
        Ok(Self::analytic(solutions::harmonic_gradient_field(&hg)))
    }

    #[staticmethod]
    fn constant(value: V3) -> Self {
        Self::analytic(ConstantField(pt(value)))
    }

    /// Smooth radial bump supported in `inner < |x| < outer`.
    #[staticmethod]
    fn radial_bump(inner: f64, outer: f64, direction: V3) -> PyResult<Self> {
        Ok(Self::analytic(carleman::radial_bump(inner, outer, pt(direction)).map_err(err)?))
    }

    #[staticmethod]
    fn polynomial(degree: u32, seed: u64) -> Self {
        Self::analytic(PolynomialField::random(degree, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    #[getter]
    fn is_grid(&self) -> bool {
        matches!(self.0, Inner::Grid(_))
    }

    fn value(&self, x: V3) -> V3 {
        tup(self.values().value(&pt(x)))
    }

    /// Full operator `div(mu (grad u + grad u^T)) + grad(lambda div u)`.
    fn lame(&self, coeffs: &PyCoefficients, x: V3) -> PyResult<V3> {
        Ok(tup(lame::apply_lame_full(&coeffs.0, self.exact()?, &pt(x))))
    }

    fn lame_principal(&self, coeffs: &PyCoefficients, x: V3) -> PyResult<V3> {
        Ok(tup(lame::apply_lame_principal(&coeffs.0, self.exact()?, &pt(x))))
    }

    /// Largest mismatch between declared and difference-quotient derivatives.
    #[pyo3(signature = (probes, step = 1e-4))]
    fn derivative_consistency(&self, probes: Vec<V3>, step: f64) -> PyResult<f64> {
        let probes: Vec<Point> = probes.into_iter().map(pt).collect();
        Ok(fields::derivative_consistency(self.exact()?, &probes, step))
    }

    /// Residuals of the factorized principal operator at the probes.
    fn factorization_residual<'py>(
        &self,
        py: Python<'py>,
        coeffs: &PyCoefficients,
        probes: Vec<V3>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let probes: Vec<Point> = probes.into_iter().map(pt).collect();
        let r = lame::factorization_residual(&coeffs.0, self.exact()?, &probes).map_err(err)?;
        to_py(py, &r)
    }

    fn __repr__(&self) -> &'static str {
        match self.0 {
            Inner::Analytic(_) => "Field(analytic)",
            Inner::Grid(_) => "Field(grid)",
        }
    }
}

/// Dirichlet problem on the cube `[-half_width, half_width]^3` with the
/// boundary values of `boundary` and zero body force.
#[pyfunction]
#[pyo3(signature = (coeffs, boundary, half_width, h, tol = 1e-10))]
fn solve_dirichlet(coeffs: &PyCoefficients, boundary: &PyField, half_width: f64, h: f64, tol: f64) -> PyResult<PyField> {
    let grid = Grid3::cube(-half_width, half_width, h).map_err(err)?;
    let sol = solutions::solve_dirichlet(&coeffs.0, &fields::ZeroField, boundary.values(), grid, tol).map_err(err)?;
    Ok(PyField(Inner::Grid(Arc::new(sol))))
}

/// Tensor-product quadrature on balls and annuli.
#[pyclass(frozen, name = "QuadratureRule")]
struct PyRule(ProductBallRule);

#[pymethods]
impl PyRule {
    #[new]
    #[pyo3(signature = (n_r = 8, n_p = 10, n_a = 20, panels = 1))]
    fn new(n_r: usize, n_p: usize, n_a: usize, panels: usize) -> PyResult<Self> {
        ProductBallRule::new(n_r, n_p, n_a)
            .and_then(|r| r.with_panels(panels))
            .map(Self)
            .map_err(err)
    }

    /// `int_{B(center, radius)} |u|^2`.
    #[pyo3(signature = (field, radius, center = (0.0, 0.0, 0.0)))]
    fn l2_mass(&self, field: &PyField, radius: f64, center: V3) -> PyResult<f64> {
        let ball = BallSpec::new(pt(center), radius).map_err(err)?;
        quadrature::l2_mass_ball(field.values(), &ball, &self.0).map_err(err)
    }
}

/// `psi = R^2 - |x|^2` and `phi = exp(s psi) - 1` on the annulus `theta < |x| < R`.
#[pyclass(frozen, name = "CarlemanWeights")]
struct PyWeights(CarlemanWeights);

#[pymethods]
impl PyWeights {
    #[new]
    fn new(r_out: f64, theta: f64, s: f64) -> PyResult<Self> {
        CarlemanWeights::new(r_out, theta, s).map(Self).map_err(err)
    }

    fn psi(&self, x: V3) -> f64 {
        self.0.psi(&pt(x))
    }

    fn phi(&self, x: V3) -> f64 {
        self.0.phi(&pt(x))
    }

    #[getter]
    fn phi_star(&self) -> f64 {
        self.0.phi_star()
    }

    fn sublevel_radius(&self, delta: f64) -> PyResult<f64> {
        self.0.sublevel_radius(delta).map_err(err)
    }

    /// Both sides of the Carleman inequality on the annulus, one dict per tau.
    fn scan<'py>(
        &self,
        py: Python<'py>,
        coeffs: &PyCoefficients,
        field: &PyField,
        taus: Vec<f64>,
        rule: &PyRule,
    ) -> PyResult<Bound<'py, PyAny>> {
        let rows = carleman::carleman_scan(&coeffs.0, &self.0, field.exact()?, &taus, &self.0.annulus(), &rule.0)
            .map_err(err)?;
        to_py(py, &rows)
    }
}

/// Masses on the three balls and the critical exponent sigma_star.
#[pyfunction]
fn three_spheres<'py>(
    py: Python<'py>,
    field: &PyField,
    radii: (f64, f64, f64),
    rule: &PyRule,
) -> PyResult<Bound<'py, PyAny>> {
    let r = ThreeRadii::new(radii.0, radii.1, radii.2).map_err(err)?;
    to_py(py, &ts::verify_three_spheres(field.values(), &r, &rule.0).map_err(err)?)
}

/// Envelope `C(sigma)` over reports given as `(n1, n2, nR)` triples.
#[pyfunction]
#[pyo3(signature = (masses, samples = 99))]
fn fit_sigma_c<'py>(py: Python<'py>, masses: Vec<(f64, f64, f64)>, samples: usize) -> PyResult<Bound<'py, PyAny>> {
    let reports: Vec<ThreeSpheresReport> =
        masses.into_iter().map(|(a, b, c)| ThreeSpheresReport::from_masses(a, b, c)).collect();
    to_py(py, &ts::fit_sigma_c(&reports, samples).map_err(err)?)
}

#[pyfunction]
fn iteration_plan<'py>(py: Python<'py>, r1: f64, r2: f64, r_out: f64, eps: f64, s: f64) -> PyResult<Bound<'py, PyAny>> {
    let plan = ts::iteration_plan(r1, r2, r_out, eps, s).map_err(err)?;
    let out = pythonize(py, &plan).map_err(|e| PyValueError::new_err(e.to_string()))?;
    out.set_item("violations", plan.violations())?;
    Ok(out)
}

/// Bound after the full propagation chain, starting from `e1` with total mass `mass`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn chain_bound(r1: f64, r2: f64, r_out: f64, eps: f64, s: f64, e1: f64, mass: f64) -> PyResult<f64> {
    let plan = ts::iteration_plan(r1, r2, r_out, eps, s).map_err(err)?;
    Ok(ts::chain_bound(&plan, e1, mass))
}

#[pyfunction]
#[pyo3(signature = (eps, inv_ln_a, radii, c_tilde = 1.0))]
fn decay_limit_check<'py>(
    py: Python<'py>,
    eps: f64,
    inv_ln_a: f64,
    radii: Vec<f64>,
    c_tilde: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &ts::decay_limit_check(eps, inv_ln_a, c_tilde, &radii).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (field, radii, rule, center = (0.0, 0.0, 0.0)))]
fn vanishing_profile<'py>(
    py: Python<'py>,
    field: &PyField,
    radii: Vec<f64>,
    rule: &PyRule,
    center: V3,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &ts::vanishing_profile(field.values(), pt(center), &radii, &rule.0).map_err(err)?)
}

/// Regularized Cauchy problem at each noise level of `settings`, a dict
/// with keys theta, r_out, s, zeta_list, h, beta_rule, tol, seed,
/// data_rule and max_iter.
#[pyfunction]
fn stability_experiment<'py>(
    py: Python<'py>,
    coeffs: &PyCoefficients,
    field: &PyField,
    settings: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: StabilitySettings = depythonize(settings).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let u = field.exact()?;
    let report = py
        .detach(|| cauchy::stability_experiment(&coeffs.0, u, &cfg, |_| {}))
        .map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn lamelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCoefficients>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyRule>()?;
    m.add_class::<PyWeights>()?;
    m.add_function(wrap_pyfunction!(solve_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(three_spheres, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sigma_c, m)?)?;
    m.add_function(wrap_pyfunction!(iteration_plan, m)?)?;
    m.add_function(wrap_pyfunction!(chain_bound, m)?)?;
    m.add_function(wrap_pyfunction!(decay_limit_check, m)?)?;
    m.add_function(wrap_pyfunction!(vanishing_profile, m)?)?;
    m.add_function(wrap_pyfunction!(stability_experiment, m)?)?;
    Ok(())
}
