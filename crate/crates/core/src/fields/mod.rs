//! Coefficient fields (Lamé moduli) and displacement fields with the
//! derivatives the operators consume.

mod polynomial;

pub use polynomial::{Polynomial, PolynomialField};

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::geometry::BallSpec;
use crate::Point;

/// Value, gradient matrix and second derivatives of a vector field at a point.
///
/// `jacobian[(i, j)] = d_j u_i` and `hessians[i][(j, k)] = d_j d_k u_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: Vector3<f64>,
    pub jacobian: Matrix3<f64>,
    pub hessians: [Matrix3<f64>; 3],
}

impl Jet {
    pub fn zero() -> Self {
        Self {
            value: Vector3::zeros(),
            jacobian: Matrix3::zeros(),
            hessians: [Matrix3::zeros(); 3],
        }
    }

    pub fn divergence(&self) -> f64 {
        self.jacobian.trace()
    }

    pub fn curl(&self) -> Vector3<f64> {
        curl_of(&self.jacobian)
    }

    /// Componentwise Laplacian.
    pub fn laplacian(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.hessians[i].trace())
    }

    /// Gradient of the divergence.
    pub fn grad_div(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| (0..3).map(|j| self.hessians[j][(i, j)]).sum())
    }

    /// `|grad u|^2` (Frobenius).
    pub fn gradient_norm_sq(&self) -> f64 {
        self.jacobian.norm_squared()
    }

    /// Sum of squared second derivatives over all components.
    pub fn hessian_norm_sq(&self) -> f64 {
        self.hessians.iter().map(|h| h.norm_squared()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            value: self.value * s,
            jacobian: self.jacobian * s,
            hessians: self.hessians.map(|h| h * s),
        }
    }

    pub fn add(&self, other: &Jet) -> Self {
        Self {
            value: self.value + other.value,
            jacobian: self.jacobian + other.jacobian,
            hessians: std::array::from_fn(|i| self.hessians[i] + other.hessians[i]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
            && self.jacobian.iter().all(|v| v.is_finite())
            && self.hessians.iter().all(|h| h.iter().all(|v| v.is_finite()))
    }
}

/// Curl from a gradient matrix with `m[(i, j)] = d_j w_i`.
pub fn curl_of(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// A vector field that can only be evaluated.
pub trait VectorField: Send + Sync {
    fn value(&self, x: &Point) -> Vector3<f64>;
}

/// A vector field with exact first and second derivatives.
pub trait DisplacementField: VectorField {
    fn jet(&self, x: &Point) -> Jet;
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn value(&self, x: &Point) -> Vector3<f64> {
        (**self).value(x)
    }
}

impl<T: DisplacementField + ?Sized> DisplacementField for &T {
    fn jet(&self, x: &Point) -> Jet {
        (**self).jet(x)
    }
}

impl<T: VectorField + ?Sized> VectorField for Arc<T> {
    fn value(&self, x: &Point) -> Vector3<f64> {
        (**self).value(x)
    }
}

impl<T: DisplacementField + ?Sized> DisplacementField for Arc<T> {
    fn jet(&self, x: &Point) -> Jet {
        (**self).jet(x)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl VectorField for ZeroField {
    fn value(&self, _: &Point) -> Vector3<f64> {
        Vector3::zeros()
    }
}

impl DisplacementField for ZeroField {
    fn jet(&self, _: &Point) -> Jet {
        Jet::zero()
    }
}

/// `u(x) = c`, a solution for every coefficient pair.
#[derive(Clone, Copy, Debug)]
pub struct ConstantField(pub Vector3<f64>);

impl VectorField for ConstantField {
    fn value(&self, _: &Point) -> Vector3<f64> {
        self.0
    }
}

impl DisplacementField for ConstantField {
    fn jet(&self, _: &Point) -> Jet {
        Jet {
            value: self.0,
            ..Jet::zero()
        }
    }
}

/// `u(x) = A x + b`.
#[derive(Clone, Copy, Debug)]
pub struct LinearField {
    pub matrix: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

impl VectorField for LinearField {
    fn value(&self, x: &Point) -> Vector3<f64> {
        self.matrix * x + self.offset
    }
}

impl DisplacementField for LinearField {
    fn jet(&self, x: &Point) -> Jet {
        Jet {
            value: self.value(x),
            jacobian: self.matrix,
            hessians: [Matrix3::zeros(); 3],
        }
    }
}

/// `s * u`.
pub struct ScaledField<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: VectorField> VectorField for ScaledField<F> {
    fn value(&self, x: &Point) -> Vector3<f64> {
        self.inner.value(x) * self.factor
    }
}

impl<F: DisplacementField> DisplacementField for ScaledField<F> {
    fn jet(&self, x: &Point) -> Jet {
        self.inner.jet(x).scaled(self.factor)
    }
}

/// `p(|x - center|) * direction` for a radial profile returning
/// `(p, p', p'')`.
#[derive(Clone)]
pub struct RadialField {
    pub center: Point,
    pub direction: Vector3<f64>,
    pub profile: Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>,
}

impl VectorField for RadialField {
    fn value(&self, x: &Point) -> Vector3<f64> {
        let r = (x - self.center).norm();
        self.direction * (self.profile)(r).0
    }
}

impl DisplacementField for RadialField {
    fn jet(&self, x: &Point) -> Jet {
        let d = x - self.center;
        let r = d.norm();
        let (p, dp, ddp) = (self.profile)(r);
        if r == 0.0 {
            // Smooth radial profiles have p'(0) = 0 and Hessian p''(0) I.
            let h = Matrix3::identity() * ddp;
            return Jet {
                value: self.direction * p,
                jacobian: Matrix3::zeros(),
                hessians: std::array::from_fn(|i| h * self.direction[i]),
            };
        }
        let e = d / r;
        let grad = e * dp;
        let eet = e * e.transpose();
        let hess = eet * ddp + (Matrix3::identity() - eet) * (dp / r);
        Jet {
            value: self.direction * p,
            jacobian: self.direction * grad.transpose(),
            hessians: std::array::from_fn(|i| hess * self.direction[i]),
        }
    }
}

/// Partial derivative `d_axis u` of a displacement field, as a value-only
/// field (used for the gradient-mass diagnostics).
pub struct PartialDerivative<F> {
    pub inner: F,
    pub axis: usize,
}

impl<F: DisplacementField> VectorField for PartialDerivative<F> {
    fn value(&self, x: &Point) -> Vector3<f64> {
        self.inner.jet(x).jacobian.column(self.axis).into_owned()
    }
}

/// Scalar field with a gradient.
pub trait ScalarFieldC1: Send + Sync {
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Vector3<f64>;
}

/// Scalar field with a Hessian as well.
pub trait ScalarFieldC2: ScalarFieldC1 {
    fn hessian(&self, x: &Point) -> Matrix3<f64>;
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantScalar(pub f64);

impl ScalarFieldC1 for ConstantScalar {
    fn value(&self, _: &Point) -> f64 {
        self.0
    }
    fn gradient(&self, _: &Point) -> Vector3<f64> {
        Vector3::zeros()
    }
}

impl ScalarFieldC2 for ConstantScalar {
    fn hessian(&self, _: &Point) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

/// `base + slope . x`.
#[derive(Clone, Copy, Debug)]
pub struct AffineScalar {
    pub base: f64,
    pub slope: Vector3<f64>,
}

impl ScalarFieldC1 for AffineScalar {
    fn value(&self, x: &Point) -> f64 {
        self.base + self.slope.dot(x)
    }
    fn gradient(&self, _: &Point) -> Vector3<f64> {
        self.slope
    }
}

impl ScalarFieldC2 for AffineScalar {
    fn hessian(&self, _: &Point) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

/// `base + amplitude * sin(x_axis)`.
#[derive(Clone, Copy, Debug)]
pub struct SineScalar {
    pub base: f64,
    pub amplitude: f64,
    pub axis: usize,
}

impl ScalarFieldC1 for SineScalar {
    fn value(&self, x: &Point) -> f64 {
        self.base + self.amplitude * x[self.axis].sin()
    }
    fn gradient(&self, x: &Point) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        g[self.axis] = self.amplitude * x[self.axis].cos();
        g
    }
}

impl ScalarFieldC2 for SineScalar {
    fn hessian(&self, x: &Point) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        h[(self.axis, self.axis)] = -self.amplitude * x[self.axis].sin();
        h
    }
}

type ScalarFn = dyn Fn(&Point) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&Point) -> Vector3<f64> + Send + Sync;

/// User-supplied value and gradient closures.
#[derive(Clone)]
pub struct ClosureScalar {
    value: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
}

impl ClosureScalar {
    pub fn new(
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Point) -> Vector3<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

impl ScalarFieldC1 for ClosureScalar {
    fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Point) -> Vector3<f64> {
        (self.gradient)(x)
    }
}

/// Lamé moduli `mu`, `lambda` with their declared ellipticity floors
/// `mu >= alpha0 > 0` and `2 mu + lambda >= beta0 > 0`.
#[derive(Clone)]
pub struct CoefficientPair {
    pub mu: Arc<dyn ScalarFieldC1>,
    pub lambda: Arc<dyn ScalarFieldC1>,
    pub alpha0: f64,
    pub beta0: f64,
    label: String,
}

impl std::fmt::Debug for CoefficientPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientPair")
            .field("label", &self.label)
            .field("alpha0", &self.alpha0)
            .field("beta0", &self.beta0)
            .finish()
    }
}

impl CoefficientPair {
    pub fn new(
        mu: Arc<dyn ScalarFieldC1>,
        lambda: Arc<dyn ScalarFieldC1>,
        alpha0: f64,
        beta0: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(alpha0 > 0.0 && beta0 > 0.0) {
            return Err(LabError::Ellipticity(format!(
                "declared floors must be positive, got alpha0 = {alpha0}, beta0 = {beta0}"
            )));
        }
        Ok(Self {
            mu,
            lambda,
            alpha0,
            beta0,
            label: label.into(),
        })
    }

    /// Constant moduli; the floors are the values themselves.
    pub fn constant(mu0: f64, lambda0: f64) -> Result<Self> {
        Self::new(
            Arc::new(ConstantScalar(mu0)),
            Arc::new(ConstantScalar(lambda0)),
            mu0,
            2.0 * mu0 + lambda0,
            format!("constant(mu={mu0}, lambda={lambda0})"),
        )
    }

    /// `mu = 1 + 0.2 sin x1`, `lambda = 0.5 + 0.1 x2`, declared on the cube
    /// `[-1, 1]^3` (and hence on the unit ball).
    pub fn smooth_variable() -> Self {
        let alpha0 = 1.0 - 0.2 * 1f64.sin();
        Self {
            mu: Arc::new(SineScalar {
                base: 1.0,
                amplitude: 0.2,
                axis: 0,
            }),
            lambda: Arc::new(AffineScalar {
                base: 0.5,
                slope: Vector3::new(0.0, 0.1, 0.0),
            }),
            alpha0,
            beta0: 2.0 * alpha0 + 0.4,
            label: "smooth_variable".into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mu_at(&self, x: &Point) -> f64 {
        self.mu.value(x)
    }

    pub fn lambda_at(&self, x: &Point) -> f64 {
        self.lambda.value(x)
    }

    /// `alpha(x) = (2 mu + lambda) / mu`.
    pub fn alpha_at(&self, x: &Point) -> Result<f64> {
        let mu = self.mu.value(x);
        if mu <= 0.0 {
            return Err(LabError::Ellipticity(format!(
                "mu = {mu} <= 0 at ({:.4}, {:.4}, {:.4})",
                x.x, x.y, x.z
            )));
        }
        Ok((2.0 * mu + self.lambda.value(x)) / mu)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub samples: usize,
    pub min_mu: f64,
    pub min_mu_point: [f64; 3],
    pub min_two_mu_plus_lambda: f64,
    pub min_two_mu_plus_lambda_point: [f64; 3],
    pub alpha0: f64,
    pub beta0: f64,
    pub pass: bool,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Deterministic low-discrepancy points: the centre, Halton points inside the
/// ball and a Fibonacci lattice on its boundary sphere.
pub fn ball_samples(region: &BallSpec, count: usize) -> Vec<Point> {
    let mut out = vec![region.center];
    let surface = count / 4;
    let interior = count.saturating_sub(surface + 1);
    let mut i = 1u64;
    while out.len() < interior + 1 {
        let p = Point::new(
            2.0 * radical_inverse(i, 2) - 1.0,
            2.0 * radical_inverse(i, 3) - 1.0,
            2.0 * radical_inverse(i, 5) - 1.0,
        );
        i += 1;
        if p.norm_squared() < 1.0 {
            out.push(region.center + region.radius * p);
        }
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for k in 0..surface {
        let z = 1.0 - (2.0 * k as f64 + 1.0) / surface as f64;
        let s = (1.0 - z * z).max(0.0).sqrt();
        let phi = golden * k as f64;
        out.push(region.center + region.radius * Point::new(s * phi.cos(), s * phi.sin(), z));
    }
    out.truncate(count.max(1));
    out
}

/// Sample `mu` and `2 mu + lambda` over the region and compare the minima
/// with the declared floors.
pub fn validate_ellipticity(coeffs: &CoefficientPair, region: &BallSpec, samples: usize) -> Result<EllipticityReport> {
    if samples == 0 {
        return Err(LabError::InvalidInput("need at least one sample".into()));
    }
    let pts = ball_samples(region, samples);
    let mut min_mu = (f64::INFINITY, region.center);
    let mut min_beta = (f64::INFINITY, region.center);
    for p in &pts {
        let mu = coeffs.mu.value(p);
        let beta = 2.0 * mu + coeffs.lambda.value(p);
        if mu < min_mu.0 {
            min_mu = (mu, *p);
        }
        if beta < min_beta.0 {
            min_beta = (beta, *p);
        }
    }
    Ok(EllipticityReport {
        samples: pts.len(),
        min_mu: min_mu.0,
        min_mu_point: min_mu.1.into(),
        min_two_mu_plus_lambda: min_beta.0,
        min_two_mu_plus_lambda_point: min_beta.1.into(),
        alpha0: coeffs.alpha0,
        beta0: coeffs.beta0,
        pass: min_mu.0 >= coeffs.alpha0 && min_beta.0 >= coeffs.beta0,
    })
}

/// Largest discrepancy between the declared derivatives and central
/// differences: the Jacobian against differences of the value, the Hessians
/// against differences of the declared Jacobian. Each probe's discrepancy is
/// relative to the largest declared derivative magnitude there (floored at 1
/// for fields of unit scale).
pub fn derivative_consistency<F: DisplacementField + ?Sized>(field: &F, probes: &[Point], step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in probes {
        let jet = field.jet(x);
        let scale = jet
            .value
            .amax()
            .max(jet.jacobian.amax())
            .max(jet.hessians.iter().map(|h| h.amax()).fold(0.0, f64::max))
            .max(f64::MIN_POSITIVE);
        let mut err: f64 = 0.0;
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = step;
            let (xp, xm) = (x + e, x - e);
            let du = (field.value(&xp) - field.value(&xm)) / (2.0 * step);
            let dj = (field.jet(&xp).jacobian - field.jet(&xm).jacobian) / (2.0 * step);
            for i in 0..3 {
                err = err.max((du[i] - jet.jacobian[(i, j)]).abs());
                for k in 0..3 {
                    err = err.max((dj[(i, k)] - jet.hessians[i][(k, j)]).abs());
                }
            }
        }
        worst = worst.max(err / scale);
    }
    worst
}
