//! Carleman weights `psi = R^2 - |x|^2`, `phi = e^{s psi} - 1` on the
//! annulus `theta < |x| < R`, their sublevel family, the radial cutoff and
//! the four weighted integrals of the estimate.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{CoefficientPair, DisplacementField, RadialField, ScalarFieldC1, ScalarFieldC2};
use crate::geometry::AnnulusSpec;
use crate::lame::apply_lame_principal;
use crate::quadrature::{weighted_l2_annulus, ProductBallRule};
use crate::Point;

/// Compact-support tolerance at the annulus boundary.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightSpec", into = "WeightSpec")]
pub struct CarlemanWeights {
    r_out: f64,
    theta: f64,
    s: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightSpec {
    r_out: f64,
    theta: f64,
    s: f64,
}

impl TryFrom<WeightSpec> for CarlemanWeights {
    type Error = LabError;
    fn try_from(w: WeightSpec) -> Result<Self> {
        Self::new(w.r_out, w.theta, w.s)
    }
}

impl From<CarlemanWeights> for WeightSpec {
    fn from(w: CarlemanWeights) -> Self {
        Self {
            r_out: w.r_out,
            theta: w.theta,
            s: w.s,
        }
    }
}

/// `(psi, phi, grad psi)` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightValues {
    pub psi: f64,
    pub phi: f64,
    pub grad_psi: Vector3<f64>,
}

impl CarlemanWeights {
    pub fn new(r_out: f64, theta: f64, s: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < r_out && r_out.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "need 0 < theta < R, got theta = {theta}, R = {r_out}"
            )));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(LabError::OutOfRange {
                what: "weight parameter s",
                value: s,
                range: "(0, inf)".into(),
            });
        }
        Ok(Self { r_out, theta, s })
    }

    pub fn r_out(&self) -> f64 {
        self.r_out
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn annulus(&self) -> AnnulusSpec {
        AnnulusSpec::centered(self.theta, self.r_out).expect("validated radii")
    }

    pub fn psi(&self, x: &Point) -> f64 {
        self.r_out * self.r_out - x.norm_squared()
    }

    pub fn phi(&self, x: &Point) -> f64 {
        (self.s * self.psi(x)).exp_m1()
    }

    /// `phi` as a function of `|x|`.
    pub fn phi_at_radius(&self, rho: f64) -> f64 {
        (self.s * (self.r_out * self.r_out - rho * rho)).exp_m1()
    }

    pub fn eval(&self, x: &Point) -> WeightValues {
        WeightValues {
            psi: self.psi(x),
            phi: self.phi(x),
            grad_psi: -2.0 * x,
        }
    }

    /// `phi* = e^{s (R^2 - theta^2)} - 1`, the maximum of `phi` on the annulus.
    pub fn phi_star(&self) -> f64 {
        self.phi_at_radius(self.theta)
    }

    /// Outer radius of `{phi > delta}`: `sqrt(R^2 - ln(1 + delta) / s)`.
    pub fn sublevel_radius(&self, delta: f64) -> Result<f64> {
        let top = self.phi_star();
        if !(0.0..=top).contains(&delta) {
            return Err(LabError::OutOfRange {
                what: "sublevel delta",
                value: delta,
                range: format!("[0, {top}]"),
            });
        }
        if delta == top {
            return Ok(self.theta);
        }
        let rho2 = self.r_out * self.r_out - delta.ln_1p() / self.s;
        Ok(rho2.max(self.theta * self.theta).sqrt())
    }
}

fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = t * t;
    (
        t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
    )
}

/// Radial cutoff: 1 for `|x| <= sublevel_radius(m)`, 0 for
/// `|x| >= sublevel_radius(m / 2)`, quintic smoothstep in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cutoff {
    pub level: f64,
    pub inner: f64,
    pub outer: f64,
}

pub fn cutoff_build(w: &CarlemanWeights, m: f64) -> Result<Cutoff> {
    let half = 0.5 * w.phi_star();
    if !(m > 0.0 && m < half) {
        return Err(LabError::OutOfRange {
            what: "cutoff level",
            value: m,
            range: format!("(0, {half})"),
        });
    }
    Ok(Cutoff {
        level: m,
        inner: w.sublevel_radius(m)?,
        outer: w.sublevel_radius(0.5 * m)?,
    })
}

impl Cutoff {
    /// `(chi, chi', chi'')` as a function of `|x|`.
    pub fn profile(&self, rho: f64) -> (f64, f64, f64) {
        let width = self.outer - self.inner;
        let (v, d, dd) = smoothstep((self.outer - rho) / width);
        (v, -d / width, dd / (width * width))
    }

    /// Largest `|chi'|` over `samples` equispaced radii of the transition band.
    pub fn max_gradient(&self, samples: usize) -> f64 {
        (0..=samples)
            .map(|k| self.inner + (self.outer - self.inner) * k as f64 / samples.max(1) as f64)
            .map(|rho| self.profile(rho).1.abs())
            .fold(0.0, f64::max)
    }
}

impl ScalarFieldC1 for Cutoff {
    fn value(&self, x: &Point) -> f64 {
        self.profile(x.norm()).0
    }

    fn gradient(&self, x: &Point) -> Vector3<f64> {
        let r = x.norm();
        if r == 0.0 {
            return Vector3::zeros();
        }
        x * (self.profile(r).1 / r)
    }
}

impl ScalarFieldC2 for Cutoff {
    fn hessian(&self, x: &Point) -> Matrix3<f64> {
        let r = x.norm();
        if r == 0.0 {
            return Matrix3::zeros();
        }
        let (_, d, dd) = self.profile(r);
        let e = x / r;
        let eet = e * e.transpose();
        eet * dd + (Matrix3::identity() - eet) * (d / r)
    }
}

/// The four integrals of the estimate at one `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CarlemanSides {
    pub tau: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub rhs: f64,
}

impl CarlemanSides {
    /// `(t1 + t2 + t3) / rhs`.
    pub fn ratio(&self) -> f64 {
        (self.t1 + self.t2 + self.t3) / self.rhs
    }

    pub fn row(&self) -> ScanRow {
        ScanRow {
            tau: self.tau,
            t1: self.t1,
            t2: self.t2,
            t3: self.t3,
            rhs: self.rhs,
            ratio: self.ratio(),
        }
    }
}

/// One CSV row of a scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub tau: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Largest value, first and second derivative of `u` over the two boundary
/// spheres of `ann`.
pub fn boundary_trace_max<F: DisplacementField + ?Sized>(u: &F, ann: &AnnulusSpec, rule: &ProductBallRule) -> f64 {
    [ann.r_inner, ann.r_outer]
        .iter()
        .flat_map(|&r| rule.angular().on_sphere(&ann.center, r))
        .map(|(x, _)| {
            let j = u.jet(&x);
            let h = j.hessians.iter().map(|m| m.amax()).fold(0.0, f64::max);
            j.value.amax().max(j.jacobian.amax()).max(h)
        })
        .fold(0.0, f64::max)
}

pub fn carleman_sides<F: DisplacementField + ?Sized>(
    coeffs: &CoefficientPair,
    w: &CarlemanWeights,
    tau: f64,
    u: &F,
    ann: &AnnulusSpec,
    rule: &ProductBallRule,
) -> Result<CarlemanSides> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LabError::OutOfRange {
            what: "tau",
            value: tau,
            range: "(0, inf)".into(),
        });
    }
    let trace = boundary_trace_max(u, ann, rule);
    if !(trace <= SUPPORT_TOL) {
        return Err(LabError::Precondition(format!(
            "field is not compactly supported in the annulus: boundary trace {trace:.3e} > {SUPPORT_TOL:e}"
        )));
    }
    let s = w.s;
    let base = |x: &Point| 2.0 * tau * w.phi(x);
    let t1 = weighted_l2_annulus(|x| u.value(x).norm_squared(), |x| base(x) + 2.0 * s * w.psi(x), ann, rule)?;
    let t2 = weighted_l2_annulus(|x| u.jet(x).gradient_norm_sq(), base, ann, rule)?;
    let t3 = weighted_l2_annulus(|x| u.jet(x).hessian_norm_sq(), |x| base(x) - 2.0 * s * w.psi(x), ann, rule)?;
    let rhs = weighted_l2_annulus(
        |x| apply_lame_principal(coeffs, u, x).norm_squared(),
        base,
        ann,
        rule,
    )?;
    Ok(CarlemanSides {
        tau,
        t1: tau * tau * s.powi(4) * t1,
        t2: s * s * t2,
        t3: t3 / (tau * tau),
        rhs,
    })
}

pub fn carleman_scan<F: DisplacementField + ?Sized>(
    coeffs: &CoefficientPair,
    w: &CarlemanWeights,
    u: &F,
    taus: &[f64],
    ann: &AnnulusSpec,
    rule: &ProductBallRule,
) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let row = carleman_sides(coeffs, w, tau, u, ann, rule)?.row();
        if row.ratio.is_nan() {
            return Err(LabError::Degenerate(format!("ratio is NaN at tau = {tau}")));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `(4 (r - a)(b - r) / (b - a)^2)^3 * direction` on `a < r < b`, zero
/// elsewhere; `C^2` across both ends.
pub fn radial_bump(a: f64, b: f64, direction: Vector3<f64>) -> Result<RadialField> {
    if !(0.0 <= a && a < b) {
        return Err(LabError::InvalidInput(format!("bump needs 0 <= a < b, got ({a}, {b})")));
    }
    let k = 4.0 / ((b - a) * (b - a));
    let profile = move |r: f64| {
        if r <= a || r >= b {
            return (0.0, 0.0, 0.0);
        }
        let q = k * (r - a) * (b - r);
        let dq = k * (a + b - 2.0 * r);
        let ddq = -2.0 * k;
        (q * q * q, 3.0 * q * q * dq, 6.0 * q * dq * dq + 3.0 * q * q * ddq)
    };
    Ok(RadialField {
        center: Point::zeros(),
        direction,
        profile: Arc::new(profile),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ScaledField, ZeroField};
    use approx::assert_relative_eq;

    fn w() -> CarlemanWeights {
        CarlemanWeights::new(1.0, 2.0 / 3.0, 1.0).unwrap()
    }

    #[test]
    fn weight_examples() {
        let w = w();
        let v = w.eval(&Point::zeros());
        assert_eq!((v.psi, v.grad_psi), (1.0, Vector3::zeros()));
        assert_relative_eq!(v.phi, 1f64.exp() - 1.0, epsilon = 1e-15);
        let edge = w.eval(&Point::new(0.0, 0.6, 0.8));
        assert!(edge.psi.abs() < 1e-15 && edge.phi.abs() < 1e-15);
        assert_relative_eq!(w.phi_star(), (5.0f64 / 9.0).exp() - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sublevel_examples() {
        let w = w();
        assert_eq!(w.sublevel_radius(0.0).unwrap(), 1.0);
        assert_eq!(w.sublevel_radius(w.phi_star()).unwrap(), 2.0 / 3.0);
        let exact = (1.0 - (((5.0f64 / 9.0).exp() + 1.0) / 2.0).ln()).sqrt();
        let rho = w.sublevel_radius(0.5 * w.phi_star()).unwrap();
        assert_relative_eq!(rho, exact, epsilon = 1e-14);
        assert!((rho - 0.8271).abs() < 1e-4);
        assert!(w.sublevel_radius(-0.1).is_err());
        assert!(w.sublevel_radius(w.phi_star() * 1.01).is_err());
    }

    #[test]
    fn cutoff_levels() {
        let w = w();
        let m = 0.3 * w.phi_star();
        let chi = cutoff_build(&w, m).unwrap();
        for k in 0..=2000 {
            let rho = w.theta() * 0.5 + (w.r_out() - 0.5 * w.theta()) * k as f64 / 2000.0;
            let x = Point::new(rho, 0.0, 0.0);
            let c = chi.value(&x);
            assert!((0.0..=1.0).contains(&c));
            if rho <= w.theta() || w.phi(&x) >= m {
                assert_eq!(c, 1.0);
            }
            if rho >= w.theta() && w.phi(&x) <= 0.5 * m {
                assert_eq!(c, 0.0);
            }
        }
        let g = chi.max_gradient(1000);
        assert!(g.is_finite() && g > 0.0);
        assert_relative_eq!(g, 1.875 / (chi.outer - chi.inner), epsilon = 1e-6);
        assert!(cutoff_build(&w, 0.5 * w.phi_star()).is_err());
        assert!(cutoff_build(&w, 0.0).is_err());
    }

    #[test]
    fn zero_field_sides_vanish() {
        let w = w();
        let rule = ProductBallRule::new(6, 4, 8).unwrap();
        let s = carleman_sides(&CoefficientPair::constant(1.0, 1.0).unwrap(), &w, 1.0, &ZeroField, &w.annulus(), &rule)
            .unwrap();
        assert_eq!((s.t1, s.t2, s.t3, s.rhs), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn bump_sides_positive_and_quadratic() {
        let w = CarlemanWeights::new(1.0, 0.5, 1.0).unwrap();
        let coeffs = CoefficientPair::constant(1.0, 1.0).unwrap();
        let rule = ProductBallRule::new(8, 6, 12).unwrap().with_panels(8).unwrap();
        let u = radial_bump(0.5, 1.0, Vector3::x()).unwrap();
        let one = carleman_sides(&coeffs, &w, 1.0, &u, &w.annulus(), &rule).unwrap();
        assert!(one.t1 > 0.0 && one.t2 > 0.0 && one.t3 > 0.0 && one.rhs > 0.0);
        let two = carleman_sides(&coeffs, &w, 1.0, &ScaledField { inner: u, factor: 2.0 }, &w.annulus(), &rule).unwrap();
        assert_relative_eq!(two.t1, 4.0 * one.t1, max_relative = 1e-13);
        assert_relative_eq!(two.rhs, 4.0 * one.rhs, max_relative = 1e-13);
        assert_relative_eq!(two.ratio(), one.ratio(), max_relative = 1e-13);
    }

    #[test]
    fn support_violation_is_rejected() {
        let w = w();
        let rule = ProductBallRule::new(6, 4, 8).unwrap();
        let u = radial_bump(0.0, 0.9, Vector3::x()).unwrap();
        let e = carleman_sides(&CoefficientPair::constant(1.0, 1.0).unwrap(), &w, 1.0, &u, &w.annulus(), &rule);
        assert!(matches!(e, Err(LabError::Precondition(_))));
    }

    #[test]
    fn empty_scan() {
        let w = w();
        let rule = ProductBallRule::new(6, 4, 8).unwrap();
        let rows = carleman_scan(&CoefficientPair::constant(1.0, 1.0).unwrap(), &w, &ZeroField, &[], &w.annulus(), &rule)
            .unwrap();
        assert!(rows.is_empty());
    }
}
