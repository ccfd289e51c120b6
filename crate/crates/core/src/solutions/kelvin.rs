//! Kelvin's fundamental solution of the constant-coefficient system.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::fields::{DisplacementField, Jet, VectorField};
use crate::Point;

/// Point force `direction` applied at `source` in a homogeneous medium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KelvinSource {
    pub source: Point,
    pub direction: Vector3<f64>,
    pub mu0: f64,
    pub lambda0: f64,
}

impl KelvinSource {
    /// Validates positivity of the moduli, `nu < 1/2`, a unit direction and a
    /// source outside the ball of radius `study_radius` about the origin.
    pub fn new(source: Point, direction: Vector3<f64>, mu0: f64, lambda0: f64, study_radius: f64) -> Result<Self> {
        if !(mu0 > 0.0 && lambda0 > 0.0) {
            return Err(LabError::InvalidInput(format!(
                "Kelvin moduli must be positive, got mu0 = {mu0}, lambda0 = {lambda0}"
            )));
        }
        if (direction.norm() - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidInput("Kelvin direction must be a unit vector".into()));
        }
        if source.norm() <= study_radius {
            return Err(LabError::InvalidInput(format!(
                "Kelvin source at distance {} lies inside the study ball of radius {study_radius}",
                source.norm()
            )));
        }
        Ok(Self {
            source,
            direction,
            mu0,
            lambda0,
        })
    }

    /// Poisson ratio `lambda / (2 (lambda + mu))`.
    pub fn poisson_ratio(&self) -> f64 {
        self.lambda0 / (2.0 * (self.lambda0 + self.mu0))
    }

    /// `1 / (16 pi mu (1 - nu))`.
    pub fn prefactor(&self) -> f64 {
        1.0 / (16.0 * PI * self.mu0 * (1.0 - self.poisson_ratio()))
    }
}

/// `u(x) = c [ (3 - 4 nu) b / |r| + (b . r) r / |r|^3 ]`, `r = x - y`, with
/// closed-form first and second derivatives.
#[derive(Clone, Copy, Debug)]
pub struct KelvinField {
    src: KelvinSource,
    c: f64,
    k: f64,
}

pub fn kelvin_field(src: KelvinSource) -> KelvinField {
    KelvinField {
        c: src.prefactor(),
        k: 3.0 - 4.0 * src.poisson_ratio(),
        src,
    }
}

impl KelvinField {
    pub fn source(&self) -> &KelvinSource {
        &self.src
    }

    /// Jet, or a singularity error at the source point.
    pub fn checked_jet(&self, x: &Point) -> Result<Jet> {
        if (x - self.src.source).norm() == 0.0 {
            return Err(LabError::Singularity("Kelvin field"));
        }
        Ok(self.jet(x))
    }
}

impl VectorField for KelvinField {
    fn value(&self, x: &Point) -> Vector3<f64> {
        let r = x - self.src.source;
        let rho = r.norm();
        let b = &self.src.direction;
        (b * (self.k / rho) + r * (b.dot(&r) / rho.powi(3))) * self.c
    }
}

impl DisplacementField for KelvinField {
    fn jet(&self, x: &Point) -> Jet {
        let r = x - self.src.source;
        let rho = r.norm();
        if rho == 0.0 {
            let nan = f64::NAN;
            return Jet {
                value: Vector3::repeat(nan),
                jacobian: Matrix3::repeat(nan),
                hessians: [Matrix3::repeat(nan); 3],
            };
        }
        let b = self.src.direction;
        let q = b.dot(&r);
        let inv = 1.0 / rho;
        let inv3 = inv * inv * inv;
        let inv5 = inv3 * inv * inv;
        let inv7 = inv5 * inv * inv;
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

        // 1/rho and g = rho^-3 with their derivatives
        let d_inv = |j: usize| -r[j] * inv3;
        let dd_inv = |j: usize, k: usize| 3.0 * r[j] * r[k] * inv5 - delta(j, k) * inv3;
        let g = inv3;
        let dg = |j: usize| -3.0 * r[j] * inv5;
        let ddg = |j: usize, k: usize| 15.0 * r[j] * r[k] * inv7 - 3.0 * delta(j, k) * inv5;

        let value = (b * (self.k * inv) + r * (q * g)) * self.c;
        let jacobian = Matrix3::from_fn(|i, j| {
            let t1 = self.k * b[i] * d_inv(j);
            let t2 = b[j] * r[i] * g + q * delta(i, j) * g + q * r[i] * dg(j);
            self.c * (t1 + t2)
        });
        let hessians = std::array::from_fn(|i| {
            Matrix3::from_fn(|j, k| {
                let t1 = self.k * b[i] * dd_inv(j, k);
                let t2 = b[j] * delta(i, k) * g
                    + b[j] * r[i] * dg(k)
                    + b[k] * delta(i, j) * g
                    + q * delta(i, j) * dg(k)
                    + b[k] * r[i] * dg(j)
                    + q * delta(i, k) * dg(j)
                    + q * r[i] * ddg(j, k);
                self.c * (t1 + t2)
            })
        });
        Jet {
            value,
            jacobian,
            hessians,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{derivative_consistency, CoefficientPair};
    use crate::lame::apply_lame_full;

    fn src(b: Vector3<f64>) -> KelvinSource {
        KelvinSource::new(Point::new(1.5, -0.4, 0.9), b, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn prefactor_for_unit_moduli() {
        let s = src(Vector3::x());
        assert_eq!(s.poisson_ratio(), 0.25);
        assert!((s.prefactor() - 1.0 / (12.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn validates_inputs() {
        assert!(KelvinSource::new(Point::new(0.5, 0.0, 0.0), Vector3::x(), 1.0, 1.0, 1.0).is_err());
        assert!(KelvinSource::new(Point::new(2.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.0), 1.0, 1.0, 1.0).is_err());
        assert!(KelvinSource::new(Point::new(2.0, 0.0, 0.0), Vector3::x(), -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn singular_at_source() {
        let f = kelvin_field(src(Vector3::z()));
        assert!(matches!(f.checked_jet(&f.source().source), Err(LabError::Singularity(_))));
        assert!(!f.jet(&f.source().source).is_finite());
    }

    #[test]
    fn linear_in_direction() {
        let b1 = Vector3::new(1.0, 2.0, -1.0).normalize();
        let b2 = Vector3::new(0.0, -1.0, 3.0).normalize();
        let (f1, f2) = (kelvin_field(src(b1)), kelvin_field(src(b2)));
        // unnormalised sum: build with raw fields
        let mut s = src(b1);
        s.direction = b1 + b2;
        let f12 = kelvin_field(s);
        for x in [Point::new(0.1, 0.2, 0.3), Point::new(-0.5, 0.4, -0.2)] {
            assert!((f12.value(&x) - f1.value(&x) - f2.value(&x)).amax() < 1e-15);
        }
    }

    #[test]
    fn far_field_decay() {
        let f = kelvin_field(src(Vector3::y()));
        let dir = Vector3::new(1.0, 1.0, 1.0).normalize();
        let products: Vec<f64> = [10.0, 100.0, 1000.0, 1e4]
            .iter()
            .map(|&d| {
                let x = f.source().source + dir * d;
                f.value(&x).norm() * d
            })
            .collect();
        let (lo, hi) = products.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &p| (a.min(p), b.max(p)));
        assert!(hi / lo < 1.0 + 1e-12);
    }

    #[test]
    fn derivatives_and_residual() {
        let f = kelvin_field(src(Vector3::new(0.3, -0.5, 0.8).normalize()));
        let probes: Vec<Point> = (0..25)
            .map(|k| {
                let t = k as f64;
                Point::new(0.6 * (1.3 * t).sin(), 0.6 * (0.7 * t).cos(), 0.5 * (2.1 * t).sin())
            })
            .collect();
        assert!(derivative_consistency(&f, &probes, 1e-4) <= 1e-6);
        let coeffs = CoefficientPair::constant(1.0, 1.0).unwrap();
        for x in &probes {
            let scale = f.jet(x).hessians.iter().map(|h| h.amax()).fold(0.0, f64::max);
            assert!(apply_lame_full(&coeffs, &f, x).amax() <= 1e-12 * scale.max(1.0));
        }
    }
}
