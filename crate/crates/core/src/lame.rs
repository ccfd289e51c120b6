//! Pointwise Lamé operators.
//!
//! * full operator `div(mu (grad u + grad u^T)) + grad(lambda div u)`,
//! * principal part `mu Lap u + (lambda + mu) grad div u`,
//! * the first-order pair `A(d)(u1, u2) = (curl u1 + grad u2, -div u1)` and
//!   `A_alpha(x, d)(v1, v2) = (curl v1 + alpha grad v2, -div v1)`,
//! * the factorization `L u = -mu A_alpha A (u, 0)` with `alpha = (2 mu + lambda) / mu`,
//! * the cutoff commutator `[L, chi] v = L(chi v) - chi L v`.
//!
//! Everything is evaluated from declared derivatives; no finite differences.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::Result;
use crate::fields::{curl_of, CoefficientPair, DisplacementField, Jet, ScalarFieldC2, VectorField};
use crate::Point;

/// Principal part from a jet and the local moduli.
pub fn principal_from_jet(mu: f64, lambda: f64, jet: &Jet) -> Vector3<f64> {
    jet.laplacian() * mu + jet.grad_div() * (lambda + mu)
}

/// First-order correction `(grad u + grad u^T) grad mu + (div u) grad lambda`.
pub fn lower_order_from_jet(grad_mu: &Vector3<f64>, grad_lambda: &Vector3<f64>, jet: &Jet) -> Vector3<f64> {
    (jet.jacobian + jet.jacobian.transpose()) * grad_mu + grad_lambda * jet.divergence()
}

pub fn apply_lame_principal<F: DisplacementField + ?Sized>(coeffs: &CoefficientPair, u: &F, x: &Point) -> Vector3<f64> {
    principal_from_jet(coeffs.mu.value(x), coeffs.lambda.value(x), &u.jet(x))
}

pub fn apply_lame_full<F: DisplacementField + ?Sized>(coeffs: &CoefficientPair, u: &F, x: &Point) -> Vector3<f64> {
    let jet = u.jet(x);
    principal_from_jet(coeffs.mu.value(x), coeffs.lambda.value(x), &jet)
        + lower_order_from_jet(&coeffs.mu.gradient(x), &coeffs.lambda.gradient(x), &jet)
}

/// `mu Lap u + (lambda + mu) grad div u` for constant moduli from central
/// differences of the values of `u` with the given step.
pub fn lame_principal_fd<F: VectorField + ?Sized>(mu: f64, lambda: f64, u: &F, x: &Point, step: f64) -> Vector3<f64> {
    let e = |i: usize| Vector3::ith(i, step);
    let center = u.value(x);
    let h2 = step * step;
    let mut lap = Vector3::zeros();
    // d_i d_j u_j for every i, j
    let mut grad_div = Vector3::zeros();
    for i in 0..3 {
        let second = (u.value(&(x + e(i))) - center * 2.0 + u.value(&(x - e(i)))) / h2;
        lap += second;
        grad_div[i] += second[i];
        for j in (0..3).filter(|&j| j != i) {
            let mixed = (u.value(&(x + e(i) + e(j))) - u.value(&(x + e(i) - e(j))) - u.value(&(x - e(i) + e(j)))
                + u.value(&(x - e(i) - e(j))))
                / (4.0 * h2);
            grad_div[i] += mixed[j];
        }
    }
    lap * mu + grad_div * (lambda + mu)
}

/// First derivatives of a (vector, scalar) pair at a point:
/// `v1_jacobian[(i, j)] = d_j v1_i`, `v2_gradient = grad v2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllerPairJet {
    pub v1_jacobian: Matrix3<f64>,
    pub v2_gradient: Vector3<f64>,
}

/// `A(d)(u1, u2) = (curl u1 + grad u2, -div u1)`.
pub fn apply_a(pair: &EllerPairJet) -> (Vector3<f64>, f64) {
    (curl_of(&pair.v1_jacobian) + pair.v2_gradient, -pair.v1_jacobian.trace())
}

/// `A_alpha(x, d)(v1, v2) = (curl v1 + alpha grad v2, -div v1)` with
/// `alpha = (2 mu + lambda) / mu` evaluated at `x` and not differentiated.
pub fn apply_a_alpha(coeffs: &CoefficientPair, x: &Point, pair: &EllerPairJet) -> Result<(Vector3<f64>, f64)> {
    let alpha = coeffs.alpha_at(x)?;
    Ok((curl_of(&pair.v1_jacobian) + pair.v2_gradient * alpha, -pair.v1_jacobian.trace()))
}

/// Derivatives of `A(u, 0) = (curl u, -div u)` assembled from the Hessians of
/// `u`.
pub fn a_image_derivatives(jet: &Jet) -> EllerPairJet {
    let h = &jet.hessians;
    // d_k (curl u)_i
    let curl_jac = Matrix3::from_fn(|i, k| match i {
        0 => h[2][(1, k)] - h[1][(2, k)],
        1 => h[0][(2, k)] - h[2][(0, k)],
        _ => h[1][(0, k)] - h[0][(1, k)],
    });
    EllerPairJet {
        v1_jacobian: curl_jac,
        v2_gradient: -jet.grad_div(),
    }
}

/// `-mu A_alpha(x, d) A(d)(u, 0)` at a point.
pub fn factorized_principal(coeffs: &CoefficientPair, jet: &Jet, x: &Point) -> Result<(Vector3<f64>, f64)> {
    let mu = coeffs.mu.value(x);
    let (v, s) = apply_a_alpha(coeffs, x, &a_image_derivatives(jet))?;
    Ok((-v * mu, -s * mu))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FactorizationResidual {
    /// max over probes of `|L u - (first component of -mu A_alpha A(u, 0))|`
    pub vector: f64,
    /// max over probes of `|second component|`
    pub scalar: f64,
}

/// Compare `L u` with the composed first-order form at every probe.
pub fn factorization_residual<F: DisplacementField + ?Sized>(
    coeffs: &CoefficientPair,
    u: &F,
    probes: &[Point],
) -> Result<FactorizationResidual> {
    let mut out = FactorizationResidual::default();
    for x in probes {
        let jet = u.jet(x);
        let direct = principal_from_jet(coeffs.mu.value(x), coeffs.lambda.value(x), &jet);
        let (composed, second) = factorized_principal(coeffs, &jet, x)?;
        out.vector = out.vector.max((direct - composed).amax());
        out.scalar = out.scalar.max(second.abs());
    }
    Ok(out)
}

/// `[L, chi] v` at `x` from the value and Jacobian of `v` only:
///
/// `mu (2 (grad v) grad chi + v Lap chi)
///  + (lambda + mu) (div v grad chi + Hess(chi) v + (grad v)^T grad chi)`.
pub fn commutator_first_order<C: ScalarFieldC2 + ?Sized>(
    coeffs: &CoefficientPair,
    chi: &C,
    value: &Vector3<f64>,
    jacobian: &Matrix3<f64>,
    x: &Point,
) -> Vector3<f64> {
    let mu = coeffs.mu.value(x);
    let lambda = coeffs.lambda.value(x);
    let g = chi.gradient(x);
    let h = chi.hessian(x);
    let lap = (jacobian * g) * 2.0 + value * h.trace();
    let gd = g * jacobian.trace() + h * value + jacobian.transpose() * g;
    lap * mu + gd * (lambda + mu)
}

/// `[L, chi] v` at `x`. Only the value and Jacobian of `v` are read.
pub fn commutator_apply<C: ScalarFieldC2 + ?Sized, F: DisplacementField + ?Sized>(
    coeffs: &CoefficientPair,
    chi: &C,
    v: &F,
    x: &Point,
) -> Vector3<f64> {
    let jet = v.jet(x);
    commutator_first_order(coeffs, chi, &jet.value, &jet.jacobian, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AffineScalar, ConstantScalar, LinearField, Polynomial, PolynomialField, ZeroField};
    use std::sync::Arc;

    fn poly(terms: &[([u32; 3], f64)]) -> Polynomial {
        Polynomial::from_terms(terms.iter().copied())
    }

    fn unit() -> CoefficientPair {
        CoefficientPair::constant(1.0, 1.0).unwrap()
    }

    #[test]
    fn linear_field_has_zero_image() {
        let u = LinearField {
            matrix: Matrix3::new(1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 4.0, 2.0),
            offset: Vector3::new(0.1, 0.2, 0.3),
        };
        let x = Point::new(0.2, 0.4, -0.3);
        assert_eq!(apply_lame_full(&unit(), &u, &x), Vector3::zeros());
    }

    #[test]
    fn x1_squared_examples() {
        let u = PolynomialField::new([poly(&[([2, 0, 0], 1.0)]), Polynomial::zero(), Polynomial::zero()]);
        let x = Point::new(0.3, -0.7, 0.2);
        assert_eq!(apply_lame_full(&unit(), &u, &x), Vector3::new(6.0, 0.0, 0.0));
        assert_eq!(apply_lame_principal(&unit(), &u, &x), Vector3::new(6.0, 0.0, 0.0));
        let jet = u.jet(&x);
        assert_eq!(jet.laplacian(), Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(jet.grad_div() * 2.0, Vector3::new(4.0, 0.0, 0.0));
    }

    #[test]
    fn variable_mu_lower_order_term() {
        // u = (x1, 0, 0), mu = x1 + 2, lambda = 0 -> (2, 0, 0)
        let coeffs = CoefficientPair::new(
            Arc::new(AffineScalar {
                base: 2.0,
                slope: Vector3::new(1.0, 0.0, 0.0),
            }),
            Arc::new(ConstantScalar(0.0)),
            1.0,
            2.0,
            "affine",
        )
        .unwrap();
        let u = PolynomialField::new([poly(&[([1, 0, 0], 1.0)]), Polynomial::zero(), Polynomial::zero()]);
        let out = apply_lame_full(&coeffs, &u, &Point::new(0.1, 0.5, 0.5));
        assert!((out - Vector3::new(2.0, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn harmonic_gradient_is_annihilated() {
        let h = poly(&[([1, 1, 1], 1.0), ([2, 0, 0], 1.0), ([0, 2, 0], -1.0)]);
        let u = PolynomialField::new([h.derivative(0), h.derivative(1), h.derivative(2)]);
        let out = apply_lame_principal(&unit(), &u, &Point::new(0.4, 0.1, -0.9));
        assert_eq!(out, Vector3::zeros());
    }

    #[test]
    fn a_examples() {
        // u1 = (x2 x3, x1 x3, x1 x2): curl and div vanish
        let u1 = PolynomialField::new([poly(&[([0, 1, 1], 1.0)]), poly(&[([1, 0, 1], 1.0)]), poly(&[([1, 1, 0], 1.0)])]);
        let x = Point::new(0.3, 0.5, -0.2);
        let (v, s) = apply_a(&EllerPairJet {
            v1_jacobian: u1.jet(&x).jacobian,
            v2_gradient: Vector3::zeros(),
        });
        assert_eq!((v, s), (Vector3::zeros(), 0.0));

        // u1 = 0, u2 = x1
        let (v, s) = apply_a(&EllerPairJet {
            v1_jacobian: Matrix3::zeros(),
            v2_gradient: Vector3::new(1.0, 0.0, 0.0),
        });
        assert_eq!((v, s), (Vector3::new(1.0, 0.0, 0.0), 0.0));

        // u1 = (x1^2, 0, 0)
        let u1 = PolynomialField::new([poly(&[([2, 0, 0], 1.0)]), Polynomial::zero(), Polynomial::zero()]);
        let (v, s) = apply_a(&EllerPairJet {
            v1_jacobian: u1.jet(&x).jacobian,
            v2_gradient: Vector3::zeros(),
        });
        assert_eq!((v, s), (Vector3::zeros(), -2.0 * x.x));
    }

    #[test]
    fn a_alpha_examples() {
        let x = Point::new(0.25, 0.0, 0.0);
        // v1 = 0, v2 = -2 x1 with alpha = 3
        let (v, s) = apply_a_alpha(
            &unit(),
            &x,
            &EllerPairJet {
                v1_jacobian: Matrix3::zeros(),
                v2_gradient: Vector3::new(-2.0, 0.0, 0.0),
            },
        )
        .unwrap();
        assert_eq!((v, s), (Vector3::new(-6.0, 0.0, 0.0), 0.0));

        // v1 = grad(x1^2 + x2 x3), v2 = 0 -> (0, -Lap) = (0, -2)
        let sc = poly(&[([2, 0, 0], 1.0), ([0, 1, 1], 1.0)]);
        let v1 = PolynomialField::new([sc.derivative(0), sc.derivative(1), sc.derivative(2)]);
        let (v, s) = apply_a_alpha(
            &unit(),
            &x,
            &EllerPairJet {
                v1_jacobian: v1.jet(&x).jacobian,
                v2_gradient: Vector3::zeros(),
            },
        )
        .unwrap();
        assert_eq!((v, s), (Vector3::zeros(), -2.0));

        let bad = CoefficientPair::new(Arc::new(ConstantScalar(-1.0)), Arc::new(ConstantScalar(3.0)), 1.0, 1.0, "bad").unwrap();
        assert!(apply_a_alpha(&bad, &x, &EllerPairJet {
            v1_jacobian: Matrix3::zeros(),
            v2_gradient: Vector3::zeros(),
        })
        .is_err());
    }

    #[test]
    fn factorization_on_x1_squared_and_linear() {
        let u = PolynomialField::new([poly(&[([2, 0, 0], 1.0)]), Polynomial::zero(), Polynomial::zero()]);
        let x = Point::new(0.1, 0.2, 0.3);
        let (composed, second) = factorized_principal(&unit(), &u.jet(&x), &x).unwrap();
        assert!((composed - Vector3::new(6.0, 0.0, 0.0)).amax() <= 1e-12);
        assert_eq!(second, 0.0);
        let r = factorization_residual(&unit(), &u, &[x]).unwrap();
        assert!(r.vector <= 1e-12);

        let lin = LinearField {
            matrix: Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0),
            offset: Vector3::zeros(),
        };
        let (composed, second) = factorized_principal(&unit(), &lin.jet(&x), &x).unwrap();
        assert_eq!((composed, second), (Vector3::zeros(), 0.0));
        assert_eq!(factorization_residual(&unit(), &ZeroField, &[x]).unwrap(), FactorizationResidual::default());
    }

    #[test]
    fn commutator_is_zero_where_chi_is_flat() {
        let chi = ConstantScalar(1.0);
        let out = commutator_first_order(
            &CoefficientPair::smooth_variable(),
            &chi,
            &Vector3::new(1.0, 2.0, 3.0),
            &Matrix3::new(1.0, 0.0, 2.0, 0.5, 1.0, 0.0, 0.0, 0.3, 1.0),
            &Point::new(0.2, 0.1, 0.0),
        );
        assert_eq!(out, Vector3::zeros());
    }

    #[test]
    fn difference_oracle_matches_declared_derivatives() {
        let u = PolynomialField::new([
            poly(&[([2, 1, 0], 1.0), ([0, 0, 3], -0.5)]),
            poly(&[([1, 1, 1], 2.0)]),
            poly(&[([3, 0, 0], 0.7), ([0, 2, 0], 1.0)]),
        ]);
        let x = Point::new(0.3, -0.4, 0.5);
        let exact = apply_lame_principal(&CoefficientPair::constant(1.5, 0.5).unwrap(), &u, &x);
        let fd = lame_principal_fd(1.5, 0.5, &u, &x, 1e-4);
        assert!((exact - fd).amax() < 1e-6, "{exact} {fd}");
    }
}
