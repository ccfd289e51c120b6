//! Gradients of harmonic polynomials: `Lap grad h = 0` and `div grad h = 0`,
//! so `L grad h = 0` for constant moduli.

use crate::error::{LabError, Result};
use crate::fields::{Polynomial, PolynomialField};

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicGradient {
    h: Polynomial,
}

impl HarmonicGradient {
    /// Checks `Lap h = 0` coefficientwise, up to rounding in the
    /// coefficients of `h`.
    pub fn new(h: Polynomial) -> Result<Self> {
        let d = h.degree().max(1) as f64;
        let tol = 1e-13 * d * d * h.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        let lap = h.laplacian();
        if let Some((exps, coef)) = lap.terms().find(|(_, c)| c.abs() > tol) {
            return Err(LabError::InvalidInput(format!(
                "potential is not harmonic: Laplacian has coefficient {coef} on x^{} y^{} z^{}",
                exps[0], exps[1], exps[2]
            )));
        }
        Ok(Self { h })
    }

    /// `h = x1 x2 x3`; its gradient is homogeneous of degree 2.
    pub fn x1x2x3() -> Self {
        Self {
            h: Polynomial::from_terms([([1, 1, 1], 1.0)]),
        }
    }

    pub fn potential(&self) -> &Polynomial {
        &self.h
    }
}

pub fn harmonic_gradient_field(hg: &HarmonicGradient) -> PolynomialField {
    let h = &hg.h;
    PolynomialField::new([h.derivative(0), h.derivative(1), h.derivative(2)])
}
