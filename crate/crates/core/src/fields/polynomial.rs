//! Sparse polynomials in three variables and the vector fields built from them.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use std::collections::BTreeMap;

use super::{DisplacementField, Jet, VectorField};
use crate::Point;

/// `sum_k c_k x^a y^b z^c` stored as exponent triple -> coefficient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<[u32; 3], f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ([u32; 3], f64)>) -> Self {
        let mut p = Self::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    pub fn add_term(&mut self, exps: [u32; 3], coef: f64) {
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += coef;
        if *entry == 0.0 {
            self.terms.remove(&exps);
        }
    }

    /// Random polynomial with every monomial of total degree `<= degree` and
    /// coefficients uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(degree: u32, rng: &mut R) -> Self {
        let mut p = Self::zero();
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    p.add_term([a, b, c], rng.random_range(-1.0..=1.0));
                }
            }
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32; 3], &f64)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32))
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[axis] > 0 {
                let mut d = *e;
                d[axis] -= 1;
                out.add_term(d, c * e[axis] as f64);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        let mut out = Self::zero();
        for axis in 0..3 {
            for (e, c) in self.derivative(axis).derivative(axis).terms {
                out.add_term(e, c);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, c)| (*e, c * s)))
    }
}

/// Vector field whose components are polynomials, with exact derivatives.
#[derive(Clone, Debug)]
pub struct PolynomialField {
    components: [Polynomial; 3],
    grad: [[Polynomial; 3]; 3],
    hess: [[[Polynomial; 3]; 3]; 3],
}

impl PolynomialField {
    pub fn new(components: [Polynomial; 3]) -> Self {
        let grad: [[Polynomial; 3]; 3] =
            std::array::from_fn(|i| std::array::from_fn(|j| components[i].derivative(j)));
        let hess = std::array::from_fn(|i| {
            std::array::from_fn(|j| std::array::from_fn(|k| grad[i][j].derivative(k)))
        });
        Self {
            components,
            grad,
            hess,
        }
    }

    pub fn random<R: Rng + ?Sized>(degree: u32, rng: &mut R) -> Self {
        Self::new(std::array::from_fn(|_| Polynomial::random(degree, rng)))
    }

    pub fn components(&self) -> &[Polynomial; 3] {
        &self.components
    }
}

impl VectorField for PolynomialField {
    fn value(&self, x: &Point) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.components[i].eval(x))
    }
}

impl DisplacementField for PolynomialField {
    fn jet(&self, x: &Point) -> Jet {
        Jet {
            value: self.value(x),
            jacobian: Matrix3::from_fn(|i, j| self.grad[i][j].eval(x)),
            hessians: std::array::from_fn(|i| Matrix3::from_fn(|j, k| self.hess[i][j][k].eval(x))),
        }
    }
}
