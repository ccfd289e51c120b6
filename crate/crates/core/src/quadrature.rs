//! Gauss rules and the spherical product rules used for every ball, annulus
//! and sphere integral in the crate.
//!
//! The ball rule combines a Gauss–Jacobi rule in the radius (weight `rho^2`
//! on `[0, radius]`), a Gauss–Legendre rule in the cosine of the polar angle
//! and a uniform periodic rule in the azimuth. A monomial of total degree `d`
//! is integrated exactly when `d <= 2 * min(n_r, n_p) - 2` and `d < n_a`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::geometry::{AnnulusSpec, BallSpec};
use crate::fields::VectorField;
use crate::Point;

/// Nodes and weights of a one-dimensional rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub–Welsch from the recurrence of monic orthogonal polynomials:
/// diagonal `a`, squared off-diagonal `b` and total mass `mu0`.
fn golub_welsch(a: &[f64], b: &[f64], mu0: f64) -> Rule1d {
    let n = a.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = a[i];
        if i + 1 < n {
            let off = b[i + 1].sqrt();
            jac[(i, i + 1)] = off;
            jac[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Rule1d {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule1d {
    assert!(n >= 1);
    let a = vec![0.0; n];
    let b: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            k * k / (4.0 * k * k - 1.0)
        })
        .collect();
    let mut rule = golub_welsch(&a, &b, 2.0);
    // Legendre nodes are symmetric; enforce it exactly.
    for i in 0..n / 2 {
        let x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
    rule
}

/// Gauss–Jacobi rule on `[-1, 1]` for the weight `(1 - t)^alpha (1 + t)^beta`
/// with non-negative integer exponents.
pub fn gauss_jacobi(n: usize, alpha: u32, beta: u32) -> Rule1d {
    assert!(n >= 1);
    let (al, be) = (alpha as f64, beta as f64);
    let ab = al + be;
    let a: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            if k == 0.0 {
                (be - al) / (ab + 2.0)
            } else {
                (be * be - al * al) / ((2.0 * k + ab) * (2.0 * k + ab + 2.0))
            }
        })
        .collect();
    let b: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let k = k as f64;
            let s = 2.0 * k + ab;
            4.0 * k * (k + al) * (k + be) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
        })
        .collect();
    let fact = |m: u32| (1..=m).map(f64::from).product::<f64>();
    let mu0 = 2f64.powi((alpha + beta + 1) as i32) * fact(alpha) * fact(beta) / fact(alpha + beta + 1);
    golub_welsch(&a, &b, mu0)
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Angular part shared by the ball, annulus and sphere rules: unit directions
/// with weights summing to `4 pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereRule {
    pub directions: Vec<Point>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n_p: usize, n_a: usize) -> Result<Self> {
        if n_p < 2 || n_a < 4 {
            return Err(LabError::InvalidInput(format!(
                "sphere rule needs n_p >= 2 and n_a >= 4, got ({n_p}, {n_a})"
            )));
        }
        let polar = gauss_legendre(n_p);
        let dphi = 2.0 * PI / n_a as f64;
        let mut directions = Vec::with_capacity(n_p * n_a);
        let mut weights = Vec::with_capacity(n_p * n_a);
        for (&ct, &wt) in polar.nodes.iter().zip(&polar.weights) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for m in 0..n_a {
                let phi = (m as f64 + 0.5) * dphi;
                directions.push(Point::new(st * phi.cos(), st * phi.sin(), ct));
                weights.push(wt * dphi);
            }
        }
        Ok(Self {
            directions,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Nodes and surface weights on the sphere `|x - center| = radius`.
    pub fn on_sphere(&self, center: &Point, radius: f64) -> Vec<(Point, f64)> {
        let r2 = radius * radius;
        self.directions
            .iter()
            .zip(&self.weights)
            .map(|(d, &w)| (center + radius * d, r2 * w))
            .collect()
    }
}

/// Spherical product rule for balls and annuli.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleSpec", into = "RuleSpec")]
pub struct ProductBallRule {
    n_r: usize,
    n_p: usize,
    n_a: usize,
    panels: usize,
    radial_ball: Rule1d,
    radial_shell: Rule1d,
    angular: SphereRule,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RuleSpec {
    n_r: usize,
    n_p: usize,
    n_a: usize,
    #[serde(default = "one")]
    panels: usize,
}

fn one() -> usize {
    1
}

impl TryFrom<RuleSpec> for ProductBallRule {
    type Error = LabError;
    fn try_from(s: RuleSpec) -> Result<Self> {
        Self::new(s.n_r, s.n_p, s.n_a)?.with_panels(s.panels)
    }
}

impl From<ProductBallRule> for RuleSpec {
    fn from(r: ProductBallRule) -> Self {
        RuleSpec {
            n_r: r.n_r,
            n_p: r.n_p,
            n_a: r.n_a,
            panels: r.panels,
        }
    }
}

impl ProductBallRule {
    pub fn new(n_r: usize, n_p: usize, n_a: usize) -> Result<Self> {
        if n_r < 2 {
            return Err(LabError::InvalidInput(format!("n_r must be >= 2, got {n_r}")));
        }
        let angular = SphereRule::new(n_p, n_a)?;
        // rho = (1 + t) / 2 maps rho^2 d rho to (1 + t)^2 / 8 dt.
        let jac = gauss_jacobi(n_r, 0, 2);
        let radial_ball = Rule1d {
            nodes: jac.nodes.iter().map(|t| 0.5 * (1.0 + t)).collect(),
            weights: jac.weights.iter().map(|w| w / 8.0).collect(),
        };
        let gl = gauss_legendre(n_r);
        let radial_shell = Rule1d {
            nodes: gl.nodes.iter().map(|t| 0.5 * (1.0 + t)).collect(),
            weights: gl.weights.iter().map(|w| 0.5 * w).collect(),
        };
        Ok(Self {
            n_r,
            n_p,
            n_a,
            panels: 1,
            radial_ball,
            radial_shell,
            angular,
        })
    }

    /// Split the radial interval of annulus integrals into equal panels.
    pub fn with_panels(mut self, panels: usize) -> Result<Self> {
        if panels == 0 {
            return Err(LabError::InvalidInput("panel count must be positive".into()));
        }
        self.panels = panels;
        Ok(self)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.n_r, self.n_p, self.n_a)
    }

    pub fn angular(&self) -> &SphereRule {
        &self.angular
    }

    /// Nodes and weights over a ball. The weights sum to the ball volume.
    pub fn ball_nodes(&self, ball: &BallSpec) -> Vec<(Point, f64)> {
        let r = ball.radius;
        let r3 = r * r * r;
        let mut out = Vec::with_capacity(self.n_r * self.angular.len());
        for (&rho, &wr) in self.radial_ball.nodes.iter().zip(&self.radial_ball.weights) {
            for (d, &wa) in self.angular.directions.iter().zip(&self.angular.weights) {
                out.push((ball.center + (r * rho) * d, r3 * wr * wa));
            }
        }
        out
    }

    /// Nodes and weights over an annulus (Gauss–Legendre panels in the radius
    /// times `rho^2`).
    pub fn annulus_nodes(&self, ann: &AnnulusSpec) -> Vec<(Point, f64)> {
        let width = (ann.r_outer - ann.r_inner) / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.n_r * self.angular.len());
        for p in 0..self.panels {
            let lo = ann.r_inner + p as f64 * width;
            for (&t, &wt) in self.radial_shell.nodes.iter().zip(&self.radial_shell.weights) {
                let rho = lo + width * t;
                let wr = width * wt * rho * rho;
                for (d, &wa) in self.angular.directions.iter().zip(&self.angular.weights) {
                    out.push((ann.center + rho * d, wr * wa));
                }
            }
        }
        out
    }
}

fn checked_sum(nodes: &[(Point, f64)], f: impl Fn(&Point) -> f64) -> Result<f64> {
    let mut acc = CompensatedSum::default();
    for (index, (x, w)) in nodes.iter().enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(LabError::NonFinite { index, point: *x });
        }
        acc.add(w * v);
    }
    Ok(acc.value())
}

/// `sum_i w_i f(x_i)` over the ball.
pub fn integrate_ball(f: impl Fn(&Point) -> f64, ball: &BallSpec, rule: &ProductBallRule) -> Result<f64> {
    checked_sum(&rule.ball_nodes(ball), f)
}

/// `sum_i w_i f(x_i)` over the annulus.
pub fn integrate_annulus(
    f: impl Fn(&Point) -> f64,
    ann: &AnnulusSpec,
    rule: &ProductBallRule,
) -> Result<f64> {
    checked_sum(&rule.annulus_nodes(ann), f)
}

/// `int_B |u|^2 dx`.
pub fn l2_mass_ball<F: VectorField + ?Sized>(u: &F, ball: &BallSpec, rule: &ProductBallRule) -> Result<f64> {
    integrate_ball(|x| u.value(x).norm_squared(), ball, rule)
}

/// Result of a log-domain weighted integral: the value is
/// `mantissa * exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledIntegral {
    pub log_scale: f64,
    pub mantissa: f64,
}

impl ScaledIntegral {
    pub fn zero() -> Self {
        Self {
            log_scale: 0.0,
            mantissa: 0.0,
        }
    }

    /// Natural log of the value; `-inf` when it vanishes.
    pub fn ln(&self) -> f64 {
        if self.mantissa <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_scale + self.mantissa.ln()
        }
    }

    pub fn value(&self) -> Result<f64> {
        if self.mantissa == 0.0 {
            return Ok(0.0);
        }
        let ln = self.log_scale + self.mantissa.abs().ln();
        if ln > f64::MAX.ln() {
            return Err(LabError::WeightOverflow { log_weight: ln });
        }
        Ok(self.mantissa * self.log_scale.exp())
    }
}

/// `int_ann w g dx` with the weight supplied through its logarithm. The
/// exponential is taken once, after factoring out the largest log-weight.
pub fn weighted_log_annulus(
    g: impl Fn(&Point) -> f64,
    log_w: impl Fn(&Point) -> f64,
    ann: &AnnulusSpec,
    rule: &ProductBallRule,
) -> Result<ScaledIntegral> {
    let nodes = rule.annulus_nodes(ann);
    let mut samples = Vec::with_capacity(nodes.len());
    let mut top = f64::NEG_INFINITY;
    for (index, (x, w)) in nodes.iter().enumerate() {
        let gv = g(x);
        let lw = log_w(x);
        if !gv.is_finite() || lw.is_nan() || lw == f64::INFINITY {
            return Err(LabError::NonFinite { index, point: *x });
        }
        if gv != 0.0 {
            top = top.max(lw);
        }
        samples.push((w * gv, lw));
    }
    if top == f64::NEG_INFINITY {
        return Ok(ScaledIntegral::zero());
    }
    let mantissa = samples
        .iter()
        .map(|&(wg, lw)| if wg == 0.0 { 0.0 } else { wg * (lw - top).exp() })
        .collect::<CompensatedSum>()
        .value();
    Ok(ScaledIntegral {
        log_scale: top,
        mantissa,
    })
}

/// `int_ann w g dx`, erroring when the result leaves the f64 range.
pub fn weighted_l2_annulus(
    g: impl Fn(&Point) -> f64,
    log_w: impl Fn(&Point) -> f64,
    ann: &AnnulusSpec,
    rule: &ProductBallRule,
) -> Result<f64> {
    weighted_log_annulus(g, log_w, ann, rule)?.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_moments() {
        let rule = gauss_legendre(6);
        for p in 0..12 {
            let q: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert_relative_eq!(q, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobi_rho_squared_moments() {
        let rule = ProductBallRule::new(5, 4, 8).unwrap();
        // int_0^1 rho^2 rho^p = 1 / (p + 3), exact for p <= 2 n_r - 1
        for p in 0..10 {
            let q: f64 = rule
                .radial_ball
                .nodes
                .iter()
                .zip(&rule.radial_ball.weights)
                .map(|(x, w)| w * x.powi(p))
                .sum();
            assert_relative_eq!(q, 1.0 / (p as f64 + 3.0), max_relative = 1e-13);
        }
    }

    #[test]
    fn weights_positive_and_volume() {
        let rule = ProductBallRule::new(3, 2, 4).unwrap();
        let ball = BallSpec::centered(1.7).unwrap();
        let nodes = rule.ball_nodes(&ball);
        assert!(nodes.iter().all(|n| n.1 > 0.0));
        let vol: f64 = nodes.iter().map(|n| n.1).sum();
        assert_relative_eq!(vol, ball.volume(), max_relative = 1e-12);
    }

    #[test]
    fn rule_minimum_counts() {
        assert!(ProductBallRule::new(1, 4, 8).is_err());
        assert!(ProductBallRule::new(4, 1, 8).is_err());
        assert!(ProductBallRule::new(4, 4, 3).is_err());
    }

    #[test]
    fn ball_examples() {
        let rule = ProductBallRule::new(5, 8, 16).unwrap();
        let unit = BallSpec::centered(1.0).unwrap();
        assert_relative_eq!(integrate_ball(|_| 1.0, &unit, &rule).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-12);
        assert_relative_eq!(
            integrate_ball(|x| x.norm_squared(), &unit, &rule).unwrap(),
            4.0 * PI / 5.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            integrate_ball(|x| x.x * x.x * x.y * x.y, &unit, &rule).unwrap(),
            4.0 * PI / 105.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn non_finite_node_is_named() {
        let rule = ProductBallRule::new(3, 2, 4).unwrap();
        let unit = BallSpec::centered(1.0).unwrap();
        let err = integrate_ball(|x| if x.z > 0.0 { f64::NAN } else { 1.0 }, &unit, &rule).unwrap_err();
        assert!(matches!(err, LabError::NonFinite { .. }));
    }

    #[test]
    fn annulus_examples() {
        let rule = ProductBallRule::new(8, 6, 12).unwrap();
        let ann = AnnulusSpec::centered(0.5, 1.0).unwrap();
        assert_relative_eq!(weighted_l2_annulus(|_| 1.0, |_| 0.0, &ann, &rule).unwrap(), 7.0 * PI / 6.0, max_relative = 1e-12);
        assert_eq!(weighted_l2_annulus(|_| 0.0, |_| 0.0, &ann, &rule).unwrap(), 0.0);
        assert_relative_eq!(
            weighted_l2_annulus(|_| 1.0, |x| -2.0 * x.norm().ln(), &ann, &rule).unwrap(),
            2.0 * PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn overflow_reports_rescaling() {
        let rule = ProductBallRule::new(4, 4, 8).unwrap();
        let ann = AnnulusSpec::centered(0.5, 1.0).unwrap();
        let scaled = weighted_log_annulus(|_| 1.0, |_| 800.0, &ann, &rule).unwrap();
        assert_relative_eq!(scaled.ln(), 800.0 + (7.0 * PI / 6.0).ln(), max_relative = 1e-12);
        assert!(matches!(scaled.value(), Err(LabError::WeightOverflow { .. })));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1e16, 1.0, -1e16, 1.0].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }
}
