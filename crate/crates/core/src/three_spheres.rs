//! Three-ball mass ratios, the iteration bookkeeping behind the chain of
//! balls, and vanishing-order profiles.

use serde::{Deserialize, Serialize};

use crate::carleman::CarlemanWeights;
use crate::error::{LabError, Result};
use crate::fields::VectorField;
use crate::geometry::BallSpec;
use crate::quadrature::{l2_mass_ball, ProductBallRule};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RadiiSpec", into = "RadiiSpec")]
pub struct ThreeRadii {
    r1: f64,
    r2: f64,
    r_out: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadiiSpec {
    r1: f64,
    r2: f64,
    r_out: f64,
}

impl TryFrom<RadiiSpec> for ThreeRadii {
    type Error = LabError;
    fn try_from(s: RadiiSpec) -> Result<Self> {
        Self::new(s.r1, s.r2, s.r_out)
    }
}

impl From<ThreeRadii> for RadiiSpec {
    fn from(t: ThreeRadii) -> Self {
        Self {
            r1: t.r1,
            r2: t.r2,
            r_out: t.r_out,
        }
    }
}

impl ThreeRadii {
    pub fn new(r1: f64, r2: f64, r_out: f64) -> Result<Self> {
        if !(0.0 < r1 && r1 < r2 && r2 < r_out && r_out.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "need 0 < r1 < r2 < R, got ({r1}, {r2}, {r_out})"
            )));
        }
        Ok(Self { r1, r2, r_out })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn r_out(&self) -> f64 {
        self.r_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeSpheresReport {
    pub n1: f64,
    pub n2: f64,
    #[serde(rename = "nR")]
    pub n_r: f64,
    /// `ln(nR / n2) / ln(nR / n1)`; absent for degenerate reports.
    pub sigma_star: Option<f64>,
    pub degenerate: bool,
}

impl ThreeSpheresReport {
    pub fn from_masses(n1: f64, n2: f64, n_r: f64) -> Self {
        let degenerate = !(0.0 < n1 && n1 < n2 && n2 < n_r);
        let sigma_star = (!degenerate).then(|| (n_r / n2).ln() / (n_r / n1).ln());
        Self {
            n1,
            n2,
            n_r,
            sigma_star,
            degenerate,
        }
    }

    /// `n2 / (n1^sigma nR^(1 - sigma))`.
    pub fn constant_at(&self, sigma: f64) -> f64 {
        (self.n2.ln() - sigma * self.n1.ln() - (1.0 - sigma) * self.n_r.ln()).exp()
    }
}

/// Masses `int_{B_r}|u|^2` on the three concentric balls about the origin.
pub fn verify_three_spheres<F: VectorField + ?Sized>(
    u: &F,
    radii: &ThreeRadii,
    rule: &ProductBallRule,
) -> Result<ThreeSpheresReport> {
    let mass = |r: f64| l2_mass_ball(u, &BallSpec::centered(r)?, rule);
    Ok(ThreeSpheresReport::from_masses(
        mass(radii.r1)?,
        mass(radii.r2)?,
        mass(radii.r_out)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaCurve {
    /// `(sigma, C(sigma))` on the sampled grid.
    pub points: Vec<(f64, f64)>,
    pub sigma_min: f64,
    /// `C` at `sigma_min`; equals 1 up to rounding.
    pub c_at_sigma_min: f64,
    pub reports_used: usize,
}

/// `C(sigma) = max over reports of n2 / (n1^sigma nR^(1 - sigma))` at
/// `samples` equispaced interior points of (0, 1).
pub fn fit_sigma_c(reports: &[ThreeSpheresReport], samples: usize) -> Result<SigmaCurve> {
    let good: Vec<&ThreeSpheresReport> = reports.iter().filter(|r| !r.degenerate).collect();
    if good.is_empty() {
        return Err(LabError::Degenerate("no nondegenerate three-spheres report".into()));
    }
    let c = |sigma: f64| good.iter().map(|r| r.constant_at(sigma)).fold(0.0, f64::max);
    let sigma_min = good
        .iter()
        .filter_map(|r| r.sigma_star)
        .fold(f64::INFINITY, f64::min);
    let points = (1..=samples)
        .map(|k| k as f64 / (samples + 1) as f64)
        .map(|s| (s, c(s)))
        .collect();
    Ok(SigmaCurve {
        points,
        sigma_min,
        c_at_sigma_min: c(sigma_min),
        reports_used: good.len(),
    })
}

/// `(ln a)^-1` for the weights `(R_out, theta, s)`, where `a = theta2 / theta`
/// and `theta2` is the midpoint of `theta` and the half-level radius.
pub fn inv_ln_a(r_out: f64, theta: f64, s: f64) -> Result<f64> {
    let w = CarlemanWeights::new(r_out, theta, s)?;
    let theta1 = w.sublevel_radius(0.5 * w.phi_star())?;
    let a = 0.5 * (theta + theta1) / theta;
    Ok(1.0 / a.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationPlan {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "R_out")]
    pub r_out: f64,
    pub eps: f64,
    pub s: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub a: f64,
    pub r: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub sigma: f64,
    pub eta: f64,
    pub inv_ln_a: f64,
}

pub fn iteration_plan(r1: f64, r2: f64, r_out: f64, eps: f64, s: f64) -> Result<IterationPlan> {
    ThreeRadii::new(r1, r2, r_out)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::OutOfRange {
            what: "eps",
            value: eps,
            range: "(0, 1)".into(),
        });
    }
    let r0 = 0.5 * (r_out + r2);
    let theta = r2 * r_out / r0;
    let w = CarlemanWeights::new(r_out, theta, s)?;
    let theta1 = w.sublevel_radius(0.5 * w.phi_star())?;
    let theta2 = 0.5 * (theta + theta1);
    let a = theta2 / theta;
    let r = 0.5 * r1;
    let ln_a = a.ln();
    if !(ln_a > 0.0) {
        return Err(LabError::Degenerate(format!("ratio a = {a} is not above 1")));
    }
    let mut n = ((r2 / r).ln() / ln_a).ceil().max(1.0) as i32;
    while r * a.powi(n) < r2 {
        n += 1;
    }
    while n > 1 && r * a.powi(n - 1) >= r2 {
        n -= 1;
    }
    let nf = n as f64;
    Ok(IterationPlan {
        r1,
        r2,
        r_out,
        eps,
        s,
        r0,
        theta,
        theta1,
        theta2,
        a,
        r,
        n: n as u32,
        sigma: eps.powi(n),
        eta: ((nf + 1.0) / nf).exp(),
        inv_ln_a: 1.0 / ln_a,
    })
}

impl IterationPlan {
    /// Names of violated invariants; empty when the plan is consistent.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let n = self.n as i32;
        let x = (2.0 * self.r2 / self.r1).ln() * self.inv_ln_a;
        let slack = 1e-12 * x.abs().max(1.0);
        let checks = [
            (self.r2 < self.r0 && self.r0 < self.r_out, "R2 < R0 < R_out"),
            (self.theta < self.theta1 && self.theta1 <= self.r_out, "theta < theta1 <= R_out"),
            (self.a > 1.0, "a > 1"),
            (self.r * self.a.powi(n - 1) < self.r2, "r a^(N-1) < R2"),
            (self.r2 <= self.r * self.a.powi(n), "R2 <= r a^N"),
            (x - slack <= self.n as f64 && (self.n as f64) < x + 1.0 + slack, "log bracket on N"),
            (self.eta > 2.0, "eta > 2"),
        ];
        for (ok, name) in checks {
            if !ok {
                out.push(name);
            }
        }
        out
    }
}

/// `E1^((1 - sigma) / (1 - eps)) * mass^sigma` with `sigma = eps^N`.
pub fn chain_bound(plan: &IterationPlan, e1: f64, mass: f64) -> f64 {
    let sigma = plan.sigma;
    e1.powf((1.0 - sigma) / (1.0 - plan.eps)) * mass.powf(sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TendsToZero,
    NoConclusion,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCheck {
    pub eps: f64,
    pub inv_ln_a: f64,
    pub exponent: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Values strictly decrease along the list.
    pub tail_monotone: bool,
    /// Radius below which the values decrease as `R1` shrinks; absent when
    /// the exponent is not positive.
    pub onset_radius: Option<f64>,
    pub verdict: Verdict,
}

/// `(C~ / R1^4) exp(-e^-2 R1^-(eps - inv_ln_a))` over the radii.
pub fn decay_limit_check(eps: f64, inv_ln_a: f64, c_tilde: f64, radii: &[f64]) -> Result<DecayCheck> {
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidInput("radii must be positive and decreasing".into()));
    }
    let kappa = eps - inv_ln_a;
    let e2 = (-2.0f64).exp();
    let values: Vec<f64> = radii
        .iter()
        .map(|&r| c_tilde / r.powi(4) * (-e2 * r.powf(-kappa)).exp())
        .collect();
    let tail_monotone = values.windows(2).all(|w| w[1] < w[0]);
    let onset_radius = (kappa > 0.0).then(|| (kappa * e2 / 4.0).powf(1.0 / kappa));
    Ok(DecayCheck {
        eps,
        inv_ln_a,
        exponent: kappa,
        radii: radii.to_vec(),
        values,
        tail_monotone,
        onset_radius,
        verdict: if kappa > 0.0 {
            Verdict::TendsToZero
        } else {
            Verdict::NoConclusion
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    IdenticallyZero,
    Nonvanishing,
    PolynomialOrder { order: u32 },
    ExponentialType,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// `ln m ~ ln m_max - c r^-eps_hat`.
    pub c: f64,
    pub eps_hat: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VanishingProfile {
    pub center: [f64; 3],
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    pub slope: Option<f64>,
    pub exponential: Option<ExponentialFit>,
    pub classification: Classification,
}

/// Slope tolerance for matching `2k + 3`.
const ORDER_TOL: f64 = 0.25;

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn vanishing_profile<F: VectorField + ?Sized>(
    u: &F,
    center: Point,
    radii: &[f64],
    rule: &ProductBallRule,
) -> Result<VanishingProfile> {
    if radii.len() < 2 || radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidInput("need at least two positive increasing radii".into()));
    }
    let masses = radii
        .iter()
        .map(|&r| l2_mass_ball(u, &BallSpec::new(center, r)?, rule))
        .collect::<Result<Vec<f64>>>()?;
    let mut profile = VanishingProfile {
        center: [center.x, center.y, center.z],
        radii: radii.to_vec(),
        masses,
        slope: None,
        exponential: None,
        classification: Classification::IdenticallyZero,
    };
    if profile.masses.iter().any(|&m| m <= 0.0) {
        return Ok(profile);
    }
    let ln_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ln_m: Vec<f64> = profile.masses.iter().map(|m| m.ln()).collect();
    let slope = least_squares(&ln_r, &ln_m).0;
    profile.slope = Some(slope);

    let m_max = profile.masses.iter().copied().fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .masses
        .iter()
        .zip(&ln_r)
        .filter(|(&m, _)| m < 0.5 * m_max)
        .map(|(&m, &lr)| (lr, (-(m / m_max).ln()).ln()))
        .unzip();
    if xs.len() >= 2 {
        let (b, a) = least_squares(&xs, &ys);
        profile.exponential = Some(ExponentialFit {
            c: a.exp(),
            eps_hat: -b,
            points: xs.len(),
        });
    }

    let k = ((slope - 3.0) / 2.0).round();
    profile.classification = if k >= 0.0 && (slope - (2.0 * k + 3.0)).abs() < ORDER_TOL {
        if k == 0.0 {
            Classification::Nonvanishing
        } else {
            Classification::PolynomialOrder { order: k as u32 }
        }
    } else if profile.exponential.is_some_and(|e| e.eps_hat > 0.0) && local_slopes_grow(&ln_r, &ln_m) {
        Classification::ExponentialType
    } else {
        Classification::Indeterminate
    };
    Ok(profile)
}

/// Local log-log slopes increase as the radius shrinks.
fn local_slopes_grow(ln_r: &[f64], ln_m: &[f64]) -> bool {
    let slopes: Vec<f64> = (1..ln_r.len())
        .map(|i| (ln_m[i] - ln_m[i - 1]) / (ln_r[i] - ln_r[i - 1]))
        .collect();
    slopes.windows(2).all(|w| w[0] > w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantField, ZeroField};
    use crate::solutions::{harmonic_gradient_field, HarmonicGradient};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn rule() -> ProductBallRule {
        ProductBallRule::new(6, 8, 16).unwrap()
    }

    #[test]
    fn homogeneous_solution_gives_half() {
        let u = harmonic_gradient_field(&HarmonicGradient::x1x2x3());
        let rep = verify_three_spheres(&u, &ThreeRadii::new(0.25, 0.5, 1.0).unwrap(), &rule()).unwrap();
        assert_relative_eq!(rep.sigma_star.unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(rep.n2 * rep.n2 / (rep.n1 * rep.n_r), 1.0, epsilon = 1e-12);
        let c = verify_three_spheres(&ConstantField(Vector3::x()), &ThreeRadii::new(0.25, 0.5, 1.0).unwrap(), &rule())
            .unwrap();
        assert_relative_eq!(c.sigma_star.unwrap(), 0.5, epsilon = 1e-12);
        let z = verify_three_spheres(&ZeroField, &ThreeRadii::new(0.25, 0.5, 1.0).unwrap(), &rule()).unwrap();
        assert!(z.degenerate && z.sigma_star.is_none());
    }

    #[test]
    fn curve_from_duplicates_matches_single() {
        let u = harmonic_gradient_field(&HarmonicGradient::x1x2x3());
        let rep = verify_three_spheres(&u, &ThreeRadii::new(0.25, 0.5, 1.0).unwrap(), &rule()).unwrap();
        let one = fit_sigma_c(&[rep], 19).unwrap();
        let two = fit_sigma_c(&[rep, rep], 19).unwrap();
        assert_eq!(one.points, two.points);
        assert!((one.c_at_sigma_min - 1.0).abs() < 1e-10);
        assert!(fit_sigma_c(&[ThreeSpheresReport::from_masses(0.0, 0.0, 0.0)], 9).is_err());
    }

    #[test]
    fn worked_plan() {
        let p = iteration_plan(0.1, 0.5, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(p.theta, 2.0 / 3.0);
        assert_eq!(p.n, 21);
        assert_eq!(p.sigma, 0.5f64.powi(21));
        assert_eq!(p.eta, (22.0f64 / 21.0).exp());
        assert!((p.theta1 - 0.8271).abs() < 1e-4);
        assert!((p.a - 1.1204).abs() < 1e-4);
        assert_eq!(p.r, 0.05);
        assert!(p.violations().is_empty());
        let x = (2.0 * p.r2 / p.r1).ln() * p.inv_ln_a;
        assert!((x - 20.26).abs() < 0.02);
        assert!(iteration_plan(0.1, 0.5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn chain_bound_examples() {
        let p = iteration_plan(0.1, 0.5, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(chain_bound(&p, 2.0, 0.0), 0.0);
        assert_relative_eq!(chain_bound(&p, 2.0, 1.0), 2f64.powf((1.0 - 0.5f64.powi(21)) / 0.5), max_relative = 1e-15);
        let mut one = p;
        one.n = 1;
        one.sigma = one.eps;
        assert_relative_eq!(chain_bound(&one, 3.0, 0.7), 3.0 * 0.7f64.powf(0.5), max_relative = 1e-15);
    }

    #[test]
    fn decay_examples() {
        let radii = [1e-1, 1e-2, 1e-3, 1e-4];
        let small = inv_ln_a(1.0, 0.02, 1.0).unwrap();
        let large = inv_ln_a(1.0, 0.05, 1.0).unwrap();
        assert!((small - 0.36).abs() < 0.01 && (large - 0.53).abs() < 0.01);
        assert_eq!(decay_limit_check(0.5, small, 1.0, &radii).unwrap().verdict, Verdict::TendsToZero);
        assert_eq!(decay_limit_check(0.5, large, 1.0, &radii).unwrap().verdict, Verdict::NoConclusion);
        assert_eq!(decay_limit_check(0.5, 0.5, 1.0, &radii).unwrap().verdict, Verdict::NoConclusion);
        assert!(decay_limit_check(0.5, 0.3, 1.0, &[1e-2, 1e-1]).is_err());
    }

    #[test]
    fn vanishing_order_of_x1x2x3() {
        let u = harmonic_gradient_field(&HarmonicGradient::x1x2x3());
        let radii: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let p = vanishing_profile(&u, Point::zeros(), &radii, &rule()).unwrap();
        assert!((p.slope.unwrap() - 7.0).abs() < 1e-9);
        assert_eq!(p.classification, Classification::PolynomialOrder { order: 2 });
        let z = vanishing_profile(&ZeroField, Point::zeros(), &radii, &rule()).unwrap();
        assert_eq!(z.classification, Classification::IdenticallyZero);
    }
}
