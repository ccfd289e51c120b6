use lamelab_core::carleman::{carleman_scan, radial_bump, CarlemanWeights};
use lamelab_core::cauchy::{stability_experiment, BetaRule, StabilitySettings};
use lamelab_core::fields::{
    ball_samples, derivative_consistency, validate_ellipticity, CoefficientPair, PolynomialField,
    VectorField,
};
use lamelab_core::geometry::{BallSpec, Grid3};
use lamelab_core::lame::{apply_lame_full, factorization_residual};
use lamelab_core::solutions::solve_dirichlet;
use lamelab_core::three_spheres::{
    chain_bound, decay_limit_check, fit_sigma_c, iteration_plan, vanishing_profile, verify_three_spheres, ThreeRadii,
    ThreeSpheresReport,
};
use lamelab_core::Point;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::report::Outputs;
use crate::svg::{line_plot, Axes, Series};
use crate::Failure;

pub struct Context {
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Context {
    fn seed(&self, configured: Option<u64>) -> u64 {
        self.seed.or(configured).unwrap_or(0)
    }

    fn progress(&self, msg: impl FnOnce() -> String) {
        if !self.quiet {
            eprintln!("{}", msg());
        }
    }
}

const LOG_LOG: Axes = Axes { log_x: true, log_y: true };

fn positive(what: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Config(format!("{what} must be positive and finite, got {v}")))
    }
}

pub fn run(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outputs, Failure> {
    match cfg {
        ExperimentConfig::EllipticityCheck(c) => ellipticity(c, ctx),
        ExperimentConfig::FactorizationCheck(c) => factorization(c, ctx),
        ExperimentConfig::CarlemanScan(c) => carleman(c, ctx),
        ExperimentConfig::ThreeSpheres(c) => three_spheres(c, ctx),
        ExperimentConfig::IterationPlan(c) => plan(c),
        ExperimentConfig::Vanishing(c) => vanishing(c, ctx),
        ExperimentConfig::CauchyStability(c) => cauchy(c, ctx),
        ExperimentConfig::SolverConvergence(c) => convergence(c, ctx),
    }
}

fn ellipticity(c: &EllipticityConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let coeffs = c.coefficients.build()?;
    let region = BallSpec::new(Point::from(c.center), c.radius).map_err(config_error)?;
    if c.samples == 0 {
        return Err(Failure::Config("samples must be positive".into()));
    }
    positive("step", c.step)?;
    let reach = Point::from(c.center).norm() + c.radius + c.step;
    let solution = c.solution.as_ref().map(|s| s.build(&c.coefficients, reach, ctx.quiet)).transpose()?;
    let field = solution.as_ref().map(|s| s.analytic("the derivative check")).transpose()?;

    let report = validate_ellipticity(&coeffs, &region, c.samples)?;
    let consistency = field.map(|u| derivative_consistency(u, &ball_samples(&region, c.samples.min(200)), c.step));
    let mut out = Outputs::default();
    out.check(report.pass, || {
        format!(
            "ellipticity fails: min mu {} (alpha0 {}), min 2 mu + lambda {} (beta0 {})",
            report.min_mu, report.alpha0, report.min_two_mu_plus_lambda, report.beta0
        )
    });
    if let Some(d) = consistency {
        out.check(d <= c.consistency_tol, || {
            format!("derivative consistency {d:.3e} exceeds {:.1e}", c.consistency_tol)
        });
    }
    out.json(
        "ellipticity.json",
        &json!({
            "coefficients": coeffs.label(),
            "report": report,
            "derivative_consistency": consistency,
            "step": c.step,
        }),
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct FactorizationRow {
    field: usize,
    vector: f64,
    scalar: f64,
}

fn factorization(c: &FactorizationConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let coeffs = c.coefficients.build()?;
    let region = BallSpec::centered(c.radius).map_err(config_error)?;
    if c.fields == 0 || c.probes == 0 {
        return Err(Failure::Config("fields and probes must be positive".into()));
    }
    let seed = ctx.seed(c.seed);
    let probes = ball_samples(&region, c.probes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(c.fields);
    for field in 0..c.fields {
        let u = PolynomialField::random(c.degree, &mut rng);
        let r = factorization_residual(&coeffs, &u, &probes)?;
        rows.push(FactorizationRow {
            field,
            vector: r.vector,
            scalar: r.scalar,
        });
    }
    let vector = rows.iter().map(|r| r.vector).fold(0.0, f64::max);
    let scalar = rows.iter().map(|r| r.scalar).fold(0.0, f64::max);
    let mut out = Outputs::default();
    out.check(vector <= c.vector_tol, || format!("vector residual {vector:.3e} exceeds {:.1e}", c.vector_tol));
    out.check(scalar <= c.scalar_tol, || format!("second component {scalar:.3e} exceeds {:.1e}", c.scalar_tol));
    out.json(
        "factorization.json",
        &json!({
            "coefficients": coeffs.label(),
            "seed": seed,
            "degree": c.degree,
            "probes": c.probes,
            "max_vector_residual": vector,
            "max_second_component": scalar,
        }),
    )?;
    out.csv("factorization.csv", rows)?;
    ctx.progress(|| format!("factorization residual {vector:.3e}, second component {scalar:.3e}"));
    Ok(out)
}

fn carleman(c: &CarlemanConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let coeffs = c.coefficients.build()?;
    let w = CarlemanWeights::new(c.r_out, c.theta, c.s).map_err(config_error)?;
    for &tau in &c.taus {
        positive("tau", tau)?;
    }
    let rule = c.quadrature.build()?;
    let solution = match &c.solution {
        Some(s) => s.build(&c.coefficients, c.r_out, ctx.quiet)?,
        None => crate::config::Solution::Analytic(std::sync::Arc::new(
            radial_bump(c.theta, c.r_out, Vector3::x()).map_err(config_error)?,
        )),
    };
    let u = solution.analytic("the Carleman scan")?;
    let rows = carleman_scan(&coeffs, &w, u, &c.taus, &w.annulus(), &rule)?;
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.ratio), b.max(r.ratio)));
    let spread = if rows.is_empty() { None } else { Some(hi / lo) };
    let mut out = Outputs::default();
    for r in &rows {
        let finite = [r.t1, r.t2, r.t3, r.rhs, r.ratio].iter().all(|v| v.is_finite());
        out.check(finite, || format!("non-finite scan entry at tau = {}", r.tau));
    }
    if let (Some(bound), Some(s)) = (c.ratio_spread_bound, spread) {
        out.check(s <= bound, || format!("ratio spread {s:.3} exceeds {bound}"));
    }
    out.json(
        "carleman.json",
        &json!({
            "weights": w,
            "phi_star": w.phi_star(),
            "coefficients": coeffs.label(),
            "rows": rows,
            "ratio_spread": spread,
        }),
    )?;
    out.csv("carleman.csv", rows.iter())?;
    let pick = |f: fn(&lamelab_core::carleman::ScanRow) -> f64| rows.iter().map(|r| (r.tau, f(r))).collect();
    out.svg(
        "carleman_sides.svg",
        line_plot(
            "Carleman integrals",
            "tau",
            "value",
            LOG_LOG,
            &[
                Series::new("t1", pick(|r| r.t1)),
                Series::new("t2", pick(|r| r.t2)),
                Series::new("t3", pick(|r| r.t3)),
                Series::new("rhs", pick(|r| r.rhs)),
            ],
        ),
    );
    out.svg(
        "carleman_ratio.svg",
        line_plot(
            "(t1 + t2 + t3) / rhs",
            "tau",
            "ratio",
            LOG_LOG,
            &[Series::new("ratio", pick(|r| r.ratio))],
        ),
    );
    Ok(out)
}

#[derive(Serialize)]
struct ReportRow {
    label: String,
    n1: f64,
    n2: f64,
    #[serde(rename = "nR")]
    n_r: f64,
    sigma_star: Option<f64>,
    degenerate: bool,
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn three_spheres(c: &ThreeSpheresConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let [r1, r2, r_out] = c.radii;
    let radii = ThreeRadii::new(r1, r2, r_out).map_err(config_error)?;
    let rule = c.quadrature.build()?;
    if c.solution.is_none() && c.kelvin_family.is_none() {
        return Err(Failure::Config("three-spheres needs a solution or a kelvin_family".into()));
    }
    if c.sigma_samples == 0 {
        return Err(Failure::Config("sigma_samples must be positive".into()));
    }
    let mut fields: Vec<(String, crate::config::Solution)> = Vec::new();
    if let Some(s) = &c.solution {
        fields.push(("solution".into(), s.build(&c.coefficients, r_out, ctx.quiet)?));
    }
    let seed = ctx.seed(c.seed);
    if let Some(fam) = &c.kelvin_family {
        let [lo, hi] = fam.distance;
        if !(r_out < lo && lo <= hi && hi.is_finite()) {
            return Err(Failure::Config(format!(
                "kelvin_family distances must satisfy R_out < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..fam.count {
            let y = random_unit(&mut rng) * if hi > lo { rng.random_range(lo..hi) } else { lo };
            let spec = SolutionSpec::Kelvin {
                source: y.into(),
                direction: random_unit(&mut rng).into(),
            };
            fields.push((format!("kelvin_{k}"), spec.build(&c.coefficients, r_out, ctx.quiet)?));
        }
    }
    let mut reports: Vec<ThreeSpheresReport> = Vec::with_capacity(fields.len());
    for (_, f) in &fields {
        reports.push(verify_three_spheres(f.values(), &radii, &rule)?);
    }
    let curve = fit_sigma_c(&reports, c.sigma_samples).ok();
    let mut out = Outputs::default();
    if c.require_nondegenerate {
        for ((label, _), r) in fields.iter().zip(&reports) {
            let ok = !r.degenerate && r.sigma_star.is_some_and(|s| 0.0 < s && s < 1.0);
            out.check(ok, || format!("{label}: degenerate three-spheres report {r:?}"));
        }
    }
    let rows: Vec<ReportRow> = fields
        .iter()
        .zip(&reports)
        .map(|((label, _), r)| ReportRow {
            label: label.clone(),
            n1: r.n1,
            n2: r.n2,
            n_r: r.n_r,
            sigma_star: r.sigma_star,
            degenerate: r.degenerate,
        })
        .collect();
    out.json(
        "three_spheres.json",
        &json!({
            "radii": radii,
            "seed": seed,
            "reports": rows,
            "curve": curve,
        }),
    )?;
    out.csv("three_spheres.csv", rows)?;
    if let Some(curve) = &curve {
        #[derive(Serialize)]
        struct CurveRow {
            sigma: f64,
            c: f64,
        }
        out.csv("sigma_curve.csv", curve.points.iter().map(|&(sigma, c)| CurveRow { sigma, c }))?;
        out.svg(
            "sigma_curve.svg",
            line_plot(
                "C(sigma) = max n2 / (n1^sigma nR^(1 - sigma))",
                "sigma",
                "C",
                Axes {
                    log_x: false,
                    log_y: true,
                },
                &[Series::new("C(sigma)", curve.points.clone())],
            ),
        );
        ctx.progress(|| format!("min sigma_star {:.6}, C there {:.12}", curve.sigma_min, curve.c_at_sigma_min));
    }
    Ok(out)
}

fn plan(c: &PlanConfig) -> Result<Outputs, Failure> {
    let p = iteration_plan(c.r1, c.r2, c.r_out, c.eps, c.s).map_err(config_error)?;
    let chain = match &c.chain {
        Some(ch) => {
            positive("chain e1", ch.e1)?;
            if !(ch.mass >= 0.0 && ch.mass.is_finite()) {
                return Err(Failure::Config(format!("chain mass must be nonnegative, got {}", ch.mass)));
            }
            Some(chain_bound(&p, ch.e1, ch.mass))
        }
        None => None,
    };
    let decay = c
        .decay
        .as_ref()
        .map(|d| decay_limit_check(c.eps, p.inv_ln_a, d.c_tilde, &d.radii))
        .transpose()
        .map_err(config_error)?;
    let violations = p.violations();
    let mut out = Outputs::default();
    for v in &violations {
        out.check(false, || format!("iteration plan invariant violated: {v}"));
    }
    out.json(
        "plan.json",
        &json!({
            "plan": p,
            "violations": violations,
            "chain_bound": chain,
            "decay": decay,
        }),
    )?;
    if let Some(d) = &decay {
        out.svg(
            "decay.svg",
            line_plot(
                "(C / R1^4) exp(-e^-2 R1^-(eps - 1/ln a))",
                "R1",
                "value",
                LOG_LOG,
                &[Series::new("values", d.radii.iter().copied().zip(d.values.iter().copied()).collect())],
            ),
        );
    }
    Ok(out)
}

fn vanishing(c: &VanishingConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let rule = c.quadrature.build()?;
    let center = Point::from(c.center);
    let reach = center.norm() + c.radii.iter().copied().fold(0.0, f64::max);
    let solution = c.solution.build(&c.coefficients, reach, ctx.quiet)?;
    let profile = vanishing_profile(solution.values(), center, &c.radii, &rule).map_err(config_error)?;
    let mut out = Outputs::default();
    if let Some(e) = &c.expect_slope {
        let ok = profile.slope.is_some_and(|s| (s - e.value).abs() <= e.tol);
        out.check(ok, || format!("slope {:?} is not within {} of {}", profile.slope, e.tol, e.value));
    }
    #[derive(Serialize)]
    struct MassRow {
        radius: f64,
        mass: f64,
    }
    out.json("vanishing.json", &profile)?;
    out.csv(
        "vanishing.csv",
        profile.radii.iter().zip(&profile.masses).map(|(&radius, &mass)| MassRow { radius, mass }),
    )?;
    out.svg(
        "vanishing.svg",
        line_plot(
            "ball mass about the centre",
            "r",
            "int |u|^2",
            LOG_LOG,
            &[Series::new(
                "mass",
                profile.radii.iter().copied().zip(profile.masses.iter().copied()).collect(),
            )],
        ),
    );
    ctx.progress(|| format!("slope {:?}, {:?}", profile.slope, profile.classification));
    Ok(out)
}

fn cauchy(c: &CauchyConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let coeffs = c.coefficients.build()?;
    let solution = c.solution.build(&c.coefficients, c.r_out, ctx.quiet)?;
    let u = solution.analytic("the Cauchy data")?;
    let settings = StabilitySettings {
        theta: c.theta,
        r_out: c.r_out,
        s: c.s,
        zeta_list: c.zeta_list.clone(),
        h: c.h,
        beta_rule: match c.beta_rule {
            BetaRuleSpec::Fixed { beta } => BetaRule::Fixed { beta },
            BetaRuleSpec::Discrepancy { lo, hi, ratio } => BetaRule::Discrepancy { lo, hi, ratio },
        },
        tol: c.tol,
        seed: ctx.seed(c.seed),
        data_rule: (c.data_rule[0], c.data_rule[1]),
        max_iter: c.max_iter,
    };
    CarlemanWeights::new(c.r_out, c.theta, c.s).map_err(config_error)?;
    positive("h", c.h)?;
    positive("tol", c.tol)?;
    settings.beta_rule.grid().map_err(config_error)?;
    let report = stability_experiment(&coeffs, u, &settings, |l| {
        ctx.progress(|| {
            format!(
                "zeta_rel {:.1e}: zeta0 {:.3e}, beta {}, omega error {:.3e} ({:.2}%)",
                l.zeta_rel,
                l.zeta0,
                l.beta,
                l.error,
                100.0 * l.relative_error
            )
        })
    })?;
    let mut out = Outputs::default();
    if c.require_holder {
        out.check(report.holder_consistent, || {
            format!(
                "Hölder shape not observed: eps_emp {:.3}, worst increase {:.3}",
                report.eps_emp, report.worst_increase
            )
        });
    }
    out.json("cauchy.json", &json!({ "settings": settings, "report": report }))?;
    out.csv("cauchy.csv", report.levels.iter())?;
    out.svg(
        "cauchy.svg",
        line_plot(
            "error on omega against data size",
            "zeta0",
            "error",
            LOG_LOG,
            &[Series::new(
                "error",
                report.levels.iter().map(|l| (l.zeta0, l.error)).collect(),
            )],
        ),
    );
    Ok(out)
}

struct Forcing<'a> {
    coeffs: &'a CoefficientPair,
    u: &'a PolynomialField,
}

impl VectorField for Forcing<'_> {
    fn value(&self, x: &Point) -> Vector3<f64> {
        apply_lame_full(self.coeffs, self.u, x)
    }
}

#[derive(Serialize)]
struct ConvergenceRow {
    h: f64,
    nodes: usize,
    l2_error: f64,
    iterations: usize,
    residual: f64,
    ratio: Option<f64>,
    order: Option<f64>,
}

fn convergence(c: &ConvergenceConfig, ctx: &Context) -> Result<Outputs, Failure> {
    let coeffs = c.coefficients.build()?;
    if c.spacings.len() < 2 || c.spacings.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Failure::Config("spacings need at least two decreasing values".into()));
    }
    let grids = c
        .spacings
        .iter()
        .map(|&h| Grid3::cube(0.0, 1.0, h))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_error)?;
    positive("tol", c.tol)?;
    let seed = ctx.seed(c.seed);
    let u = PolynomialField::random(c.degree, &mut ChaCha8Rng::seed_from_u64(seed));
    let f = Forcing { coeffs: &coeffs, u: &u };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (grid, &h) in grids.iter().zip(&c.spacings) {
        ctx.progress(|| format!("h = {h}: {} nodes", grid.len()));
        let sol = solve_dirichlet(&coeffs, &f, &u, *grid, c.tol)?;
        let s: f64 = (0..grid.len())
            .filter(|&n| !grid.is_boundary(n))
            .map(|n| (sol.values()[n] - u.value(&grid.point_of(n))).norm_squared())
            .sum();
        let err = (s * grid.cell_volume()).sqrt();
        let (ratio, order) = match rows.last() {
            Some(p) => {
                let r = p.l2_error / err;
                (Some(r), Some(r.ln() / (p.h / h).ln()))
            }
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            h,
            nodes: grid.len(),
            l2_error: err,
            iterations: sol.meta.iterations,
            residual: sol.meta.residual,
            ratio,
            order,
        });
    }
    let mut out = Outputs::default();
    if let Some([lo, hi]) = c.ratio_range {
        for r in &rows {
            if let Some(q) = r.ratio {
                out.check((lo..=hi).contains(&q), || format!("error ratio {q:.3} at h = {} outside [{lo}, {hi}]", r.h));
            }
        }
    }
    let errors: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.l2_error)).collect();
    out.json(
        "convergence.json",
        &json!({
            "coefficients": coeffs.label(),
            "degree": c.degree,
            "seed": seed,
            "rows": rows,
        }),
    )?;
    out.csv("convergence.csv", rows)?;
    out.svg(
        "convergence.svg",
        line_plot("manufactured solution", "h", "L2 error", LOG_LOG, &[Series::new("error", errors)]),
    );
    Ok(out)
}
