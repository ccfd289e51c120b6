use lamelab_core::carleman::CarlemanWeights;
use lamelab_core::cauchy::*;
use lamelab_core::fields::{CoefficientPair, ConstantField, ScaledField};
use lamelab_core::grid::GridField;
use lamelab_core::quadrature::SphereRule;
use lamelab_core::solutions::{kelvin_field, KelvinField, KelvinSource};
use lamelab_core::Point;
use nalgebra::Vector3;

fn kelvin(y: Point) -> KelvinField {
    kelvin_field(KelvinSource::new(y, Vector3::new(0.0, 0.6, 0.8), 1.0, 1.0, 1.0).unwrap())
}

fn unit() -> CoefficientPair {
    CoefficientPair::constant(1.0, 1.0).unwrap()
}

fn omega_mask() -> impl Fn(&Point) -> bool {
    let w = CarlemanWeights::new(1.0, 0.4, 1.0).unwrap();
    let theta1 = w.sublevel_radius(0.5 * w.phi_star()).unwrap();
    move |x: &Point| {
        let r = x.norm();
        0.4 < r && r < theta1
    }
}

#[test]
fn exact_kelvin_data_reconstructs_omega() {
    let u = kelvin(Point::new(1.5, 0.4, -0.3));
    let data = make_cauchy_data(&u, 0.4, &SphereRule::new(16, 32).unwrap(), 0.0, 0).unwrap();
    let grid = padded_grid(1.0, 1.0 / 32.0).unwrap();
    let c = continue_solution(&unit(), &data, 1.0, grid, 10.0, 3e-3).unwrap();
    let exact = GridField::sample(grid, &u);
    let diff: Vec<Vector3<f64>> = c.solution.values().iter().zip(&exact.values).map(|(a, b)| a - b).collect();
    let om = omega_mask();
    let rel = GridField::new(grid, diff).unwrap().masked_l2(&om) / exact.masked_l2(&om);
    assert!(rel <= 0.15, "relative omega error {rel}");
}

#[test]
fn objective_decreases_and_l_curve_is_monotone() {
    let u = kelvin(Point::new(1.2, -0.5, 0.6));
    let data = make_cauchy_data(&u, 0.4, &SphereRule::new(12, 24).unwrap(), 0.0, 0).unwrap();
    let grid = padded_grid(1.0, 0.125).unwrap();
    let solver = CauchySolver::new(&unit(), &data, 1.0, grid, &default_outer_rule()).unwrap();
    let mut fits = Vec::new();
    for beta in [1.0, 30.0, 1000.0] {
        let c = solver.solve(beta, 1e-3, None, None).unwrap();
        let obj = &c.fit.objective;
        assert!(obj.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "beta {beta}");
        fits.push(c.fit);
    }
    for w in fits.windows(2) {
        assert!(w[1].misfit < w[0].misfit);
        assert!(w[1].pde_residual > w[0].pde_residual);
    }
}

#[test]
fn continuation_is_linear_in_the_data() {
    let rule = SphereRule::new(8, 16).unwrap();
    let d1 = make_cauchy_data(&kelvin(Point::new(1.5, 0.4, -0.3)), 0.4, &rule, 0.05, 1).unwrap();
    let d2 = make_cauchy_data(&ConstantField(Vector3::new(0.1, 0.0, -0.2)), 0.4, &rule, 0.05, 2).unwrap();
    let d12 = d1.add(&d2).unwrap();
    let mut d0 = d12.clone();
    d0.f0.iter_mut().for_each(|v| *v = Vector3::zeros());
    d0.f1.iter_mut().for_each(|m| *m = nalgebra::Matrix3::zeros());
    let grid = padded_grid(1.0, 0.125).unwrap();
    let (beta, tol) = (5.0, 1e-3);
    let solve = |d: &CauchyData| continue_solution(&unit(), d, 1.0, grid, beta, tol).unwrap().solution.field;
    let (a, b, ab) = (solve(&d1), solve(&d2), solve(&d12));
    let defect: Vec<Vector3<f64>> = (0..grid.len()).map(|n| ab.values[n] - a.values[n] - b.values[n]).collect();
    let homogeneous = CauchySolver::new(&unit(), &d0, 1.0, grid, &default_outer_rule()).unwrap();
    let full = CauchySolver::new(&unit(), &d12, 1.0, grid, &default_outer_rule()).unwrap();
    let reference = full.normal_residual(beta, &vec![Vector3::zeros(); grid.len()]).unwrap();
    let defect_norm = homogeneous.normal_residual(beta, &defect).unwrap();
    assert!(defect_norm <= 10.0 * tol * reference, "{defect_norm} vs {reference}");
}

#[test]
fn zero_data_and_rejections() {
    let rule = SphereRule::new(6, 12).unwrap();
    let zero = make_cauchy_data(&ConstantField(Vector3::zeros()), 0.4, &rule, 0.3, 5).unwrap();
    assert_eq!(zero.zeta0, 0.0);
    let grid = padded_grid(1.0, 0.125).unwrap();
    let c = continue_solution(&unit(), &zero, 1.0, grid, 1.0, 1e-6).unwrap();
    assert!(c.solution.field.masked_l2(|_| true) <= 1e-5);

    let d = make_cauchy_data(&ConstantField(Vector3::x()), 0.4, &rule, 0.0, 0).unwrap();
    assert!(continue_solution(&unit(), &d, 1.0, grid, -1.0, 1e-6).is_err());
    let negative = CoefficientPair::new(
        std::sync::Arc::new(lamelab_core::fields::ConstantScalar(1.0)),
        std::sync::Arc::new(lamelab_core::fields::ConstantScalar(-0.5)),
        1.0,
        1.0,
        "negative lambda",
    )
    .unwrap();
    assert!(continue_solution(&negative, &d, 1.0, grid, 1.0, 1e-6).is_err());
    let tight = lamelab_core::geometry::Grid3::cube(-1.0, 1.0, 0.125).unwrap();
    assert!(CauchySolver::new(&unit(), &d, 1.0, tight, &default_outer_rule()).is_err());
}

fn settings(h: f64) -> StabilitySettings {
    StabilitySettings {
        theta: 0.4,
        r_out: 1.0,
        s: 1.0,
        zeta_list: vec![1e-1, 1e-2, 1e-3],
        h,
        beta_rule: BetaRule::Discrepancy { lo: 1.0, hi: 1000.0, ratio: 10.0 },
        tol: 3e-3,
        seed: 11,
        data_rule: (8, 16),
        max_iter: None,
    }
}

#[test]
fn doubling_the_solution_doubles_every_error() {
    let u = kelvin(Point::new(1.5, 0.4, -0.3));
    let u2 = ScaledField { inner: u, factor: 2.0 };
    let cfg = settings(0.125);
    let a = stability_experiment(&unit(), &u, &cfg, |_| {}).unwrap();
    let b = stability_experiment(&unit(), &u2, &cfg, |_| {}).unwrap();
    assert!((b.m0 / a.m0 - 2.0).abs() < 1e-12);
    for (x, y) in a.levels.iter().zip(&b.levels) {
        assert_eq!(x.beta, y.beta);
        assert!((y.error / x.error - 2.0).abs() < 1e-9, "{} {}", x.error, y.error);
    }
}

#[test]
fn report_shape_and_serialization() {
    let u = kelvin(Point::new(1.5, 0.4, -0.3));
    let r = stability_experiment(&unit(), &u, &settings(0.125), |_| {}).unwrap();
    assert_eq!(r.levels.len(), 3);
    assert!(r.zeta0().windows(2).all(|w| w[1] < w[0]));
    assert!(r.eps_emp.is_finite());
    let w = CarlemanWeights::new(1.0, 0.4, 1.0).unwrap();
    assert_eq!(r.omega.1, w.sublevel_radius(0.5 * w.phi_star()).unwrap());
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["levels"].as_array().unwrap().len() == 3);
    let cfg: StabilitySettings = serde_json::from_value(serde_json::to_value(settings(0.125)).unwrap()).unwrap();
    assert_eq!(cfg, settings(0.125));
    assert!(serde_json::from_str::<StabilitySettings>(r#"{"theta": 0.4, "bogus": 1}"#).is_err());
}

#[test]
fn degenerate_exact_solution_is_rejected() {
    let e = stability_experiment(&unit(), &ConstantField(Vector3::zeros()), &settings(0.125), |_| {});
    assert!(matches!(e, Err(lamelab_core::LabError::Degenerate(_))));
}
