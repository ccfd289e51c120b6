use lamelab_core::fields::{PolynomialField, VectorField};
use lamelab_core::geometry::{AnnulusSpec, BallSpec};
use lamelab_core::quadrature::*;
use lamelab_core::Point;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gamma(n + 1/2) / sqrt(pi).
fn half_gamma(n: u32) -> f64 {
    (1..=n).map(|k| k as f64 - 0.5).product()
}

/// Exact integral of x^a y^b z^c over the ball of radius r about the origin.
fn ball_moment(e: [u32; 3], r: f64) -> f64 {
    if e.iter().any(|k| k % 2 == 1) {
        return 0.0;
    }
    let [i, j, k] = e.map(|k| k / 2);
    let d = (e[0] + e[1] + e[2]) as f64;
    // 2 G(a') G(b') G(c') / G(a' + b' + c') with G(n + 1/2) = sqrt(pi) half_gamma(n).
    let sphere = 2.0 * std::f64::consts::PI * half_gamma(i) * half_gamma(j) * half_gamma(k) / half_gamma(i + j + k + 1);
    sphere * r.powf(d + 3.0) / (d + 3.0)
}

fn monomial(e: [u32; 3]) -> impl Fn(&Point) -> f64 {
    move |x| x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32)
}

#[test]
fn oracle_moments() {
    let rule = ProductBallRule::new(5, 8, 16).unwrap();
    let ball = BallSpec::centered(1.0).unwrap();
    let pi = std::f64::consts::PI;
    let one = integrate_ball(|_| 1.0, &ball, &rule).unwrap();
    assert!((one / (4.0 * pi / 3.0) - 1.0).abs() < 1e-12);
    let xy = integrate_ball(monomial([2, 2, 0]), &ball, &rule).unwrap();
    assert!((xy / (4.0 * pi / 105.0) - 1.0).abs() < 1e-10);
    assert!((ball_moment([2, 2, 0], 1.0) / (4.0 * pi / 105.0) - 1.0).abs() < 1e-14);
}

#[test]
fn rejects_small_rules() {
    assert!(ProductBallRule::new(1, 8, 16).is_err());
    assert!(ProductBallRule::new(4, 8, 16).unwrap().with_panels(0).is_err());
    assert!(SphereRule::new(8, 2).is_err());
}

#[test]
fn annulus_weights_sum_to_shell_volume() {
    let rule = ProductBallRule::new(4, 6, 12).unwrap().with_panels(3).unwrap();
    let ann = AnnulusSpec::centered(0.3, 1.2).unwrap();
    let v = integrate_annulus(|_| 1.0, &ann, &rule).unwrap();
    assert!((v / ann.volume() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_positive_and_sum_to_the_volume(
        n_r in 2usize..8, n_p in 2usize..10, n_a in 4usize..20,
        c in prop::array::uniform3(-2.0f64..2.0), r in 0.05f64..3.0,
    ) {
        let rule = ProductBallRule::new(n_r, n_p, n_a).unwrap();
        let ball = BallSpec::new(Point::from(c), r).unwrap();
        let nodes = rule.ball_nodes(&ball);
        prop_assert!(nodes.iter().all(|(x, w)| *w > 0.0 && (x - ball.center).norm() < r));
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        prop_assert!((total / ball.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_degree_monomials_are_exact(e in prop::array::uniform3(0u32..5), r in 0.2f64..2.0) {
        prop_assume!(e.iter().sum::<u32>() <= 8);
        let rule = ProductBallRule::new(5, 6, 12).unwrap();
        let got = integrate_ball(monomial(e), &BallSpec::centered(r).unwrap(), &rule).unwrap();
        let want = ball_moment(e, r);
        let scale = ball_moment([0, 0, 0], r) * r.powi(e.iter().sum::<u32>() as i32);
        prop_assert!((got - want).abs() <= 1e-12 * scale, "{got} vs {want}");
    }

    #[test]
    fn dilation_scales_by_the_cube(
        seed in any::<u64>(), t in 0.1f64..4.0,
        c in prop::array::uniform3(-1.0f64..1.0), r in 0.1f64..1.5,
    ) {
        let u = PolynomialField::random(3, &mut ChaCha8Rng::seed_from_u64(seed));
        let f = |x: &Point| u.value(x).norm_squared();
        let rule = ProductBallRule::new(6, 8, 16).unwrap();
        let center = Point::from(c);
        let big = integrate_ball(|x| f(&(center + (x - center) / t)), &BallSpec::new(center, t * r).unwrap(), &rule).unwrap();
        let small = integrate_ball(f, &BallSpec::new(center, r).unwrap(), &rule).unwrap();
        prop_assert!((big - t.powi(3) * small).abs() <= 1e-11 * big.abs().max(1e-300));
    }

    #[test]
    fn homogeneous_masses_scale_with_degree(seed in any::<u64>(), k in 0u32..4, r in 0.1f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = std::array::from_fn(|_| {
            let p = lamelab_core::fields::Polynomial::random(k, &mut rng);
            lamelab_core::fields::Polynomial::from_terms(
                p.terms().filter(|(e, _)| e.iter().sum::<u32>() == k).map(|(e, c)| (*e, *c)),
            )
        });
        let u = PolynomialField::new(comps);
        let rule = ProductBallRule::new(6, 8, 16).unwrap();
        let m1 = l2_mass_ball(&u, &BallSpec::centered(1.0).unwrap(), &rule).unwrap();
        prop_assume!(m1 > 1e-8);
        let mr = l2_mass_ball(&u, &BallSpec::centered(r).unwrap(), &rule).unwrap();
        prop_assert!((mr / (m1 * r.powi(2 * k as i32 + 3)) - 1.0).abs() < 1e-10);
    }
}
