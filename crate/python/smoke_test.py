"""Smoke test for the lamelab extension module.

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py      # or: pytest python/
"""

import math

import lamelab


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def test_homogeneous_three_spheres():
    u = lamelab.Field.harmonic_gradient()
    rule = lamelab.QuadratureRule(8, 10, 20)
    r = lamelab.three_spheres(u, (0.25, 0.5, 1.0), rule)
    assert close(r["sigma_star"], 0.5, 1e-6), r
    assert close(r["n2"] ** 2 / (r["n1"] * r["nR"]), 1.0, 1e-8)
    curve = lamelab.fit_sigma_c([(r["n1"], r["n2"], r["nR"])])
    assert close(curve["c_at_sigma_min"], 1.0, 1e-10)


def test_kelvin_solves_the_system():
    c = lamelab.Coefficients.constant(1.0, 1.0)
    u = lamelab.Field.kelvin((2.0, 0.0, 0.0), (0.0, 0.0, 1.0), 1.0, 1.0, 1.0)
    for x in [(0.1, 0.2, 0.3), (-0.5, 0.4, 0.0), (0.0, 0.0, 0.9)]:
        assert max(abs(v) for v in u.lame(c, x)) < 1e-12
    assert u.derivative_consistency([(0.1, 0.2, 0.3)]) < 1e-6
    try:
        lamelab.Field.kelvin((0.5, 0.0, 0.0), (0.0, 0.0, 1.0))
    except ValueError:
        pass
    else:
        raise AssertionError("source inside the study ball accepted")


def test_factorization():
    c = lamelab.Coefficients.smooth_variable()
    assert c.validate(1.0)["pass"]
    u = lamelab.Field.polynomial(3, 1)
    r = u.factorization_residual(c, [(0.1, 0.2, -0.3), (0.4, 0.0, 0.1)])
    assert r["vector"] < 1e-8 and r["scalar"] < 1e-12, r


def test_iteration_plan():
    p = lamelab.iteration_plan(0.1, 0.5, 1.0, 0.5, 1.0)
    assert p["N"] == 21 and p["violations"] == []
    assert p["R2"] < p["theta"] < p["R_out"]
    assert lamelab.chain_bound(0.1, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0) > 0.0


def test_carleman_weights():
    w = lamelab.CarlemanWeights(1.0, 0.5, 1.0)
    assert close(w.phi_star, math.expm1(0.75), 1e-14)
    assert close(w.phi((1.0, 0.0, 0.0)), 0.0, 1e-15)
    rows = w.scan(
        lamelab.Coefficients.constant(),
        lamelab.Field.radial_bump(0.5, 1.0, (1.0, 0.0, 0.0)),
        [4.0, 8.0],
        lamelab.QuadratureRule(8, 8, 16, 8),
    )
    assert [row["tau"] for row in rows] == [4.0, 8.0]
    assert all(row["ratio"] > 0 for row in rows)


def test_vanishing_order():
    u = lamelab.Field.harmonic_gradient()
    prof = lamelab.vanishing_profile(u, [0.1, 0.2, 0.4], lamelab.QuadratureRule())
    assert close(prof["slope"], 7.0, 1e-8), prof


def test_dirichlet_reproduces_affine_field():
    c = lamelab.Coefficients.constant()
    g = lamelab.Field.harmonic_gradient([((2, 0, 0), 1.0), ((0, 2, 0), -1.0)])
    sol = lamelab.solve_dirichlet(c, g, 1.0, 0.25)
    assert sol.is_grid
    got, want = sol.value((0.25, 0.5, -0.25)), g.value((0.25, 0.5, -0.25))
    assert max(abs(a - b) for a, b in zip(got, want)) < 1e-8
    r = lamelab.three_spheres(sol, (0.25, 0.5, 1.0), lamelab.QuadratureRule())
    assert not r["degenerate"]


if __name__ == "__main__":
    tests = [(k, v) for k, v in sorted(globals().items()) if k.startswith("test_")]
    for name, fn in tests:
        fn()
        print(f"ok {name}")
    print(f"lamelab {lamelab.__version__}: {len(tests)} smoke tests passed")
