import numpy as np
import pytest
from numpy.testing import assert_allclose

from funvar.curves import (
    Curve,
    CurveSet,
    Grid,
    derivative,
    derivative_set,
    integrate,
    read_curves_csv,
    read_responses_csv,
    uniform_grid,
    write_curves_csv,
    write_responses_csv,
)

import oracles


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(np.array([0.0]))
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        Grid(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        Grid(np.array([0.0, np.inf]))


def test_uniform_grid_default_spans_unit_interval():
    g = uniform_grid(101)
    assert g.size == 101
    assert g.points[0] == -1.0 and g.points[-1] == 1.0
    assert_allclose(np.diff(g.points), 0.02)


def test_trapezoid_weights_match_loop_oracle():
    rng = np.random.default_rng(0)
    pts = np.sort(rng.uniform(-1, 1, 17))
    g = Grid(pts)
    vals = rng.standard_normal(17)
    assert_allclose(
        float(vals @ g.trapezoid_weights), oracles.trapezoid(vals, pts), atol=1e-12
    )


def test_integrate_polynomial():
    g = uniform_grid(101)
    c = Curve(g, g.points**2)
    # trapezoid error for t^2 on a uniform grid is h^2/6 * (b - a) * f''/2
    assert integrate(c) == pytest.approx(2.0 / 3.0, abs=2e-4)


def test_curve_validation():
    g = uniform_grid(5)
    with pytest.raises(ValueError):
        Curve(g, np.ones(4))
    with pytest.raises(ValueError):
        Curve(g, np.array([1.0, 2.0, np.nan, 0.0, 1.0]))


def test_curveset_roundtrip_and_subset():
    g = uniform_grid(7)
    rng = np.random.default_rng(1)
    cs = CurveSet(g, rng.standard_normal((4, 7)))
    assert len(cs) == 4
    again = CurveSet.from_curves([cs.curve(i) for i in range(4)])
    assert np.array_equal(again.values, cs.values)
    sub = cs.subset([2, 0])
    assert np.array_equal(sub.values[0], cs.values[2])
    assert np.array_equal(sub.values[1], cs.values[0])


def test_derivative_order_zero_is_identity():
    g = uniform_grid(9)
    c = Curve(g, np.sin(g.points))
    assert derivative(c, 0) is c


def test_finite_diff_linear_is_exact():
    g = uniform_grid(11)
    c = Curve(g, 3.0 * g.points + 2.0)
    d = derivative(c, 1)
    assert_allclose(d.values, 3.0, atol=1e-12)


def test_finite_diff_matches_oracle():
    rng = np.random.default_rng(2)
    pts = np.sort(rng.uniform(0, 1, 13))
    g = Grid(pts)
    vals = rng.standard_normal(13)
    d = derivative(Curve(g, vals), 1)
    assert_allclose(d.values, oracles.finite_diff(vals, pts), atol=1e-12)
    d2 = derivative(Curve(g, vals), 2)
    assert_allclose(d2.values, oracles.nth_derivative(vals, pts, 2), atol=1e-12)


def test_finite_diff_sin_accuracy():
    g = uniform_grid(201)
    d = derivative(Curve(g, np.sin(g.points)), 1)
    assert_allclose(d.values[1:-1], np.cos(g.points)[1:-1], atol=1e-3)


def test_bspline_derivative_on_polynomial():
    g = uniform_grid(60)
    c = Curve(g, g.points**3)
    d2 = derivative(c, 2, method="bspline", knots=10, degree=4)
    assert_allclose(d2.values, 6.0 * g.points, atol=1e-6)


def test_bspline_rejects_degree_not_above_order():
    g = uniform_grid(30)
    c = Curve(g, g.points)
    with pytest.raises(ValueError):
        derivative(c, 2, method="bspline", degree=2)


def test_bspline_rejects_too_few_points():
    g = uniform_grid(5)
    c = Curve(g, g.points)
    with pytest.raises(ValueError):
        derivative(c, 1, method="bspline", knots=20, degree=3)


def test_derivative_unknown_method():
    g = uniform_grid(8)
    with pytest.raises(ValueError):
        derivative(Curve(g, g.points), 1, method="splines")


def test_derivative_set_matches_per_curve():
    rng = np.random.default_rng(3)
    g = uniform_grid(25)
    cs = CurveSet(g, rng.standard_normal((5, 25)))
    for method, kw in (("finite_diff", {}), ("bspline", {"knots": 8, "degree": 3})):
        ds = derivative_set(cs, 1, method=method, **kw)
        for i in range(5):
            one = derivative(cs.curve(i), 1, method=method, **kw)
            assert_allclose(ds.values[i], one.values, atol=1e-10)


def test_curves_csv_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(4)
    pts = np.sort(rng.uniform(-1, 1, 12))
    cs = CurveSet(Grid(pts), rng.standard_normal((6, 12)) * 1e-3)
    path = tmp_path / "c.csv"
    write_curves_csv(path, cs)
    back = read_curves_csv(path)
    assert np.array_equal(back.grid.points, cs.grid.points)
    assert np.array_equal(back.values, cs.values)


def test_responses_csv_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(5)
    y = rng.standard_normal(9) * 42.0
    path = tmp_path / "y.csv"
    write_responses_csv(path, y)
    assert np.array_equal(read_responses_csv(path), y)


def test_curves_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,0.0,1.0\n1.0,2.0\n")
    with pytest.raises(ValueError):
        read_curves_csv(path)


def test_responses_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("z\n1.0\n")
    with pytest.raises(ValueError):
        read_responses_csv(path)
