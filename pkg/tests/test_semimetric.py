import numpy as np
import pytest
from numpy.testing import assert_allclose

from funvar.curves import Curve, CurveSet, Grid, uniform_grid
from funvar.semimetric import (
    SemiMetricSpec,
    distance,
    distance_matrix,
    feature_matrix,
    feature_weights,
    pairwise_from_features,
    small_ball_fraction,
    train_projection,
)

import oracles


def random_curves(n, size=21, seed=0, smooth=False):
    rng = np.random.default_rng(seed)
    g = uniform_grid(size)
    if smooth:
        w = rng.uniform(0, 2 * np.pi, (n, 1))
        vals = np.sin(w * g.points) + rng.uniform(-1, 1, (n, 1))
    else:
        vals = rng.standard_normal((n, size))
    return CurveSet(g, vals)


def test_spec_validation():
    with pytest.raises(ValueError):
        SemiMetricSpec("hausdorff")
    with pytest.raises(ValueError):
        SemiMetricSpec.deriv_l2(order=-1)
    with pytest.raises(ValueError):
        SemiMetricSpec.deriv_l2(deriv_method="wavelet")
    with pytest.raises(ValueError):
        SemiMetricSpec.pca_projection(dim=0)


def test_config_roundtrip():
    for spec in (
        SemiMetricSpec.deriv_l2(order=2, deriv_method="bspline", knots=9, degree=4),
        SemiMetricSpec.pca_projection(dim=3),
    ):
        assert SemiMetricSpec.from_config(spec.to_config()) == spec


def test_deriv_l2_order0_matches_oracle():
    cs = random_curves(4, seed=11)
    spec = SemiMetricSpec.deriv_l2()
    pts = cs.grid.points
    for i in range(4):
        for j in range(4):
            expect = oracles.l2_deriv_distance(
                cs.values[i], cs.values[j], pts, 0
            )
            got = distance(spec, cs.curve(i), cs.curve(j))
            assert got == pytest.approx(expect, abs=1e-10)


def test_deriv_l2_order1_matches_oracle():
    cs = random_curves(3, size=31, seed=12, smooth=True)
    spec = SemiMetricSpec.deriv_l2(order=1)
    pts = cs.grid.points
    for i in range(3):
        for j in range(i, 3):
            expect = oracles.l2_deriv_distance(cs.values[i], cs.values[j], pts, 1)
            assert distance(spec, cs.curve(i), cs.curve(j)) == pytest.approx(
                expect, abs=1e-10
            )


def test_distance_matrix_symmetry_and_zero_diagonal_exact():
    cs = random_curves(12, seed=13)
    d = distance_matrix(SemiMetricSpec.deriv_l2(order=1), cs)
    assert np.array_equal(d, d.T)
    assert (np.diag(d) == 0.0).all()
    assert (d[~np.eye(12, dtype=bool)] > 0).all()


def test_distance_matrix_cross():
    a = random_curves(3, seed=14)
    b = random_curves(5, seed=15)
    spec = SemiMetricSpec.deriv_l2()
    d = distance_matrix(spec, a, b)
    assert d.shape == (3, 5)
    assert d[1, 2] == pytest.approx(distance(spec, a.curve(1), b.curve(2)), abs=1e-12)


def test_blockwise_pairwise_equals_naive():
    # n*T large enough that the block loop runs more than once
    rng = np.random.default_rng(16)
    f = rng.standard_normal((300, 101))
    w = rng.uniform(0.01, 1.0, 101)
    got = pairwise_from_features(f, f, w)
    diff = f[:, None, :] - f[None, :, :]
    naive = np.sqrt(np.einsum("ijk,k->ij", diff**2, w))
    assert_allclose(got, naive, atol=1e-10)


def test_grid_mismatch_rejected():
    a = random_curves(3, size=11, seed=17)
    b = random_curves(3, size=13, seed=18)
    with pytest.raises(ValueError):
        distance_matrix(SemiMetricSpec.deriv_l2(), a, b)


def test_pca_projection_distance_matches_explicit_eigh():
    cs = random_curves(20, seed=19)
    spec = train_projection(SemiMetricSpec.pca_projection(dim=2), cs)
    # independent reconstruction of the projection scores
    qw = cs.grid.trapezoid_weights
    sq = np.sqrt(qw)
    m = (cs.values * sq) .T @ (cs.values * sq) / len(cs)
    vals, vecs = np.linalg.eigh(m)
    top = vecs[:, ::-1][:, :2]
    for k in range(2):
        lead = np.argmax(np.abs(top[:, k]))
        if top[lead, k] < 0:
            top[:, k] = -top[:, k]
    scores = (cs.values * sq) @ top
    expect = np.sqrt(((scores[:, None, :] - scores[None, :, :]) ** 2).sum(axis=2))
    got = distance_matrix(spec, cs)
    assert_allclose(got, expect, atol=1e-8)


def test_pca_projection_training_is_deterministic():
    cs = random_curves(15, seed=20)
    s1 = train_projection(SemiMetricSpec.pca_projection(dim=3), cs)
    s2 = train_projection(SemiMetricSpec.pca_projection(dim=3), cs)
    assert np.array_equal(s1.basis, s2.basis)


def test_pca_projection_untrained_rejected():
    cs = random_curves(4, seed=21)
    with pytest.raises(ValueError):
        feature_matrix(SemiMetricSpec.pca_projection(dim=2), cs)


def test_pca_dim_bounded_by_sample():
    cs = random_curves(3, size=10, seed=22)
    with pytest.raises(ValueError):
        train_projection(SemiMetricSpec.pca_projection(dim=4), cs)


def test_semimetric_ignores_constant_shift_at_order1():
    cs = random_curves(2, size=25, seed=23, smooth=True)
    spec = SemiMetricSpec.deriv_l2(order=1)
    shifted = CurveSet(cs.grid, cs.values + 7.5)
    d0 = distance(spec, cs.curve(0), cs.curve(1))
    d1 = distance(spec, shifted.curve(0), shifted.curve(1))
    assert d1 == pytest.approx(d0, abs=1e-9)
    # shifting ONE curve by a constant is invisible to the derivative metric
    assert distance(spec, cs.curve(0), shifted.curve(0)) == pytest.approx(
        0.0, abs=1e-9
    )


def test_small_ball_fraction_monotone_and_saturates():
    cs = random_curves(30, seed=24)
    spec = SemiMetricSpec.deriv_l2()
    x = cs.curve(4)
    d = distance_matrix(spec, CurveSet(cs.grid, x.values[None, :]), cs)[0]
    hs = np.linspace(d[d > 0].min(), d.max(), 12)
    fracs = [small_ball_fraction(spec, cs, x, float(h)) for h in hs]
    assert all(b >= a for a, b in zip(fracs, fracs[1:]))
    assert fracs[-1] == 1.0
    # agrees with a direct count
    for h, f in zip(hs, fracs):
        assert f == pytest.approx(np.mean(d <= h))


def test_small_ball_fraction_validation():
    cs = random_curves(5, seed=25)
    with pytest.raises(ValueError):
        small_ball_fraction(SemiMetricSpec.deriv_l2(), cs, cs.curve(0), 0.0)


def test_feature_weights_shapes():
    cs = random_curves(6, seed=26)
    spec_d = SemiMetricSpec.deriv_l2()
    assert feature_weights(spec_d, cs.grid).shape == (cs.grid.size,)
    spec_p = train_projection(SemiMetricSpec.pca_projection(dim=2), cs)
    assert_allclose(feature_weights(spec_p, cs.grid), np.ones(2))
