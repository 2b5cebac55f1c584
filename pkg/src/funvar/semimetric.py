"""Semi-metrics on curve space.

Two families: L2 distance between derivatives of a given order, and
Euclidean distance between leading principal-component scores. Both are
symmetric with d(x, x) = 0; neither needs to separate distinct curves.

Distances are computed through per-curve feature vectors (derivative
samples weighted by trapezoid quadrature, or projection scores), which the
estimators cache so repeated predictions stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .curves import Curve, CurveSet, Grid, derivative_set

SEMIMETRIC_KINDS = ("deriv_l2", "pca_projection")


@dataclass(frozen=True)
class SemiMetricSpec:
    """Recipe for a distance between curves.

    ``deriv_l2``: sqrt of the integrated squared difference between
    order-``order`` derivatives (``deriv_method``, ``knots`` and ``degree``
    control how derivatives are computed). ``pca_projection``: Euclidean
    distance between the first ``dim`` principal-component scores; the
    basis must be trained on a curve set before distances can be taken.
    """

    kind: str
    order: int = 0
    deriv_method: str = "finite_diff"
    knots: int = 20
    degree: int = 3
    dim: int = 1
    basis: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in SEMIMETRIC_KINDS:
            raise ValueError(f"unknown semi-metric kind {self.kind!r}")
        if self.kind == "deriv_l2":
            if self.order < 0:
                raise ValueError("derivative order must be nonnegative")
            if self.deriv_method not in ("finite_diff", "bspline"):
                raise ValueError(
                    f"unknown derivative method {self.deriv_method!r}"
                )
        if self.kind == "pca_projection" and self.dim < 1:
            raise ValueError("projection dimension must be >= 1")

    @classmethod
    def deriv_l2(
        cls,
        order: int = 0,
        deriv_method: str = "finite_diff",
        *,
        knots: int = 20,
        degree: int = 3,
    ) -> SemiMetricSpec:
        return cls("deriv_l2", order=order, deriv_method=deriv_method,
                   knots=knots, degree=degree)

    @classmethod
    def pca_projection(cls, dim: int) -> SemiMetricSpec:
        return cls("pca_projection", dim=dim)

    @property
    def trained(self) -> bool:
        return self.kind != "pca_projection" or self.basis is not None

    def to_config(self) -> dict:
        cfg: dict = {"kind": self.kind}
        if self.kind == "deriv_l2":
            cfg["order"] = self.order
            cfg["method"] = self.deriv_method
            if self.deriv_method == "bspline":
                cfg["knots"] = self.knots
                cfg["degree"] = self.degree
        else:
            cfg["dim"] = self.dim
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> SemiMetricSpec:
        if cfg["kind"] == "deriv_l2":
            return cls.deriv_l2(
                cfg.get("order", 0),
                cfg.get("method", "finite_diff"),
                knots=cfg.get("knots", 20),
                degree=cfg.get("degree", 3),
            )
        return cls.pca_projection(cfg["dim"])


def train_projection(spec: SemiMetricSpec, train: CurveSet) -> SemiMetricSpec:
    """Estimate the projection basis from a training set.

    Eigendecomposition of the empirical second-moment matrix of curve
    samples, weighted by trapezoid quadrature so that scores are quadrature
    inner products with the eigenfunctions.
    """
    if spec.kind != "pca_projection":
        raise ValueError("only pca_projection specs are trained")
    n, t = train.values.shape
    if spec.dim > min(n, t):
        raise ValueError(f"projection dim {spec.dim} exceeds rank bound {min(n, t)}")
    sqrt_w = np.sqrt(train.grid.trapezoid_weights)
    xw = train.values * sqrt_w
    moment = (xw.T @ xw) / n
    evals, evecs = np.linalg.eigh(moment)
    top = evecs[:, np.argsort(evals)[::-1][: spec.dim]]
    # deterministic sign: largest-magnitude entry of each component positive
    for j in range(top.shape[1]):
        if top[np.argmax(np.abs(top[:, j])), j] < 0:
            top[:, j] = -top[:, j]
    return replace(spec, basis=sqrt_w[:, None] * top)


def feature_matrix(spec: SemiMetricSpec, cs: CurveSet) -> np.ndarray:
    """Per-curve feature vectors; distances are weighted L2 between rows."""
    if spec.kind == "deriv_l2":
        return derivative_set(
            cs, spec.order, spec.deriv_method, knots=spec.knots, degree=spec.degree
        ).values
    if spec.basis is None:
        raise ValueError("projection basis is untrained; call train_projection first")
    if spec.basis.shape[0] != cs.grid.size:
        raise ValueError("projection basis was trained on a different grid")
    return cs.values @ spec.basis


def feature_weights(spec: SemiMetricSpec, grid: Grid) -> np.ndarray:
    if spec.kind == "deriv_l2":
        return grid.trapezoid_weights
    return np.ones(spec.dim)


def pairwise_from_features(
    fa: np.ndarray, fb: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """sqrt(sum_k w_k (fa_i - fb_j)^2) for every row pair, in blocks.

    Entries are computed directly from differences (no Gram expansion), so
    a self distance matrix comes out exactly symmetric with a zero diagonal.
    """
    n, p = fa.shape
    m = fb.shape[0]
    out = np.empty((n, m))
    block = max(1, 4_000_000 // max(1, m * p))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        diff = fa[lo:hi, None, :] - fb[None, :, :]
        out[lo:hi] = np.square(diff) @ w
    return np.sqrt(out, out=out)


def _check_shared_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ValueError("curves do not share a grid")


def distance(spec: SemiMetricSpec, a: Curve, b: Curve) -> float:
    """Semi-metric distance between two curves on the same grid."""
    _check_shared_grid(a.grid, b.grid)
    fa = feature_matrix(spec, CurveSet(a.grid, a.values[None, :]))
    fb = feature_matrix(spec, CurveSet(b.grid, b.values[None, :]))
    w = feature_weights(spec, a.grid)
    return float(pairwise_from_features(fa, fb, w)[0, 0])


def distance_matrix(
    spec: SemiMetricSpec, a: CurveSet, b: CurveSet | None = None
) -> np.ndarray:
    """All pairwise distances; entry (i, j) is d(a_i, b_j).

    With ``b`` omitted (or the same set), features are computed once and the
    result is exactly symmetric with a zero diagonal.
    """
    if b is None:
        b = a
    _check_shared_grid(a.grid, b.grid)
    fa = feature_matrix(spec, a)
    fb = fa if b is a else feature_matrix(spec, b)
    return pairwise_from_features(fa, fb, feature_weights(spec, a.grid))


def small_ball_fraction(
    spec: SemiMetricSpec, train: CurveSet, x: Curve, h: float
) -> float:
    """Fraction of training curves within distance h of x.

    Empirical estimate of the small-ball probability at x; useful as a
    diagnostic when choosing bandwidth grids.
    """
    if not h > 0:
        raise ValueError("radius h must be positive")
    _check_shared_grid(x.grid, train.grid)
    fx = feature_matrix(spec, CurveSet(x.grid, x.values[None, :]))
    ft = feature_matrix(spec, train)
    d = pairwise_from_features(fx, ft, feature_weights(spec, train.grid))[0]
    return float(np.mean(d <= h))
