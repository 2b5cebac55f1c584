"""Discretized functional data: curves sampled on a shared grid.

Curves are stored as raw samples; integration uses the composite trapezoid
rule and derivatives are computed either by repeated finite differences or
by a least-squares B-spline fit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.interpolate import make_lsq_spline


@dataclass(frozen=True)
class Grid:
    """Strictly increasing abscissae shared by a family of curves."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.size

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights w such that w @ f approximates the integral of f."""
        w = np.empty(self.size)
        d = np.diff(self.points)
        w[0] = d[0] / 2
        w[-1] = d[-1] / 2
        w[1:-1] = (d[:-1] + d[1:]) / 2
        return w

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)


def uniform_grid(size: int, lo: float = -1.0, hi: float = 1.0) -> Grid:
    return Grid(np.linspace(lo, hi, size))


@dataclass(frozen=True)
class Curve:
    """One functional observation: values sampled on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise ValueError(
                f"curve has {vals.size} values for a grid of {self.grid.size} points"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class CurveSet:
    """n curves on one shared grid, stored as an (n, T) value matrix."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.ndim != 2 or vals.shape[1] != self.grid.size:
            raise ValueError("curve matrix must be (n, grid size)")
        if vals.shape[0] < 1:
            raise ValueError("curve set needs at least one curve")
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_curves(cls, curves: list[Curve]) -> CurveSet:
        if not curves:
            raise ValueError("curve set needs at least one curve")
        grid = curves[0].grid
        for c in curves[1:]:
            if c.grid != grid:
                raise ValueError("all curves must share the set's grid")
        return cls(grid, np.vstack([c.values for c in curves]))

    def __len__(self) -> int:
        return self.values.shape[0]

    def curve(self, i: int) -> Curve:
        return Curve(self.grid, self.values[i])

    def __iter__(self) -> Iterator[Curve]:
        return (self.curve(i) for i in range(len(self)))

    def subset(self, idx) -> CurveSet:
        return CurveSet(self.grid, self.values[idx])


def integrate(c: Curve) -> float:
    """Trapezoid-rule integral of the curve over its grid span."""
    return float(c.values @ c.grid.trapezoid_weights)


def _spline_knots(points: np.ndarray, knots: int, degree: int) -> np.ndarray:
    # interior knots at empirical quantiles; robust to non-uniform grids
    qs = np.linspace(0.0, 1.0, knots + 2)[1:-1]
    interior = np.quantile(points, qs)
    return np.r_[
        np.full(degree + 1, points[0]), interior, np.full(degree + 1, points[-1])
    ]


def _spline_derivative(
    grid: Grid, values: np.ndarray, order: int, knots: int, degree: int
) -> np.ndarray:
    """Least-squares spline fit on quantile knots; returns the analytic
    derivative of the fitted spline evaluated back on grid points.

    ``values`` may be (T,) or (T, n); the derivative keeps that shape.
    """
    if degree <= order:
        raise ValueError(f"spline degree {degree} must exceed derivative order {order}")
    if knots < 1:
        raise ValueError("need at least one interior knot")
    if knots + degree + 1 > grid.size:
        raise ValueError(
            f"{knots} knots with degree {degree} need at least "
            f"{knots + degree + 1} grid points, got {grid.size}"
        )
    t = _spline_knots(grid.points, knots, degree)
    try:
        spl = make_lsq_spline(grid.points, values, t, k=degree)
    except Exception as exc:  # scipy raises LinAlgError or ValueError
        raise ValueError(f"rank-deficient spline design (too many knots?): {exc}")
    out = spl.derivative(order)(grid.points)
    if not np.all(np.isfinite(out)):
        raise ValueError("rank-deficient spline design produced non-finite values")
    return out


def derivative(
    c: Curve,
    order: int,
    method: str = "finite_diff",
    *,
    knots: int = 20,
    degree: int = 3,
) -> Curve:
    """Derivative of a sampled curve, evaluated on the same grid.

    ``finite_diff`` applies repeated central differences with first-order
    one-sided stencils at the endpoints. ``bspline`` fits a least-squares
    spline (interior knots at grid quantiles) and evaluates its analytic
    derivative; requires degree > order and knots + degree + 1 <= T.
    Order 0 returns the curve unchanged.
    """
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if order == 0:
        return c
    if method == "finite_diff":
        if c.grid.size < order + 1:
            raise ValueError(
                f"grid of {c.grid.size} points too short for order-{order} differences"
            )
        vals = c.values
        for _ in range(order):
            vals = np.gradient(vals, c.grid.points, edge_order=1)
        return Curve(c.grid, vals)
    if method == "bspline":
        vals = _spline_derivative(c.grid, c.values, order, knots, degree)
        return Curve(c.grid, vals)
    raise ValueError(f"unknown derivative method {method!r}")


def derivative_set(
    cs: CurveSet,
    order: int,
    method: str = "finite_diff",
    *,
    knots: int = 20,
    degree: int = 3,
) -> CurveSet:
    """Batched :func:`derivative` over all curves in a set."""
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if order == 0:
        return cs
    if method == "finite_diff":
        if cs.grid.size < order + 1:
            raise ValueError(
                f"grid of {cs.grid.size} points too short for order-{order} differences"
            )
        vals = cs.values
        for _ in range(order):
            vals = np.gradient(vals, cs.grid.points, axis=1, edge_order=1)
        return CurveSet(cs.grid, vals)
    if method == "bspline":
        vals = _spline_derivative(cs.grid, cs.values.T, order, knots, degree)
        return CurveSet(cs.grid, vals.T)
    raise ValueError(f"unknown derivative method {method!r}")


# --- CSV formats -----------------------------------------------------------
#
# Curves: first row is the grid ("t" then abscissae); each subsequent row is
# one curve's values. Responses: single column with header "y", row-aligned
# with the curves file.


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curves_csv(path: str | Path, cs: CurveSet) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [_fmt(t) for t in cs.grid.points])
        for row in cs.values:
            w.writerow([_fmt(v) for v in row])


def read_curves_csv(path: str | Path) -> CurveSet:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValueError(f"{path}: first row must be the grid, starting with 't'")
    grid = Grid(np.array([float(v) for v in rows[0][1:]]))
    if len(rows) < 2:
        raise ValueError(f"{path}: no curve rows")
    values = np.array([[float(v) for v in row] for row in rows[1:] if row])
    return CurveSet(grid, values)


def write_responses_csv(path: str | Path, y: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["y"])
        for v in np.asarray(y, dtype=float):
            w.writerow([_fmt(v)])


def read_responses_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["y"]:
        raise ValueError(f"{path}: responses file must have a 'y' header")
    return np.array([float(row[0]) for row in rows[1:] if row])
