"""Kernel mean and variance function estimation with bandwidth selection.

The mean function is a Nadaraya-Watson smooth of the responses. The
variance function is estimated either by smoothing squared residuals
(residual method) or by smoothing squared responses and subtracting the
squared mean estimate (direct method). Bandwidths come from leave-one-out
cross-validation over a quantile-based candidate grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .curves import Curve, CurveSet
from .kernels import (
    POLICY_FALLBACK,
    nw_estimate,
    nw_weights,
    weight_matrix,
)
from .semimetric import (
    SemiMetricSpec,
    feature_matrix,
    feature_weights,
    pairwise_from_features,
    train_projection,
)

SELF_INCLUSION_MODES = ("include_self", "leave_one_out")
VARIANCE_METHODS = ("residual", "direct")


class BandwidthSelectionError(RuntimeError):
    """Every cross-validation candidate was disqualified."""


class Prediction(NamedTuple):
    value: float
    fallback: bool
    clipped: bool = False


@dataclass(frozen=True)
class MeanFit:
    """Frozen state of a fitted mean function."""

    train: CurveSet
    y: np.ndarray
    spec: SemiMetricSpec
    kernel: str
    bandwidth: float
    policy: str
    dist: np.ndarray = field(repr=False)       # cached self-distance matrix
    features: np.ndarray = field(repr=False)   # training feature vectors
    feat_weights: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.train)


def _resolve_spec(spec: SemiMetricSpec, train: CurveSet) -> SemiMetricSpec:
    if not spec.trained:
        spec = train_projection(spec, train)
    return spec


def _point_distances(fit, x: Curve) -> np.ndarray:
    if x.grid != fit.train.grid:
        raise ValueError("prediction curve is not on the training grid")
    fx = feature_matrix(fit.spec, CurveSet(x.grid, x.values[None, :]))
    return pairwise_from_features(fx, fit.features, fit.feat_weights)[0]


def _set_distances(fit, xs: CurveSet) -> np.ndarray:
    if xs.grid != fit.train.grid:
        raise ValueError("prediction curves are not on the training grid")
    fx = feature_matrix(fit.spec, xs)
    return pairwise_from_features(fx, fit.features, fit.feat_weights)


def fit_mean(
    train: CurveSet,
    y,
    spec: SemiMetricSpec,
    kernel: str = "quadratic",
    bandwidth: float = 1.0,
    policy: str = POLICY_FALLBACK,
    dist: np.ndarray | None = None,
) -> MeanFit:
    """Freeze a Nadaraya-Watson mean fit, caching the self-distance matrix.

    ``dist`` may pass in a precomputed self-distance matrix under ``spec``
    to skip recomputation (e.g. shared with bandwidth selection).
    """
    y = np.asarray(y, dtype=float)
    n = len(train)
    if y.shape != (n,):
        raise ValueError(f"{y.shape} responses for {n} curves")
    if n < 2:
        raise ValueError("need at least 2 training curves")
    if not np.all(np.isfinite(y)):
        raise ValueError("responses must be finite")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    spec = _resolve_spec(spec, train)
    feats = feature_matrix(spec, train)
    fw = feature_weights(spec, train.grid)
    if dist is None:
        dist = pairwise_from_features(feats, feats, fw)
    return MeanFit(train, y, spec, kernel, float(bandwidth), policy, dist, feats, fw)


def predict_mean(fit: MeanFit, x: Curve) -> Prediction:
    """Kernel-weighted mean of the training responses at x."""
    d = _point_distances(fit, x)
    w, fb = nw_weights(d, fit.bandwidth, fit.kernel, fit.policy)
    return Prediction(nw_estimate(w, fit.y), fb)


def predict_mean_set(fit: MeanFit, xs: CurveSet) -> tuple[np.ndarray, np.ndarray]:
    """Batched mean predictions; returns (values, fallback mask)."""
    d = _set_distances(fit, xs)
    w, fb = weight_matrix(d, fit.bandwidth, fit.kernel, fit.policy)
    return w @ fit.y, fb


def smoother_matrix(fit: MeanFit) -> np.ndarray:
    """In-sample weight matrix: row i smooths the responses at curve i.

    Each row includes the point's own observation (the self distance is
    zero, so it gets the largest kernel weight); rows sum to one.
    """
    w, _ = weight_matrix(fit.dist, fit.bandwidth, fit.kernel, fit.policy)
    return w


def squared_residuals(
    fit: MeanFit, self_inclusion: str = "include_self"
) -> tuple[np.ndarray, np.ndarray]:
    """Squared in-sample residuals (y_i - fitted_i)^2.

    ``leave_one_out`` removes each point's own weight before smoothing; a
    row left with no in-range neighbor falls back per the fit's policy and
    is flagged in the returned mask.
    """
    if self_inclusion not in SELF_INCLUSION_MODES:
        raise ValueError(f"unknown self-inclusion mode {self_inclusion!r}")
    w, fb = weight_matrix(
        fit.dist,
        fit.bandwidth,
        fit.kernel,
        fit.policy,
        exclude_diag=self_inclusion == "leave_one_out",
    )
    fitted = w @ fit.y
    return (fit.y - fitted) ** 2, fb


@dataclass(frozen=True)
class VarianceFit:
    """Frozen state of a fitted variance function.

    ``pseudo`` holds the smoothed responses: squared residuals for the
    residual method, squared responses for the direct method.
    """

    method: str
    mean_fit: MeanFit
    spec: SemiMetricSpec
    kernel: str
    bandwidth: float
    policy: str
    self_inclusion: str
    pseudo: np.ndarray = field(repr=False)
    residual_fallbacks: int
    dist: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)
    feat_weights: np.ndarray = field(repr=False)

    @property
    def train(self) -> CurveSet:
        return self.mean_fit.train


def fit_variance(
    method: str,
    mean_fit: MeanFit,
    spec: SemiMetricSpec,
    kernel: str | None = None,
    bandwidth: float = 1.0,
    self_inclusion: str = "include_self",
    policy: str | None = None,
    pseudo_responses=None,
    dist: np.ndarray | None = None,
) -> VarianceFit:
    """Freeze a variance fit on top of a mean fit.

    Pseudo-responses default to squared residuals of ``mean_fit``
    (residual method) or squared responses (direct method);
    ``pseudo_responses`` overrides them, e.g. with squared errors around a
    known mean function.
    """
    if method not in VARIANCE_METHODS:
        raise ValueError(f"unknown variance method {method!r}")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    kernel = mean_fit.kernel if kernel is None else kernel
    policy = mean_fit.policy if policy is None else policy
    train = mean_fit.train
    residual_fallbacks = 0
    if pseudo_responses is not None:
        pseudo = np.asarray(pseudo_responses, dtype=float)
        if pseudo.shape != mean_fit.y.shape:
            raise ValueError("pseudo-responses must align with the responses")
    elif method == "residual":
        pseudo, fb = squared_residuals(mean_fit, self_inclusion)
        residual_fallbacks = int(fb.sum())
    else:
        pseudo = mean_fit.y**2
    if method == "residual" and np.any(pseudo < 0):
        raise ValueError("residual pseudo-responses must be nonnegative")
    spec = _resolve_spec(spec, train)
    feats = feature_matrix(spec, train)
    fw = feature_weights(spec, train.grid)
    if dist is None:
        if spec == mean_fit.spec:
            dist = mean_fit.dist
        else:
            dist = pairwise_from_features(feats, feats, fw)
    return VarianceFit(
        method,
        mean_fit,
        spec,
        kernel,
        float(bandwidth),
        policy,
        self_inclusion,
        pseudo,
        residual_fallbacks,
        dist,
        feats,
        fw,
    )


def predict_variance(fit: VarianceFit, x: Curve) -> Prediction:
    """Variance estimate at x; nonnegative by construction.

    The direct method clips negative values of the smoothed squared
    responses minus the squared mean estimate at zero and flags the clip.
    """
    d = _point_distances(fit, x)
    w, fb = nw_weights(d, fit.bandwidth, fit.kernel, fit.policy)
    smooth = nw_estimate(w, fit.pseudo)
    if fit.method == "residual":
        return Prediction(smooth, fb)
    mp = predict_mean(fit.mean_fit, x)
    raw = smooth - mp.value * mp.value
    return Prediction(max(0.0, raw), fb or mp.fallback, raw < 0.0)


def predict_variance_set(
    fit: VarianceFit, xs: CurveSet
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched variance predictions: (values, fallback mask, clip mask)."""
    d = _set_distances(fit, xs)
    w, fb = weight_matrix(d, fit.bandwidth, fit.kernel, fit.policy)
    smooth = w @ fit.pseudo
    if fit.method == "residual":
        return smooth, fb, np.zeros(len(xs), dtype=bool)
    m, fb_m = predict_mean_set(fit.mean_fit, xs)
    raw = smooth - m * m
    clipped = raw < 0.0
    return np.maximum(raw, 0.0), fb | fb_m, clipped


def predict_variance_insample(
    fit: VarianceFit,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Variance estimates at the training curves, from cached distances."""
    w, fb = weight_matrix(fit.dist, fit.bandwidth, fit.kernel, fit.policy)
    smooth = w @ fit.pseudo
    if fit.method == "residual":
        return smooth, fb, np.zeros(fit.mean_fit.n, dtype=bool)
    m = smoother_matrix(fit.mean_fit) @ fit.mean_fit.y
    raw = smooth - m * m
    clipped = raw < 0.0
    return np.maximum(raw, 0.0), fb, clipped


@dataclass(frozen=True)
class CvResult:
    """Leave-one-out cross-validation scores over a bandwidth grid."""

    bandwidth: float
    candidates: np.ndarray
    scores: np.ndarray
    fallback_rates: np.ndarray
    qualified: np.ndarray

    def to_table(self) -> list[dict]:
        return [
            {
                "bandwidth": float(h),
                "score": float(s),
                "fallback_rate": float(r),
                "qualified": bool(q),
            }
            for h, s, r, q in zip(
                self.candidates, self.scores, self.fallback_rates, self.qualified
            )
        ]


def cv_bandwidth(
    train: CurveSet,
    responses,
    spec: SemiMetricSpec,
    kernel: str,
    candidates,
    dist: np.ndarray | None = None,
    fallback_threshold: float = 0.1,
) -> CvResult:
    """Pick a bandwidth by leave-one-out cross-validation.

    Each candidate's score is the sum of squared errors when predicting
    every response from all other points. Candidates whose nearest-neighbor
    fallback rate exceeds ``fallback_threshold`` are disqualified; the
    winner is the qualified candidate with the smallest score (smallest
    bandwidth on ties).
    """
    resp = np.asarray(responses, dtype=float)
    cand = np.asarray(candidates, dtype=float)
    if cand.ndim != 1 or cand.size < 1:
        raise ValueError("candidate grid must be a nonempty 1-D sequence")
    if not np.all(cand > 0):
        raise ValueError("bandwidth candidates must be positive")
    if resp.shape != (len(train),):
        raise ValueError("responses must align with the training curves")
    spec = _resolve_spec(spec, train)
    if dist is None:
        feats = feature_matrix(spec, train)
        dist = pairwise_from_features(feats, feats, feature_weights(spec, train.grid))
    scores = np.empty(cand.size)
    fb_rates = np.empty(cand.size)
    for k, h in enumerate(cand):
        w, fb = weight_matrix(dist, h, kernel, POLICY_FALLBACK, exclude_diag=True)
        errs = resp - w @ resp
        scores[k] = float(errs @ errs)
        fb_rates[k] = float(fb.mean())
    qualified = fb_rates <= fallback_threshold
    if not np.any(qualified):
        raise BandwidthSelectionError(
            "every bandwidth candidate exceeded the fallback threshold "
            f"{fallback_threshold:.0%}; the grid is too narrow for this sample"
        )
    best = int(np.argmin(np.where(qualified, scores, np.inf)))
    return CvResult(float(cand[best]), cand, scores, fb_rates, qualified)


def default_bandwidth_grid(dist: np.ndarray, size: int = 20) -> np.ndarray:
    """Candidate bandwidths at quantiles of the positive pairwise distances.

    Quantile levels run evenly from 0.05 to 1.0 (just the maximum for
    ``size`` 1); duplicate candidates collapse, so the grid may be shorter
    than requested.
    """
    if size < 1:
        raise ValueError("grid size must be positive")
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("expected a square self-distance matrix")
    off = d[~np.eye(d.shape[0], dtype=bool)]
    pos = off[off > 0]
    if pos.size == 0:
        raise ValueError("no positive off-diagonal distance to build a grid from")
    qs = np.array([1.0]) if size == 1 else np.linspace(0.05, 1.0, size)
    return np.unique(np.quantile(pos, qs, method="inverted_cdf"))
