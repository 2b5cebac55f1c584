"""Monte-Carlo benchmark harness and the spectrometric train/validation workflow.

A replication draws one dataset, selects the mean bandwidth by
cross-validation on the responses, then selects a variance bandwidth per
method by cross-validation on that method's pseudo-responses (squared
residuals, or squared responses for the direct method), and scores each
variance estimate by discrete MSE against the true variance at the n
training curves. Replications are keyed by (base_seed, rep_index) and are
reproducible independently and in parallel; serialized reports are
byte-identical at any thread count.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curves import read_curves_csv, read_responses_csv
from .estimators import (
    BandwidthSelectionError,
    cv_bandwidth,
    default_bandwidth_grid,
    fit_mean,
    fit_variance,
    predict_mean_set,
    predict_variance_insample,
    predict_variance_set,
    squared_residuals,
)
from .kernels import KERNEL_KINDS, POLICY_FALLBACK
from .semimetric import (
    SemiMetricSpec,
    feature_matrix,
    feature_weights,
    pairwise_from_features,
)
from .simulate import DESIGNS, SimSpec, SimulatedDataset, gen_dataset

METHODS = ("residual", "direct")


class ExperimentAbortError(RuntimeError):
    """Too many replications failed for the aggregate to mean anything."""


def design_default_spec(design: str) -> SemiMetricSpec:
    """Per-design semi-metric: plain L2 for the Brownian designs, first
    derivatives for the smooth sinusoids."""
    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}")
    return SemiMetricSpec.deriv_l2(order=1 if design == "ex3" else 0)


@dataclass(frozen=True)
class ExperimentConfig:
    design: str
    n: int = 200
    n_reps: int = 100
    base_seed: int = 0
    spec: SemiMetricSpec | None = None  # None -> design default
    kernel: str = "quadratic"
    grid_size: int = 20
    self_inclusion: str = "include_self"
    methods: tuple[str, ...] = METHODS

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.n_reps < 1:
            raise ValueError("n_reps must be positive")
        if self.kernel not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.grid_size < 1:
            raise ValueError("bandwidth grid size must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods")

    @property
    def resolved_spec(self) -> SemiMetricSpec:
        return self.spec if self.spec is not None else design_default_spec(self.design)

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "n": self.n,
            "n_reps": self.n_reps,
            "base_seed": self.base_seed,
            "semimetric": self.resolved_spec.to_config(),
            "kernel": self.kernel,
            "grid_size": self.grid_size,
            "self_inclusion": self.self_inclusion,
            "methods": list(self.methods),
        }


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    failed: bool = False
    error: str | None = None
    h_m: float | None = None
    h_v: dict = field(default_factory=dict)
    mse: dict = field(default_factory=dict)
    fallbacks: dict = field(default_factory=dict)
    clips: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rep": self.rep,
            "failed": self.failed,
            "error": self.error,
            "h_m": self.h_m,
            "h_v": dict(self.h_v),
            "mse": dict(self.mse),
            "fallbacks": dict(self.fallbacks),
            "clips": dict(self.clips),
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Everything run_experiment produced.

    ``wall_clock`` is informational only and is excluded from to_dict()
    so that serialized reports are byte-identical across runs and thread
    counts; every serialized aggregate is recomputable from the records.
    """

    config: ExperimentConfig
    records: tuple
    medians: dict
    n_failed: int
    wall_clock: float

    def to_dict(self) -> dict:
        fallbacks: dict[str, int] = {}
        clips: dict[str, int] = {}
        for rec in self.records:
            for k, c in rec.fallbacks.items():
                fallbacks[k] = fallbacks.get(k, 0) + c
            for k, c in rec.clips.items():
                clips[k] = clips.get(k, 0) + c
        return {
            "config": self.config.to_dict(),
            "replications": [rec.to_dict() for rec in self.records],
            "median_mse": dict(self.medians),
            "n_failed": self.n_failed,
            "fallback_totals": fallbacks,
            "clip_totals": clips,
        }


def serialize_report(report) -> str:
    """Canonical JSON text for a report; stable byte-for-byte."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def discrete_mse(estimates, truths) -> float:
    """Mean of squared differences between two equal-length sequences."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.ndim != 1 or e.shape != t.shape:
        raise ValueError(f"length mismatch: {e.shape} vs {t.shape}")
    if e.size < 1:
        raise ValueError("need at least one value")
    return float(np.mean(np.square(e - t)))


def run_replication(
    cfg: ExperimentConfig,
    rep_index: int,
    dataset: SimulatedDataset | None = None,
    known_mean: bool = False,
) -> ReplicationRecord:
    """One Monte-Carlo replication.

    Steps: draw the dataset for (base_seed, rep_index); build the pairwise
    distances and candidate bandwidth grid once; pick h_m by CV on the
    responses; then per method, pick h_v by CV on the pseudo-responses and
    score the in-sample variance estimates against the true variance.

    ``dataset`` substitutes a pre-built dataset for the seeded draw;
    ``known_mean`` replaces the residual method's pseudo-responses with
    squared errors around the true mean (a diagnostic that isolates the
    variance stage from mean estimation error).
    """
    if rep_index < 0:
        raise ValueError("rep_index must be nonnegative")
    if dataset is None:
        dataset = gen_dataset(SimSpec(cfg.design, cfg.n, cfg.base_seed, rep_index))
    spec = cfg.resolved_spec
    feats = feature_matrix(spec, dataset.curves)
    fw = feature_weights(spec, dataset.curves.grid)
    dist = pairwise_from_features(feats, feats, fw)
    grid = default_bandwidth_grid(dist, cfg.grid_size)

    h_v: dict = {}
    mse: dict = {}
    fallbacks: dict = {}
    clips: dict = {}
    try:
        cv_m = cv_bandwidth(dataset.curves, dataset.y, spec, cfg.kernel, grid, dist=dist)
        mean_fit = fit_mean(
            dataset.curves, dataset.y, spec, cfg.kernel, cv_m.bandwidth,
            POLICY_FALLBACK, dist=dist,
        )
        for method in cfg.methods:
            if method == "residual":
                if known_mean:
                    pseudo = (dataset.y - dataset.m_true) ** 2
                else:
                    pseudo, fb_pseudo = squared_residuals(mean_fit, cfg.self_inclusion)
                    fallbacks["residual_pseudo"] = int(fb_pseudo.sum())
            else:
                pseudo = dataset.y**2
            cv_v = cv_bandwidth(dataset.curves, pseudo, spec, cfg.kernel, grid, dist=dist)
            vfit = fit_variance(
                method,
                mean_fit,
                spec,
                bandwidth=cv_v.bandwidth,
                self_inclusion=cfg.self_inclusion,
                pseudo_responses=pseudo,
                dist=dist,
            )
            v_hat, fb, clip = predict_variance_insample(vfit)
            h_v[method] = cv_v.bandwidth
            mse[method] = discrete_mse(v_hat, dataset.v_true)
            fallbacks[f"{method}_eval"] = int(fb.sum())
            if method == "direct":
                clips["direct"] = int(clip.sum())
    except BandwidthSelectionError as exc:
        return ReplicationRecord(rep_index, failed=True, error=str(exc))
    return ReplicationRecord(
        rep_index,
        h_m=cv_m.bandwidth,
        h_v=h_v,
        mse=mse,
        fallbacks=fallbacks,
        clips=clips,
    )


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Run all replications and aggregate per-method median MSE.

    Aborts if more than 20% of replications fail. The report is identical
    at any ``threads`` value: replications are independent and aggregation
    happens in rep-index order.
    """
    if threads < 1:
        raise ValueError("threads must be positive")
    t0 = time.perf_counter()
    reps = range(cfg.n_reps)
    if threads == 1:
        records = [run_replication(cfg, r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda r: run_replication(cfg, r), reps))
    records.sort(key=lambda rec: rec.rep)
    n_failed = sum(rec.failed for rec in records)
    if n_failed > 0.2 * cfg.n_reps:
        lines = [
            f"rep {rec.rep}: {rec.error}" for rec in records if rec.failed
        ]
        raise ExperimentAbortError(
            f"{n_failed} of {cfg.n_reps} replications failed (> 20%):\n"
            + "\n".join(lines)
        )
    medians = {}
    for method in cfg.methods:
        vals = [rec.mse[method] for rec in records if not rec.failed]
        medians[method] = float(np.median(vals))
    return ExperimentReport(
        cfg, tuple(records), medians, n_failed, time.perf_counter() - t0
    )


def convergence_check(
    design: str,
    n_values,
    n_reps: int,
    base_seed: int,
    threads: int = 1,
    **config_kwargs,
) -> list[dict]:
    """Median residual-method MSE at each sample size, same seeds throughout.

    Consistency of the estimator should show up as medians decreasing in n.
    """
    ns = [int(n) for n in n_values]
    if len(ns) < 2:
        raise ValueError("need at least two sample sizes")
    if any(b < a for a, b in zip(ns, ns[1:])):
        raise ValueError("sample sizes must be nondecreasing")
    rows = []
    for n in ns:
        cfg = ExperimentConfig(
            design,
            n=n,
            n_reps=n_reps,
            base_seed=base_seed,
            methods=("residual",),
            **config_kwargs,
        )
        report = run_experiment(cfg, threads=threads)
        rows.append(
            {
                "n": n,
                "median_mse": report.medians["residual"],
                "n_failed": report.n_failed,
            }
        )
    return rows


@dataclass(frozen=True)
class ChemoConfig:
    """Train/validation workflow over curves read from files.

    The mean is fit with an order-2 derivative semi-metric; the variance
    semi-metric order is chosen among candidates by validation MSE against
    the held-out squared residuals.
    """

    curves_file: str
    responses_file: str
    train_size: int = 150
    mean_order: int = 2
    candidate_orders: tuple[int, ...] = (0, 1, 2)
    deriv_method: str = "bspline"
    knots: int = 20
    degree: int = 5
    kernel: str = "quadratic"
    grid_size: int = 20

    def __post_init__(self):
        if self.train_size < 2:
            raise ValueError("train_size must be at least 2")
        if not self.candidate_orders:
            raise ValueError("need at least one candidate order")
        if self.kernel not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kernel!r}")

    def semimetric(self, order: int) -> SemiMetricSpec:
        return SemiMetricSpec.deriv_l2(
            order=order,
            deriv_method=self.deriv_method,
            knots=self.knots,
            degree=self.degree,
        )

    def to_dict(self) -> dict:
        return {
            "curves_file": self.curves_file,
            "responses_file": self.responses_file,
            "train_size": self.train_size,
            "mean_order": self.mean_order,
            "candidate_orders": list(self.candidate_orders),
            "deriv_method": self.deriv_method,
            "knots": self.knots,
            "degree": self.degree,
            "kernel": self.kernel,
            "grid_size": self.grid_size,
        }


@dataclass(frozen=True)
class ChemoReport:
    config: ChemoConfig
    n_total: int
    h_m: float
    h_v: dict
    val_mse: dict
    chosen_order: int
    v_hat: np.ndarray = field(repr=False)
    r_hat: np.ndarray = field(repr=False)
    mean_fallbacks: int = 0
    var_fallbacks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_total": self.n_total,
            "h_m": self.h_m,
            "h_v": {str(k): v for k, v in self.h_v.items()},
            "validation_mse": {str(k): v for k, v in self.val_mse.items()},
            "chosen_order": self.chosen_order,
            "pairs": [
                {"index": i, "v_hat": float(v), "r_squared": float(r)}
                for i, (v, r) in enumerate(zip(self.v_hat, self.r_hat))
            ],
            "mean_fallbacks": self.mean_fallbacks,
            "var_fallbacks": {str(k): v for k, v in self.var_fallbacks.items()},
        }


def chemo_workflow(cfg: ChemoConfig) -> ChemoReport:
    """Fit on the leading curves, choose the variance semi-metric order on
    the held-out rest.

    Validation MSE for a candidate order is the mean of
    (R_hat_i - v_hat(X_i))^2 over held-out curves, where R_hat_i is the
    squared validation residual around the fitted mean. Bandwidths are
    cross-validated on training data only. Ties in the order selection go
    to the first candidate listed.
    """
    curves = read_curves_csv(cfg.curves_file)
    y = read_responses_csv(cfg.responses_file)
    n = len(curves)
    if y.shape != (n,):
        raise ValueError(f"{y.shape[0]} responses for {n} curves")
    if cfg.train_size >= n:
        raise ValueError(f"train_size {cfg.train_size} must be below {n} curves")
    idx = np.arange(n)
    train = curves.subset(idx[: cfg.train_size])
    val = curves.subset(idx[cfg.train_size :])
    y_train = y[: cfg.train_size]
    y_val = y[cfg.train_size :]

    spec_m = cfg.semimetric(cfg.mean_order)
    feats_m = feature_matrix(spec_m, train)
    dist_m = pairwise_from_features(feats_m, feats_m, feature_weights(spec_m, train.grid))
    grid_m = default_bandwidth_grid(dist_m, cfg.grid_size)
    cv_m = cv_bandwidth(train, y_train, spec_m, cfg.kernel, grid_m, dist=dist_m)
    mean_fit = fit_mean(
        train, y_train, spec_m, cfg.kernel, cv_m.bandwidth, POLICY_FALLBACK, dist=dist_m
    )

    m_val, fb_mean = predict_mean_set(mean_fit, val)
    if fb_mean.all():
        raise RuntimeError(
            "every validation mean prediction fell back to a nearest neighbor; "
            "the selected mean bandwidth does not cover the validation curves"
        )
    r_val = (y_val - m_val) ** 2
    pseudo, _ = squared_residuals(mean_fit)

    h_v: dict = {}
    val_mse: dict = {}
    var_fallbacks: dict = {}
    v_by_order: dict = {}
    for order in cfg.candidate_orders:
        spec_v = cfg.semimetric(order)
        feats_v = feature_matrix(spec_v, train)
        dist_v = pairwise_from_features(
            feats_v, feats_v, feature_weights(spec_v, train.grid)
        )
        grid_v = default_bandwidth_grid(dist_v, cfg.grid_size)
        cv_v = cv_bandwidth(train, pseudo, spec_v, cfg.kernel, grid_v, dist=dist_v)
        vfit = fit_variance(
            "residual",
            mean_fit,
            spec_v,
            bandwidth=cv_v.bandwidth,
            pseudo_responses=pseudo,
            dist=dist_v,
        )
        v_hat, fb_v, _ = predict_variance_set(vfit, val)
        h_v[order] = cv_v.bandwidth
        val_mse[order] = discrete_mse(v_hat, r_val)
        var_fallbacks[order] = int(fb_v.sum())
        v_by_order[order] = v_hat

    chosen = min(cfg.candidate_orders, key=lambda o: val_mse[o])
    return ChemoReport(
        cfg,
        n,
        cv_m.bandwidth,
        h_v,
        val_mse,
        chosen,
        v_by_order[chosen],
        r_val,
        int(fb_mean.sum()),
        var_fallbacks,
    )
