"""Command-line interface.

Subcommands: simulate (write a seeded dataset), fit (train mean+variance
estimators, write a model JSON), predict (apply a model to new curves),
bench (Monte-Carlo experiment report), chemo (train/validation workflow on
curve files), smallball (small-ball fraction table).

Exit codes: 0 success, 2 usage error, 3 file/I-O error, 4 computation
error. All randomness flows from --seed, which is mandatory for the
stochastic subcommands. Output files are written atomically (temp file +
rename); input files are never modified.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from .bench import (
    ChemoConfig,
    ExperimentAbortError,
    ExperimentConfig,
    chemo_workflow,
    run_experiment,
    serialize_report,
)
from .curves import (
    CurveSet,
    read_curves_csv,
    read_responses_csv,
    write_curves_csv,
    write_responses_csv,
)
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
from .kernels import (
    KERNEL_KINDS,
    POLICY_FALLBACK,
    WEIGHT_POLICIES,
    EmptyNeighborhoodError,
)
from .semimetric import (
    SEMIMETRIC_KINDS,
    SemiMetricSpec,
    feature_matrix,
    feature_weights,
    pairwise_from_features,
    small_ball_fraction,
    train_projection,
)
from .simulate import DESIGNS, SimSpec, gen_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_COMPUTE = 4


class CliIoError(RuntimeError):
    """A file could not be read, parsed, or written."""


def _fmt(x) -> str:
    return repr(float(x))


def _atomic_write(path: str, write_to) -> None:
    """Write a file by calling write_to(tmp_path) and renaming into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-funvar-")
    os.close(fd)
    try:
        write_to(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: str, text: str) -> None:
    def w(tmp):
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)

    _atomic_write(path, w)


def _write_rows(path: str, header: list[str], rows) -> None:
    def w(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)

    _atomic_write(path, w)


def _read_curves(path: str) -> CurveSet:
    try:
        return read_curves_csv(path)
    except (OSError, ValueError) as exc:
        raise CliIoError(f"cannot read curves from {path}: {exc}") from exc


def _read_responses(path: str) -> np.ndarray:
    try:
        return read_responses_csv(path)
    except (OSError, ValueError) as exc:
        raise CliIoError(f"cannot read responses from {path}: {exc}") from exc


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise CliIoError(f"cannot hash {path}: {exc}") from exc
    return h.hexdigest()


def _out_path(args, name: str) -> str:
    os.makedirs(args.output_dir, exist_ok=True)
    return os.path.join(args.output_dir, name)


def _semimetric_from_args(args, order: int | None = None) -> SemiMetricSpec:
    order = args.order if order is None else order
    if args.semimetric == "pca_projection":
        return SemiMetricSpec.pca_projection(dim=args.dim)
    return SemiMetricSpec.deriv_l2(
        order=order,
        deriv_method=args.deriv_method,
        knots=args.knots,
        degree=args.degree,
    )


def _add_semimetric_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--semimetric", choices=SEMIMETRIC_KINDS, default="deriv_l2")
    p.add_argument("--order", type=int, default=0,
                   help="derivative order for the deriv_l2 semi-metric")
    p.add_argument("--deriv-method", choices=("finite_diff", "bspline"),
                   default="finite_diff")
    p.add_argument("--knots", type=int, default=20)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--dim", type=int, default=1,
                   help="number of components for the pca_projection semi-metric")


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="funvar",
        description="Kernel mean/variance function estimation for curve data.",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed; required for simulate and bench")
    parser.add_argument("--threads", type=int, default=None,
                        help="harness parallelism (env FUNVAR_THREADS also works)")
    parser.add_argument("--output-dir", default=".",
                        help="directory for all output files")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="output format for tabular results")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one seeded dataset and write it")
    p.add_argument("--example", choices=DESIGNS, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--stream", type=int, default=0,
                   help="replication stream id under the seed")
    p.add_argument("--stem", default=None,
                   help="output file name stem (default: the example name)")

    p = sub.add_parser("fit", help="fit mean and variance estimators")
    p.add_argument("--curves", required=True)
    p.add_argument("--responses", required=True)
    _add_semimetric_flags(p)
    p.add_argument("--v-order", type=int, default=None,
                   help="variance-stage derivative order (default: --order)")
    p.add_argument("--kernel", choices=KERNEL_KINDS, default="quadratic")
    p.add_argument("--policy", choices=WEIGHT_POLICIES, default=POLICY_FALLBACK)
    p.add_argument("--self-inclusion",
                   choices=("include_self", "leave_one_out"),
                   default="include_self")
    p.add_argument("--method", choices=("residual", "direct"), default="residual",
                   help="variance estimation method")
    p.add_argument("--h-m", type=float, default=None,
                   help="mean bandwidth (default: cross-validated)")
    p.add_argument("--h-v", type=float, default=None,
                   help="variance bandwidth (default: cross-validated)")
    p.add_argument("--grid-size", type=int, default=20,
                   help="number of cross-validation bandwidth candidates")
    p.add_argument("--model-out", default="model.json")

    p = sub.add_parser("predict", help="apply a fitted model to curves")
    p.add_argument("--model", required=True)
    p.add_argument("--curves", required=True)
    p.add_argument("--out", default="predictions.csv")

    p = sub.add_parser("bench", help="Monte-Carlo benchmark across replications")
    p.add_argument("--example", choices=DESIGNS, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--order", type=int, default=None,
                   help="override the per-example semi-metric derivative order")
    p.add_argument("--kernel", choices=KERNEL_KINDS, default="quadratic")
    p.add_argument("--self-inclusion",
                   choices=("include_self", "leave_one_out"),
                   default="include_self")
    p.add_argument("--methods", default="residual,direct",
                   help="comma-separated subset of residual,direct")
    p.add_argument("--grid-size", type=int, default=20)
    p.add_argument("--out", default="report.json")

    p = sub.add_parser("chemo", help="train/validation workflow on curve files")
    p.add_argument("--curves", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--train-size", type=int, default=150)
    p.add_argument("--mean-order", type=int, default=2)
    p.add_argument("--orders", default="0,1,2",
                   help="comma-separated candidate variance-stage orders")
    p.add_argument("--deriv-method", choices=("finite_diff", "bspline"),
                   default="bspline")
    p.add_argument("--knots", type=int, default=20)
    p.add_argument("--degree", type=int, default=5)
    p.add_argument("--kernel", choices=KERNEL_KINDS, default="quadratic")
    p.add_argument("--grid-size", type=int, default=20)
    p.add_argument("--report-out", default="chemo_report.json")
    p.add_argument("--pairs-out", default="chemo_pairs.csv")

    p = sub.add_parser("smallball",
                       help="empirical small-ball fraction over a bandwidth grid")
    p.add_argument("--curves", required=True)
    p.add_argument("--index", type=int, default=0,
                   help="index of the center curve within the file")
    _add_semimetric_flags(p)
    p.add_argument("--size", type=int, default=20, help="bandwidth grid size")
    p.add_argument("--out", default=None,
                   help="output file (default: smallball.csv or .json)")

    args = parser.parse_args(argv)
    if args.command in ("simulate", "bench") and args.seed is None:
        parser.error(f"--seed is required for {args.command}")
    if args.threads is None:
        env = os.environ.get("FUNVAR_THREADS")
        if env is not None:
            try:
                args.threads = int(env)
            except ValueError:
                parser.error(f"FUNVAR_THREADS must be an integer, got {env!r}")
        else:
            args.threads = 1
    if args.threads < 1:
        parser.error("--threads must be positive")
    return args


def _cmd_simulate(args) -> int:
    ds = gen_dataset(SimSpec(args.example, args.n, args.seed, args.stream,
                             args.grid_size))
    stem = args.stem or args.example
    curves_path = _out_path(args, f"{stem}_curves.csv")
    resp_path = _out_path(args, f"{stem}_responses.csv")
    truth_path = _out_path(args, f"{stem}_truth.csv")
    _atomic_write(curves_path, lambda tmp: write_curves_csv(tmp, ds.curves))
    _atomic_write(resp_path, lambda tmp: write_responses_csv(tmp, ds.y))
    n_par = ds.params.shape[1]
    header = ["true_m", "true_v"] + [f"param_{k + 1}" for k in range(n_par)]
    rows = [
        [_fmt(m), _fmt(v)] + [_fmt(p) for p in ps]
        for m, v, ps in zip(ds.m_true, ds.v_true, ds.params)
    ]
    _write_rows(truth_path, header, rows)
    for path in (curves_path, resp_path, truth_path):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    train = _read_curves(args.curves)
    y = _read_responses(args.responses)
    spec_m = _semimetric_from_args(args)
    v_order = args.order if args.v_order is None else args.v_order
    spec_v = _semimetric_from_args(args, order=v_order)

    if spec_m.kind == "pca_projection":
        spec_m = train_projection(spec_m, train)
        spec_v = spec_m
    feats = feature_matrix(spec_m, train)
    fw = feature_weights(spec_m, train.grid)
    dist_m = pairwise_from_features(feats, feats, fw)

    cv_m_table = None
    if args.h_m is None:
        grid = default_bandwidth_grid(dist_m, args.grid_size)
        cv_m = cv_bandwidth(train, y, spec_m, args.kernel, grid, dist=dist_m)
        h_m, cv_m_table = cv_m.bandwidth, cv_m.to_table()
    else:
        h_m = args.h_m
    mean_fit = fit_mean(train, y, spec_m, args.kernel, h_m, args.policy,
                        dist=dist_m)

    if spec_v == spec_m:
        dist_v = dist_m
    else:
        fv = feature_matrix(spec_v, train)
        dist_v = pairwise_from_features(fv, fv, feature_weights(spec_v, train.grid))
    if args.method == "residual":
        pseudo, fb_pseudo = squared_residuals(mean_fit, args.self_inclusion)
        pseudo_fallbacks = int(fb_pseudo.sum())
    else:
        pseudo = y**2
        pseudo_fallbacks = 0
    cv_v_table = None
    if args.h_v is None:
        grid_v = default_bandwidth_grid(dist_v, args.grid_size)
        cv_v = cv_bandwidth(train, pseudo, spec_v, args.kernel, grid_v, dist=dist_v)
        h_v, cv_v_table = cv_v.bandwidth, cv_v.to_table()
    else:
        h_v = args.h_v
    vfit = fit_variance(args.method, mean_fit, spec_v, bandwidth=h_v,
                        self_inclusion=args.self_inclusion,
                        pseudo_responses=pseudo, dist=dist_v)
    _, fb_eval, clip_eval = predict_variance_insample(vfit)

    model = {
        "curves_file": args.curves,
        "curves_sha256": _sha256(args.curves),
        "responses_file": args.responses,
        "responses_sha256": _sha256(args.responses),
        "semimetric": spec_m.to_config(),
        "variance_semimetric": spec_v.to_config(),
        "kernel": args.kernel,
        "policy": args.policy,
        "self_inclusion": args.self_inclusion,
        "variance_method": args.method,
        "h_m": h_m,
        "h_v": h_v,
        "cv_m": cv_m_table,
        "cv_v": cv_v_table,
        "counters": {
            "pseudo_fallbacks": pseudo_fallbacks,
            "insample_eval_fallbacks": int(fb_eval.sum()),
            "insample_clips": int(clip_eval.sum()),
        },
    }
    out = _out_path(args, args.model_out)
    _write_text(out, json.dumps(model, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def _load_model(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            model = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliIoError(f"cannot read model {path}: {exc}") from exc
    needed = ("curves_file", "responses_file", "curves_sha256", "responses_sha256",
              "semimetric", "variance_semimetric", "kernel", "policy",
              "self_inclusion", "variance_method", "h_m", "h_v")
    missing = [k for k in needed if k not in model]
    if missing:
        raise CliIoError(f"model {path} is missing fields: {', '.join(missing)}")
    return model


def _cmd_predict(args) -> int:
    model = _load_model(args.model)
    for kind in ("curves", "responses"):
        path = model[f"{kind}_file"]
        if not os.path.exists(path):
            raise CliIoError(f"training {kind} file {path} not found")
        got = _sha256(path)
        if got != model[f"{kind}_sha256"]:
            raise CliIoError(
                f"training {kind} file {path} changed since the model was fit "
                f"(sha256 {got} != {model[f'{kind}_sha256']})"
            )
    train = _read_curves(model["curves_file"])
    y = _read_responses(model["responses_file"])
    xs = _read_curves(args.curves)

    spec_m = SemiMetricSpec.from_config(model["semimetric"])
    spec_v = SemiMetricSpec.from_config(model["variance_semimetric"])
    mean_fit = fit_mean(train, y, spec_m, model["kernel"], model["h_m"],
                        model["policy"])
    if model["variance_method"] == "residual":
        pseudo, _ = squared_residuals(mean_fit, model["self_inclusion"])
    else:
        pseudo = y**2
    vfit = fit_variance(model["variance_method"], mean_fit, spec_v,
                        bandwidth=model["h_v"],
                        self_inclusion=model["self_inclusion"],
                        pseudo_responses=pseudo)

    m_hat, m_fb = predict_mean_set(mean_fit, xs)
    v_hat, v_fb, v_clip = predict_variance_set(vfit, xs)
    rows = [
        [i, _fmt(m), int(fm), _fmt(v), int(fv), int(c)]
        for i, (m, fm, v, fv, c) in enumerate(zip(m_hat, m_fb, v_hat, v_fb, v_clip))
    ]
    out = _out_path(args, args.out)
    _write_rows(out, ["index", "m_hat", "m_fallback", "v_hat", "v_fallback",
                      "v_clipped"], rows)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    methods = tuple(m for m in args.methods.split(",") if m)
    spec = None
    if args.order is not None:
        spec = SemiMetricSpec.deriv_l2(order=args.order)
    cfg = ExperimentConfig(
        args.example,
        n=args.n,
        n_reps=args.reps,
        base_seed=args.seed,
        spec=spec,
        kernel=args.kernel,
        grid_size=args.grid_size,
        self_inclusion=args.self_inclusion,
        methods=methods,
    )
    report = run_experiment(cfg, threads=args.threads)
    out = _out_path(args, args.out)
    _write_text(out, serialize_report(report))
    summary = " ".join(
        f"{m}={report.medians[m]:.6g}" for m in cfg.methods
    )
    print(f"median MSE: {summary}" if summary else "no methods requested")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_chemo(args) -> int:
    orders = tuple(int(o) for o in args.orders.split(",") if o != "")
    # classify unreadable/unparsable inputs as I/O failures up front; any
    # ValueError out of the workflow itself is then a computation error
    _read_curves(args.curves)
    _read_responses(args.responses)
    cfg = ChemoConfig(
        curves_file=args.curves,
        responses_file=args.responses,
        train_size=args.train_size,
        mean_order=args.mean_order,
        candidate_orders=orders,
        deriv_method=args.deriv_method,
        knots=args.knots,
        degree=args.degree,
        kernel=args.kernel,
        grid_size=args.grid_size,
    )
    report = chemo_workflow(cfg)
    out_json = _out_path(args, args.report_out)
    _write_text(out_json, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    out_csv = _out_path(args, args.pairs_out)
    rows = [
        [i, _fmt(v), _fmt(r)]
        for i, (v, r) in enumerate(zip(report.v_hat, report.r_hat))
    ]
    _write_rows(out_csv, ["index", "v_hat", "r_squared"], rows)
    mses = " ".join(f"order{o}={report.val_mse[o]:.6g}" for o in orders)
    print(f"chosen order: {report.chosen_order} ({mses})")
    print(f"wrote {out_json}")
    print(f"wrote {out_csv}")
    return EXIT_OK


def _cmd_smallball(args) -> int:
    cs = _read_curves(args.curves)
    if not 0 <= args.index < len(cs):
        raise ValueError(f"--index {args.index} out of range for {len(cs)} curves")
    spec = _semimetric_from_args(args)
    if spec.kind == "pca_projection":
        spec = train_projection(spec, cs)
    x = cs.curve(args.index)
    feats = feature_matrix(spec, cs)
    fw = feature_weights(spec, cs.grid)
    d = pairwise_from_features(feats[args.index : args.index + 1], feats, fw)[0]
    pos = d[d > 0]
    if pos.size == 0:
        raise ValueError("all curves coincide with the center; no distance scale")
    if args.size < 1:
        raise ValueError("--size must be positive")
    qs = np.array([1.0]) if args.size == 1 else np.linspace(0.05, 1.0, args.size)
    hs = np.unique(np.quantile(pos, qs, method="inverted_cdf"))
    fractions = [small_ball_fraction(spec, cs, x, float(h)) for h in hs]
    out_name = args.out or ("smallball.json" if args.format == "json" else "smallball.csv")
    out = _out_path(args, out_name)
    if args.format == "json":
        payload = {
            "rows": [{"h": float(h), "fraction": f} for h, f in zip(hs, fractions)]
        }
        _write_text(out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        _write_rows(out, ["h", "fraction"],
                    [[_fmt(h), _fmt(f)] for h, f in zip(hs, fractions)])
    print(f"wrote {out}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "bench": _cmd_bench,
    "chemo": _cmd_chemo,
    "smallball": _cmd_smallball,
}


def dispatch(args) -> int:
    """Run a parsed command, mapping failures to the documented exit codes."""
    try:
        return _COMMANDS[args.command](args)
    except CliIoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (BandwidthSelectionError, EmptyNeighborhoodError, ExperimentAbortError,
            ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
