"""Command line front end.

Subcommands: ``make-dataset``, ``train``, ``denoise``, ``eval``,
``gap-check`` and ``rate-check``. Failures print a JSON object on stderr
and exit with status 2 for invalid input (bad dimensions, malformed
files, out-of-range options) or 1 for anything else. Files written by a
failing command are removed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as dio
from .learning import DimensionError, TrainConfig, train
from .metrics import ALPHA_FLOOR, constant_grid, evaluate, oracle_alphas, predict_alphas
from .rof import RofInstance, bregman_decomposition, denoise, primal_dual_gap, project_ball
from .solver import SolverConfig

THREADS_ENV = "HPGCG_THREADS"
TRACE_HEADER = ["k", "residual", "theta", "objective"]


class CliError(ValueError):
    """Invalid command line input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


class Outputs:
    """Tracks files written by a command so they can be removed on failure."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        path = Path(path)
        self.paths.append(path)
        return path

    def discard(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _f(x):
    return repr(float(x))


def _positive(kind):
    def parse(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return parse


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {s}")
    return v


def _default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise CliError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _write_json(path, obj, out):
    out.add(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _existing(path, what):
    if not Path(path).exists():
        raise CliError(f"{what} not found: {path}")


# --- subcommands ---------------------------------------------------------------

def cmd_make_dataset(args, out):
    if args.images is not None:
        folder = Path(args.images)
        if not folder.is_dir():
            raise CliError(f"image directory not found: {folder}")
        files = sorted(folder.glob("*.pgm"))
        if not files:
            raise CliError(f"no .pgm files in {folder}")
        images = [dio.read_pgm(f) for f in files]
        source = f"pgm:{folder.name} ({len(files)} images)"
    else:
        rng = np.random.default_rng(args.seed)
        images = [dio.synthetic_cartoon(args.image_size, rng) for _ in range(args.synthetic)]
        source = f"synthetic cartoon {args.synthetic}x{args.image_size}px seed {args.seed}"
    ds = dio.make_dataset(images, args.patch_size, args.stride or args.patch_size,
                          args.variance, args.seed, source, args.max_patches)
    jpath, bpath = dio._paths(args.out)
    out.add(jpath), out.add(bpath)
    dio.save_dataset(args.out, ds)
    print(json.dumps({"patches": len(ds), "patch_size": ds.patch_size, "manifest": str(jpath)}))


def write_trace_csv(path, trace, out):
    with open(out.add(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for k, d, th, obj in trace.rows():
            w.writerow([k, _f(d), _f(th), _f(obj)])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRACE_HEADER:
        raise CliError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    try:
        arr = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise CliError(f"{path}: {exc}")
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise CliError(f"{path}: no trace rows")
    return arr


def cmd_train(args, out):
    _existing(dio._paths(args.data)[0], "dataset")
    ds = dio.load_dataset(args.data)
    if args.subset is not None:
        ds = ds.subset(np.arange(min(args.subset, len(ds))))
    cfg = TrainConfig(args.lam, args.tol, args.max_iter, args.kind, args.lipschitz, args.trace_every)
    model, trace = train(ds, cfg)
    jpath, bpath = dio._paths(args.out)
    out.add(jpath), out.add(bpath)
    dio.save_model(args.out, model)
    if args.trace:
        write_trace_csv(args.trace, trace, out)
    print(json.dumps({"converged": trace.converged, "iterations": trace.n_iterations,
                      "residual": trace.final_residual, "objective": trace.objectives[-1],
                      "psd_clamps": trace.events.get("psd_clamps", 0)}))


def cmd_denoise(args, out):
    _existing(args.image, "image")
    img = dio.read_pgm(args.image)
    if args.model is not None:
        model = dio.load_model(args.model)
        p = model.patch_size if model.patch_size is not None else args.patch_size
    else:
        model, p = float(args.alpha), args.patch_size
    if p is None:
        raise CliError("--patch-size is required with --alpha or a constant model")
    h, w = img.shape
    if h % p or w % p:
        raise DimensionError(f"image {h}x{w} is not a multiple of the patch size {p}")
    tiles = np.stack([img[i:i + p, j:j + p] for i in range(0, h, p) for j in range(0, w, p)])
    alphas = predict_alphas(model, tiles)
    cfg = SolverConfig(args.tol, args.max_iter)
    result = np.empty_like(img)
    records = []
    per_row = w // p
    for t, (tile, a) in enumerate(zip(tiles, alphas)):
        pd, trace = denoise(RofInstance(tile, max(float(a), ALPHA_FLOOR)), cfg)
        r, c = divmod(t, per_row)
        result[r * p:(r + 1) * p, c * p:(c + 1) * p] = pd.u
        records.append((r, c, float(a), pd.gap, trace.converged))
        if args.patch_dir:
            folder = Path(args.patch_dir)
            folder.mkdir(parents=True, exist_ok=True)
            dio.write_pgm(out.add(folder / f"patch_{r:03d}_{c:03d}.pgm"), pd.u)
    dio.write_pgm(out.add(args.out), result)
    if args.alpha_csv:
        with open(out.add(args.alpha_csv), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["tile_row", "tile_col", "alpha", "gap", "converged"])
            for r, c, a, gap, conv in records:
                wr.writerow([r, c, _f(a), _f(gap), int(conv)])
    print(json.dumps({"tiles": len(records), "patch_size": p,
                      "converged": all(rec[4] for rec in records)}))


def _model_arg(spec):
    name, sep, stem = spec.partition("=")
    if not sep:
        stem, name = spec, Path(spec).name
    return name, stem


def cmd_eval(args, out):
    _existing(dio._paths(args.data)[0], "dataset")
    ds = dio.load_dataset(args.data)
    if args.subset is not None:
        ds = ds.subset(np.arange(min(args.subset, len(ds))))
    models = {}
    for spec in args.model or []:
        name, stem = _model_arg(spec)
        _existing(dio._paths(stem)[0], "model")
        models[name] = dio.load_model(stem, patch_size=ds.patch_size)
    if not args.no_grid:
        for a in constant_grid():
            models[f"const_{a:.3g}"] = float(a)
    if not models:
        raise CliError("nothing to evaluate: give --model or drop --no-grid")
    ocfg = TrainConfig(residual_tolerance=args.oracle_tol, max_iterations=args.oracle_iter,
                       model_kind="constant")
    oracle = oracle_alphas(ds, ocfg, args.cache, args.threads)
    report = evaluate(models, ds, oracle, SolverConfig(args.tol, args.max_iter), args.threads)
    report.settings.update({"oracle_tolerance": args.oracle_tol, "oracle_iterations": args.oracle_iter,
                            "test_patches": len(ds)})
    out.add(args.report)
    report.to_json(args.report)
    if args.csv:
        out.add(args.csv)
        report.to_csv(args.csv)
    for name, ma, mu in report.table():
        print(f"{name:>16s}  mse_alpha {ma:.4e}  mse_u {mu:.4e}")


def cmd_gap_check(args, out):
    gt = None
    if args.data is not None:
        _existing(dio._paths(args.data)[0], "dataset")
        ds = dio.load_dataset(args.data)
        if not 0 <= args.index < len(ds):
            raise CliError(f"--index {args.index} out of range for {len(ds)} patches")
        xi, gt = ds.noisy[args.index], ds.ground_truth[args.index]
    else:
        _existing(args.image, "image")
        xi = dio.read_pgm(args.image)
        if xi.shape[0] != xi.shape[1]:
            raise DimensionError(f"image must be square, got {xi.shape[0]}x{xi.shape[1]}")
    inst = RofInstance(xi, args.alpha)
    pd, trace = denoise(inst, SolverConfig(args.tol, args.max_iter))
    if not trace.converged:
        raise CliError(f"reference solve stopped at gap {pd.gap:.3e} after {trace.n_iterations} "
                       "iterations; raise --max-iter or use a smaller patch")
    rng = np.random.default_rng(args.seed)
    spread = float(np.std(xi)) or 1.0
    samples = []
    for _ in range(args.samples):
        u = xi + rng.normal(0.0, spread, xi.shape)
        v = project_ball(rng.normal(0.0, args.alpha, xi.shape + (2,)), args.alpha)
        bd = bregman_decomposition(u, v, pd, inst)
        gap = primal_dual_gap(u, v, inst)
        samples.append({"gap": gap, "d_f": bd.d_f, "d_fstar": bd.d_fstar, "d_gstar": bd.d_gstar,
                        "d_g": bd.d_g, "abs_err": abs(gap - bd.total)})
    report = {
        "alpha": args.alpha,
        "patch_size": int(xi.shape[0]),
        "iterations": trace.n_iterations,
        "converged": trace.converged,
        "solution_gap": pd.gap,
        "gap_at_data": primal_dual_gap(xi, np.zeros(xi.shape + (2,)), inst),
        "max_abs_err": max((s["abs_err"] for s in samples), default=0.0),
        "max_rel_err": max((s["abs_err"] / (1 + s["gap"]) for s in samples), default=0.0),
        "samples": samples,
    }
    if gt is not None:
        # the gap at (u_true, v) bounds the squared distance of u_true to u^alpha
        dist = 0.5 * float(np.sum((gt - pd.u) ** 2))
        slack = [primal_dual_gap(gt, project_ball(rng.normal(0.0, args.alpha, xi.shape + (2,)), args.alpha),
                                 inst) - dist for _ in range(args.samples)]
        slack.append(primal_dual_gap(gt, pd.v, inst) - dist)
        report["half_sq_distance"] = dist
        report["min_majorization_slack"] = min(slack)
    if args.out:
        _write_json(args.out, report, out)
    print(json.dumps({k: v for k, v in report.items() if k != "samples"}))


def rate_verdict(objectives, k0=10, k_max=None, factor=2.0):
    """Check ``r(k) <= factor * r(k0) * (k0 / k)^(1/3)`` with ``r`` relative to the best value."""
    obj = np.asarray(objectives, dtype=float)
    if len(obj) <= k0:
        raise CliError(f"trace too short for the rate check: {len(obj)} rows, need more than {k0}")
    r = obj - obj.min()
    k = np.arange(len(obj))
    hi = len(obj) if k_max is None else min(len(obj), k_max + 1)
    bound = factor * r[k0] * (k0 / k[k0:hi]) ** (1 / 3)
    excess = r[k0:hi] - bound
    worst = int(np.argmax(excess)) + k0
    return {"pass": bool(np.all(excess <= 0)), "k0": k0, "k_max": int(hi - 1), "r_k0": float(r[k0]),
            "worst_k": worst, "worst_excess": float(excess[worst - k0])}


def cmd_rate_check(args, out):
    _existing(args.trace, "trace")
    arr = read_trace_csv(args.trace)
    ks = arr[:, 0]
    if not np.array_equal(ks, np.arange(len(ks))):
        raise CliError("rate-check needs a trace recorded at every iteration (--trace-every 1)")
    verdict = rate_verdict(arr[:, 3], args.k0, args.k_max)
    if args.out:
        _write_json(args.out, verdict, out)
    print(json.dumps(verdict))
    return 0 if verdict["pass"] or not args.strict else 3


# --- parser ----------------------------------------------------------------------

def build_parser():
    ap = _Parser(prog="hpgcg", description=__doc__.split("\n")[0])
    ap.add_argument("--threads", type=_positive(int), default=None,
                    help=f"worker threads for per-patch work (default ${THREADS_ENV} or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="cut images into noisy patch pairs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", help="directory of .pgm ground-truth images")
    src.add_argument("--synthetic", type=_positive(int), metavar="COUNT",
                     help="generate COUNT synthetic cartoon images")
    p.add_argument("--image-size", type=_positive(int), default=64)
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--stride", type=_positive(int), default=None, help="default: patch size")
    p.add_argument("--variance", type=_nonneg_float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-patches", type=_positive(int), default=None)
    p.add_argument("--out", required=True, help="output stem (writes STEM.json and STEM.bin)")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train a parameter model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model stem")
    p.add_argument("--trace", help="residual trace CSV")
    p.add_argument("--kind", choices=["quadratic", "constant"], default="quadratic")
    p.add_argument("--lam", type=_positive(float), default=50.0)
    p.add_argument("--lipschitz", type=_positive(float), default=None, help="default 8/N")
    p.add_argument("--tol", type=_positive(float), default=1e-4)
    p.add_argument("--max-iter", type=_positive(int), default=20000)
    p.add_argument("--trace-every", type=_positive(int), default=1)
    p.add_argument("--subset", type=_positive(int), default=None, help="use the first N patches")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a PGM image tile by tile")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="reassembled PGM")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--model")
    how.add_argument("--alpha", type=_positive(float))
    p.add_argument("--patch-size", type=_positive(int), default=None)
    p.add_argument("--patch-dir", help="also write every denoised tile as a PGM here")
    p.add_argument("--alpha-csv", help="per-tile parameters and gaps")
    p.add_argument("--tol", type=_positive(float), default=1e-8)
    p.add_argument("--max-iter", type=_positive(int), default=20000)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="compare models on a test dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", action="append", metavar="[NAME=]STEM")
    p.add_argument("--no-grid", action="store_true", help="skip the constant grid 1e-4..1e-1")
    p.add_argument("--report", required=True, help="report JSON")
    p.add_argument("--csv", help="per-patch CSV")
    p.add_argument("--cache", help="directory caching per-patch best constants")
    p.add_argument("--oracle-tol", type=_positive(float), default=1e-5)
    p.add_argument("--oracle-iter", type=_positive(int), default=100000)
    p.add_argument("--tol", type=_positive(float), default=1e-8)
    p.add_argument("--max-iter", type=_positive(int), default=20000)
    p.add_argument("--subset", type=_positive(int), default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gap-check", help="primal-dual gap and its Bregman decomposition")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--data")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--alpha", type=_positive(float), required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=_positive(float), default=1e-12)
    p.add_argument("--max-iter", type=_positive(int), default=200000)
    p.add_argument("--out", help="full JSON report")
    p.set_defaults(func=cmd_gap_check)

    p = sub.add_parser("rate-check", help="check the k^(-1/3) objective decay on a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--k0", type=_positive(int), default=10)
    p.add_argument("--k-max", type=_positive(int), default=None)
    p.add_argument("--out")
    p.add_argument("--strict", action="store_true", help="exit 3 when the check fails")
    p.set_defaults(func=cmd_rate_check)
    return ap


def _fail(exc, code):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}) + "\n")
    return code


def main(argv=None):
    out = Outputs()
    try:
        args = build_parser().parse_args(argv)
        if args.threads is None:
            args.threads = _default_threads()
        status = args.func(args, out)
    except (DimensionError, CliError, ValueError) as exc:
        out.discard()
        return _fail(exc, 2)
    except Exception as exc:  # noqa: BLE001 - every failure is reported as JSON
        out.discard()
        return _fail(exc, 1)
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
