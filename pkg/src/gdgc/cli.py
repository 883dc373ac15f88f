"""Command line entry point: ``python -m gdgc`` or ``gdgc``.

Exit status is 0 when every declared check passes, 1 when a check or the
solver fails, and 2 for configuration and usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments as ex
from .core import ConfigError, GdgcError
from .verify import bound_rhs

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdgc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment, a manifest or the builtin catalog")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML or JSON experiment config or manifest")
    src.add_argument("--experiment", help="name of a builtin experiment")
    src.add_argument("--all", action="store_true", help="run the whole builtin catalog")
    run.add_argument("--out", help=f"output directory (overrides ${ex.OUTPUT_ENV})")
    run.add_argument("--seed", type=int, help="override the config or manifest seed")
    run.add_argument("--workers", type=int, default=None,
                     help="experiments run concurrently for manifests")

    sub.add_parser("list", help="list builtin experiments")

    ver = sub.add_parser("verify", help="recompute a certificate from a trace.csv")
    ver.add_argument("--trace", required=True)
    ver.add_argument("--kind", required=True)
    ver.add_argument("--reference", help="comma separated reference vector; checked "
                     "against the one recorded in report.json")
    ver.add_argument("--report", help="report.json holding the bound parameters "
                     "(default: next to the trace)")
    ver.add_argument("--rtol", type=float, default=None)
    return p


def _print_result(r: ex.RunReport, out=None):
    out = out or sys.stdout
    print(f"{r.name}: {r.status}", file=out)
    for c in r.report["certificates"]:
        mark = "pass" if c.get("overall") else "FAIL"
        print(f"  certificate {c['id']}: {mark}", file=out)
    for p in r.report["properties"]:
        mark = "pass" if p.get("passed") else "FAIL"
        print(f"  property {p['id']}: {mark}", file=out)
    for e in r.report["errors"]:
        print(f"  error in {e['stage']}: {e['error']}: {e['message']}", file=out)


def _cmd_run(args) -> int:
    if args.experiment:
        cfg = ex.builtin_config(args.experiment, 0 if args.seed is None else args.seed)
        results = [ex.run_experiment(cfg, args.out)]
    elif args.all:
        seed = 0 if args.seed is None else args.seed
        cfgs = [ex.builtin_config(n, seed) for n, _, _ in ex.list_experiments()]
        results = ex.run_manifest(cfgs, args.out, args.workers or 1)
    else:
        loaded = ex.load_config(args.config)
        if isinstance(loaded, dict):
            cfgs = loaded["experiments"]
            if args.seed is not None:
                cfgs = [_reseed(c, ex.derive_seed(args.seed, c.name)) for c in cfgs]
            results = ex.run_manifest(cfgs, args.out, args.workers or loaded["workers"])
        else:
            cfg = loaded if args.seed is None else _reseed(loaded, args.seed)
            results = [ex.run_experiment(cfg, args.out)]
    for r in results:
        _print_result(r)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _reseed(cfg: ex.ExperimentConfig, seed: int) -> ex.ExperimentConfig:
    d = cfg.to_dict()
    d["seed"] = seed
    return ex.ExperimentConfig.from_dict(d)


def _cmd_list(args) -> int:
    rows = ex.list_experiments()
    width = max(len(n) for n, _, _ in rows)
    for name, topic, desc in rows:
        print(f"{name:<{width}}  [{topic}] {desc}")
    return EXIT_OK


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(" ", "").strip("[]").split(",")])
    except ValueError as exc:
        raise ConfigError(f"cannot parse reference vector {text!r}") from exc


def _cmd_verify(args) -> int:
    """Recompute a rate bound from trace.csv and the scalars in report.json."""
    cols = ex.read_trace_csv(args.trace)
    report_path = args.report or os.path.join(os.path.dirname(args.trace) or ".",
                                              "report.json")
    try:
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {report_path!r}: {exc}") from exc
    certs = [c for c in report.get("certificates", []) if c.get("kind") == args.kind]
    if not certs:
        raise ConfigError(f"report has no {args.kind} certificate")
    cert = certs[0]
    params = cert.get("params", {})
    if args.reference is not None and cert.get("reference") is not None:
        ref = _parse_vector(args.reference)
        recorded = np.asarray(cert["reference"], float).ravel()
        if recorded.shape != ref.shape or not np.allclose(recorded, ref, rtol=0, atol=1e-12):
            raise ConfigError("reference does not match the one the bound was computed for")
    rtol = cert["tol"] if args.rtol is None else args.rtol
    column = params.get("column")
    if column is None:
        raise ConfigError(f"{args.kind} certificates cannot be recomputed from trace.csv")
    vals = cols[column]
    ok_all, worst = True, -np.inf
    for n in range(len(vals)):
        if vals[n] is None:
            continue
        if args.kind == "descent":
            if n == 0 or vals[n - 1] is None:
                continue
            lhs, rhs = vals[n], vals[n - 1]
        else:
            if n == 0:
                continue
            lhs = vals[n] - params["offset"]
            rhs = bound_rhs(n, params["base"], params["c0"], params["coef"],
                            params.get("Lambda"))
        scale = max(1.0, abs(lhs), abs(rhs))
        ok = lhs <= rhs + rtol * scale
        worst = max(worst, lhs - rhs)
        if not ok:
            print(f"n={n}: {format(lhs, '.17g')} > {format(rhs, '.17g')}")
        ok_all &= ok
    print(f"{args.kind}: {'pass' if ok_all else 'FAIL'} (max lhs - rhs {worst:.3e})")
    return EXIT_OK if ok_all else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "list": _cmd_list, "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GdgcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
