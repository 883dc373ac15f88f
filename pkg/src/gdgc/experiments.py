"""Experiment configs, the builtin catalog, and the run pipeline behind the CLI.

A config is a mapping (YAML or JSON) with the keys ``name``, ``seed``,
``cost``, ``objective``, ``solver``, ``verify``, ``search`` and ``output``;
see the README for the full schema.  A manifest is a mapping with ``seed``
and a list ``experiments`` of such configs.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from . import costs as _costs
from . import solvers as _solvers
from . import verify as _verify
from .core import (CERTIFICATE_KINDS, ConfigError, GdgcError, Objective,
                   SolverTrace)
from .transforms import SearchConfig, Surrogate, surrogate_from_ctransform

__all__ = [
    "ExperimentConfig", "RunReport", "BUILTIN", "OUTPUT_ENV",
    "load_config", "list_experiments", "builtin_config", "derive_seed",
    "run_experiment", "run_manifest", "build_problem", "format_float",
    "trace_to_json", "trace_from_json", "read_trace_csv",
]

OUTPUT_ENV = "GDGC_OUTPUT_DIR"

PROPERTY_CHECKS = ("five_point", "c_concavity", "cross_convexity",
                   "cross_convexity_necessary", "cross_concavity",
                   "cross_curvature", "descent_gap", "lyapunov")


def format_float(v) -> str:
    """17 significant digits, '.' decimal; empty for missing values."""
    if v is None:
        return ""
    return format(float(v), ".17g")


def derive_seed(seed: int, name: str) -> int:
    """Per-experiment seed from a manifest seed, stable across runs and platforms."""
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


# ---------------------------------------------------------------------------
# Config

@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    solver: Optional[dict]
    cost: Optional[dict] = None
    objective: Optional[dict] = None
    verify: tuple = ()
    search: dict = field(default_factory=dict)
    output: Optional[str] = None
    description: str = ""
    topic: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a mapping")
        known = {"name", "seed", "solver", "cost", "objective", "verify", "search",
                 "output", "description", "topic"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "name" not in d:
            raise ConfigError("config needs a name")
        if "seed" not in d or not isinstance(d["seed"], int):
            raise ConfigError("config needs an integer seed")
        verify = d.get("verify") or []
        if not isinstance(verify, list):
            raise ConfigError("verify must be a list")
        cfg = cls(str(d["name"]), int(d["seed"]), d.get("solver"), d.get("cost"),
                  d.get("objective"), tuple(verify), dict(d.get("search") or {}),
                  d.get("output"), str(d.get("description", "")), str(d.get("topic", "")))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {"name": self.name, "seed": self.seed, "solver": self.solver,
                "cost": self.cost, "objective": self.objective,
                "verify": list(self.verify), "search": self.search,
                "output": self.output, "description": self.description,
                "topic": self.topic}

    def validate(self):
        if self.solver is not None:
            if not isinstance(self.solver, dict) or "kind" not in self.solver:
                raise ConfigError("solver must be a mapping with a kind")
            kind = self.solver["kind"]
            if kind not in _solvers.SOLVER_KINDS:
                raise ConfigError(f"unknown solver kind {kind!r}")
            h = self.solver.get("horizon")
            if not isinstance(h, int) or h < 1:
                raise ConfigError("solver horizon must be an integer >= 1")
        if self.cost is not None:
            fam = self.cost.get("family")
            if fam not in COSTS:
                raise ConfigError(f"unknown cost family {fam!r}")
        if self.objective is not None:
            fam = self.objective.get("family")
            if fam not in OBJECTIVES:
                raise ConfigError(f"unknown objective family {fam!r}")
        names = []
        for check in self.verify:
            if not isinstance(check, dict):
                raise ConfigError("each verify entry must be a mapping")
            if "certificate" in check:
                if check["certificate"] not in CERTIFICATE_KINDS:
                    raise ConfigError(f"unknown certificate {check['certificate']!r}")
                names.append(check.get("id", check["certificate"]))
            elif "property" in check:
                if check["property"] not in PROPERTY_CHECKS:
                    raise ConfigError(f"unknown property check {check['property']!r}")
                names.append(check.get("id", check["property"]))
            else:
                raise ConfigError("verify entries need 'certificate' or 'property'")
        if len(set(names)) != len(names):
            raise ConfigError("verify entries must be unique; give repeats an 'id'")
        SearchConfig(**_search_kwargs(self.search))


def _search_kwargs(d: dict) -> dict:
    allowed = {"restarts", "max_iter", "tol", "box", "seed", "ceiling", "method"}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown search keys: {sorted(extra)}")
    out = dict(d)
    if "box" in out and out["box"] is not None:
        out["box"] = tuple(out["box"])
    return out


def load_config(path: str):
    """Parse a YAML or JSON file into an ExperimentConfig or a manifest dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    try:
        data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path!r}: {exc}") from exc
    if isinstance(data, dict) and "experiments" in data:
        if "seed" not in data or not isinstance(data["seed"], int):
            raise ConfigError("manifest needs an integer seed")
        exps = []
        for e in data["experiments"]:
            if isinstance(e, str):
                if e not in BUILTIN:
                    raise ConfigError(f"unknown builtin experiment {e!r}")
                e = builtin_config(e, data["seed"]).to_dict()
            else:
                e = dict(e)
                e.setdefault("seed", derive_seed(data["seed"], str(e.get("name"))))
            exps.append(ExperimentConfig.from_dict(e))
        return {"seed": data["seed"], "experiments": exps,
                "workers": int(data.get("workers", 1))}
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Problem registries

def _potential(spec: dict) -> _costs.ConvexPotential:
    spec = dict(spec or {})
    kind = spec.pop("kind", None)
    try:
        if kind == "quadratic":
            return _costs.quadratic_potential(**spec)
        if kind == "negative_entropy":
            return _costs.negative_entropy(**spec)
        if kind == "log_sum_exp":
            return _costs.log_sum_exp(**spec)
        if kind == "exp_sum":
            return _costs.exp_sum(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad potential parameters: {exc}") from exc
    raise ConfigError(f"unknown potential kind {kind!r}")


def _cost_quadratic(p, rng):
    return _costs.quadratic_cost(float(p.get("L", 1.0)), int(p.get("dim", 1)))


def _cost_bregman(p, rng):
    return _costs.bregman_cost(_potential(p["potential"]))


def _cost_reverse_bregman(p, rng):
    return _costs.reverse_bregman_cost(_potential(p["potential"]))


def _cost_fenchel_young(p, rng):
    return _costs.fenchel_young_cost(_potential(p["potential"]))


def _cost_log_divergence(p, rng):
    return _costs.log_divergence_cost(_potential(p["potential"]), float(p["alpha"]))


def _cost_exponential_kernel(p, rng):
    return _costs.exponential_kernel_cost(np.asarray(p["K"], float), float(p["eps"]))


def _cost_sphere(p, rng):
    return _costs.sphere_geodesic_cost(float(p.get("L", 1.0)), int(p.get("dim", 3)))


COSTS = {
    "quadratic": _cost_quadratic,
    "bregman": _cost_bregman,
    "reverse_bregman": _cost_reverse_bregman,
    "fenchel_young": _cost_fenchel_young,
    "log_divergence": _cost_log_divergence,
    "exponential_kernel": _cost_exponential_kernel,
    "sphere": _cost_sphere,
}


@dataclass(frozen=True)
class Problem:
    """Objects an experiment needs, built from its config."""

    objective: Optional[Objective] = None
    g: Optional[Objective] = None
    minimizer: Any = None
    f_star: Optional[float] = None
    data: dict = field(default_factory=dict)


def _obj_quadratic(p, rng):
    # f(x) = 1/2 x^T Q x + b^T x, Q given or random SPD with eigenvalues in
    # [mu_min, L]
    if "Q" in p:
        Q = np.atleast_2d(np.asarray(p["Q"], float))
    else:
        d = int(p["dim"])
        A = rng.normal(size=(d, d))
        V, _ = np.linalg.qr(A)
        eig = np.linspace(float(p.get("mu_min", 0.1)), float(p.get("L", 1.0)), d)
        Q = V @ np.diag(eig) @ V.T
        Q = 0.5 * (Q + Q.T)
    b = np.asarray(p.get("b", np.zeros(Q.shape[0])), float)
    f = Objective(lambda x: 0.5 * float(x @ Q @ x) + float(b @ x), lambda x: Q @ x + b,
                  lambda x: Q, name="quadratic")
    xs = np.linalg.solve(Q, -b)
    return Problem(f, minimizer=xs, f_star=f(xs), data={"Q": Q, "b": b})


def _obj_sin(p, rng):
    a = float(p.get("scale", 1.0))
    f = Objective(lambda x: a * float(np.sin(x[0])), lambda x: a * np.cos(x),
                  lambda x: (-a * np.sin(x)).reshape(1, 1), name="sin")
    return Problem(f, minimizer=np.array([-np.pi / 2]), f_star=-a)


def _obj_entropy_linear(p, rng):
    # a * sum x log x + <s, x> on the positive orthant; minimizer exp(-s/a - 1)
    a = float(p["a"])
    s = np.asarray(p["s"], float)
    u = _costs.negative_entropy(s.size)
    f = Objective(lambda x: a * u(x) + float(s @ x), lambda x: a * u.grad(x) + s,
                  lambda x: a * u.hess(x), domain=u.in_domain, name="entropy_linear")
    xs = np.exp(-s / a - 1.0)
    return Problem(f, minimizer=xs, f_star=f(xs))


def _obj_entropy_log(p, rng):
    # a * sum (x - s log x) on the positive orthant; minimizer s
    a = float(p["a"])
    s = np.asarray(p["s"], float)
    f = Objective(lambda x: a * float(np.sum(x - s * np.log(x))),
                  lambda x: a * (1.0 - s / x), lambda x: np.diag(a * s / x ** 2),
                  domain=lambda x: bool(np.all(x > 0)), name="entropy_log")
    return Problem(f, minimizer=s.copy(), f_star=f(s))


def _obj_exp_sum(p, rng):
    # sum exp(x_i) + eps/2 ||x||^2; for eps = 0 the infimum over the box
    # [lo, inf)^d is attained at the corner lo
    d = int(p["dim"])
    eps = float(p.get("eps", 0.0))
    f = Objective(lambda x: float(np.sum(np.exp(x))) + 0.5 * eps * float(x @ x),
                  lambda x: np.exp(x) + eps * x, lambda x: np.diag(np.exp(x) + eps),
                  name="exp_sum")
    if eps > 0:
        from scipy.special import lambertw
        # e^t + eps t = 0  <=>  t = -W(1/eps)
        t = -float(np.real(lambertw(1.0 / eps)))
        xs = np.full(d, t)
        return Problem(f, minimizer=xs, f_star=f(xs))
    lo = float(p.get("box_lo", -30.0))
    xs = np.full(d, lo)
    return Problem(f, minimizer=xs, f_star=f(xs), data={"box_lo": lo})


def _obj_sphere_linear(p, rng):
    v = np.asarray(p["v"], float)
    f = Objective(lambda x: float(v @ x), lambda x: v.copy(), name="sphere_linear")
    xs = -v / np.linalg.norm(v)
    return Problem(f, minimizer=xs, f_star=-float(np.linalg.norm(v)))


def _obj_fb_quadratic(p, rng):
    # smooth part f and proximal part g, both diagonal convex quadratics
    qf, bf = np.asarray(p["qf"], float), np.asarray(p["bf"], float)
    qg, bg = np.asarray(p["qg"], float), np.asarray(p["bg"], float)
    f = Objective(lambda x: 0.5 * float(qf @ x ** 2) + float(bf @ x),
                  lambda x: qf * x + bf, lambda x: np.diag(qf), name="fb_f")
    g = Objective(lambda x: 0.5 * float(qg @ x ** 2) + float(bg @ x),
                  lambda x: qg * x + bg, lambda x: np.diag(qg), name="fb_g")
    xs = -(bf + bg) / (qf + qg)
    return Problem(f, g=g, minimizer=xs, f_star=f(xs) + g(xs))


def _obj_entropy_fb(p, rng):
    # f = <s, x> smooth, g = a * negative entropy; minimizer exp(-s/a - 1)
    a = float(p["a"])
    s = np.asarray(p["s"], float)
    u = _costs.negative_entropy(s.size)
    f = Objective(lambda x: float(s @ x), lambda x: s.copy(), lambda x: np.zeros((s.size, s.size)),
                  domain=u.in_domain, name="linear")
    g = Objective(lambda x: a * u(x), lambda x: a * u.grad(x), lambda x: a * u.hess(x),
                  domain=u.in_domain, name="entropy")
    xs = np.exp(-s / a - 1.0)
    return Problem(f, g=g, minimizer=xs, f_star=f(xs) + g(xs))


def _obj_am_quadratic(p, rng):
    # phi(x, y) = L/2 ||x - y||^2 + w/2 ||y||^2, minimized at the origin
    d = int(p.get("dim", 1))
    w = float(p.get("weight", 1.0))
    h = Objective(lambda y: 0.5 * w * float(y @ y), lambda y: w * y,
                  lambda y: w * np.eye(d), name="h")
    return Problem(None, minimizer=np.zeros(d), f_star=0.0, data={"h": h})


def _obj_sinkhorn(p, rng):
    n, m = int(p["n"]), int(p.get("m", p["n"]))
    mu = rng.random(n) + 0.1
    nu = rng.random(m) + 0.1
    mu, nu = mu / mu.sum(), nu / nu.sum()
    b = rng.random((n, m)) * float(p.get("cost_scale", 1.0))
    return Problem(None, data={"b": b, "mu": mu, "nu": nu, "eps": float(p["eps"])})


def _obj_pocs(p, rng):
    sets = {}
    for key in ("B", "C"):
        spec = dict(p[key])
        kind = spec.pop("kind")
        if kind not in ("halfspace", "ball", "box", "affine"):
            raise ConfigError(f"unknown convex set kind {kind!r}")
        sets[key] = getattr(_solvers.ConvexSet, kind)(**spec)
    return Problem(None, minimizer=np.asarray(p["reference"], float), data=sets)


def _obj_latent_em(p, rng):
    nx, nz = int(p["nx"]), int(p["nz"])
    K = rng.random((nx, nz)) + 0.05
    K /= K.sum(axis=0)
    mu = rng.random(nx) + 0.05
    mu /= mu.sum()
    return Problem(None, data={"K": K, "mu": mu, "theta0": np.full(nz, 1.0 / nz)})


OBJECTIVES = {
    "quadratic": _obj_quadratic,
    "sin": _obj_sin,
    "entropy_linear": _obj_entropy_linear,
    "entropy_log": _obj_entropy_log,
    "exp_sum": _obj_exp_sum,
    "sphere_linear": _obj_sphere_linear,
    "fb_quadratic": _obj_fb_quadratic,
    "entropy_fb": _obj_entropy_fb,
    "am_quadratic": _obj_am_quadratic,
    "sinkhorn": _obj_sinkhorn,
    "pocs": _obj_pocs,
    "latent_em": _obj_latent_em,
}


def build_problem(cfg: ExperimentConfig):
    """``(cost, problem, search_config)`` for an experiment."""
    rng = np.random.Generator(np.random.Philox(key=[cfg.seed, 0]))
    cost = None
    if cfg.cost is not None:
        try:
            cost = COSTS[cfg.cost["family"]](dict(cfg.cost.get("params") or {}), rng)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad cost parameters: {exc!r}") from exc
    problem = Problem()
    if cfg.objective is not None:
        try:
            problem = OBJECTIVES[cfg.objective["family"]](
                dict(cfg.objective.get("params") or {}), rng)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad objective parameters: {exc!r}") from exc
    search = SearchConfig(**{"seed": cfg.seed, **_search_kwargs(cfg.search)})
    return cost, problem, search


# ---------------------------------------------------------------------------
# Running

def _x0(solver: dict, problem: Problem, dim: Optional[int]):
    if "x0" in solver:
        return np.asarray(solver["x0"], float)
    if dim is None:
        raise ConfigError("solver needs x0")
    return np.ones(dim)


def _run_solver(cfg: ExperimentConfig, cost, problem: Problem, search: SearchConfig):
    s = dict(cfg.solver)
    kind, horizon = s["kind"], int(s["horizon"])
    f = problem.objective
    dim = None if cost is None else cost.dim_x

    def need_cost():
        if cost is None:
            raise ConfigError(f"solver {kind} needs a cost")
        return cost

    if kind == "gdgc_explicit":
        return _solvers.gdgc_explicit(f, need_cost(), _x0(s, problem, dim), horizon, search)
    if kind == "gdgc_surrogate":
        return _solvers.gdgc_surrogate(f, need_cost(), _x0(s, problem, dim), horizon, search)
    if kind == "forward_backward":
        return _solvers.forward_backward(f, problem.g, need_cost(), _x0(s, problem, dim),
                                         horizon, search)
    if kind == "alternating_min":
        phi = _surrogate(cfg, need_cost(), problem, search)
        return _solvers.alternating_minimize(phi, _x0(s, problem, dim), horizon, search)
    if kind == "gradient_descent":
        return _solvers.gradient_descent(f, float(s["L"]), _x0(s, problem, dim), horizon)
    if kind == "mirror_descent":
        return _solvers.mirror_descent(f, _potential(s["potential"]),
                                       _x0(s, problem, dim), horizon)
    if kind == "natural_gradient":
        return _solvers.natural_gradient(f, _potential(s["potential"]),
                                         _x0(s, problem, dim), horizon)
    if kind == "newton":
        return _solvers.newton(f, _x0(s, problem, dim), horizon)
    if kind == "log_divergence_gd":
        return _solvers.log_divergence_gd(f, _potential(s["potential"]), float(s["alpha"]),
                                          _x0(s, problem, dim), horizon)
    if kind == "riemannian_sphere":
        return _solvers.riemannian_sphere_gd(f, float(s["L"]), _x0(s, problem, dim), horizon)
    if kind == "sinkhorn":
        d = problem.data
        return _solvers.sinkhorn(d["b"], d["eps"], d["mu"], d["nu"], horizon)
    if kind == "pocs":
        d = problem.data
        return _solvers.pocs(d["B"], d["C"], _x0(s, problem, None), horizon)
    if kind == "latent_em":
        d = problem.data
        return _solvers.latent_em(d["K"], d["mu"], d["theta0"], horizon)
    raise ConfigError(f"solver {kind} cannot be run from a config")  # pragma: no cover


def _surrogate(cfg, cost, problem: Problem, search) -> Surrogate:
    if "h" in problem.data:
        return Surrogate(cost, h=problem.data["h"], cfg=search)
    if problem.objective is None:
        raise ConfigError("surrogate needs an objective")
    return surrogate_from_ctransform(problem.objective, cost, search)


def _reference(check: dict, problem: Problem, trace: Optional[SolverTrace]):
    ref = check.get("reference", "minimizer")
    if isinstance(ref, str):
        if ref == "minimizer":
            if problem.minimizer is None:
                raise ConfigError("problem has no known minimizer; give a reference vector")
            return np.asarray(problem.minimizer, float)
        if ref == "last":
            return np.asarray(trace.xs[-1], float)
        if ref == "converged":
            return None
        raise ConfigError(f"unknown reference {ref!r}")
    return np.asarray(ref, float)


def _certificate(check, cfg, cost, problem, search, trace):
    kind = check["certificate"]
    if trace is None:
        raise ConfigError(f"certificate {kind} needs a solver trace")
    params = {k: v for k, v in check.items()
              if k in ("lambda", "mu") and isinstance(v, (int, float))}
    f = problem.objective
    needs_ref = kind not in ("descent", "newton_sublinear", "newton_linear")
    ref = _reference(check, problem, trace) if needs_ref else None
    if kind.startswith("gdgc_"):
        params.update(cost=cost or _implied_cost(cfg), f=f)
    elif kind.startswith("fb_"):
        g = problem.g
        params.update(cost=cost, F=(lambda z: f(z) + (0.0 if g is None else g(z))))
    elif kind.startswith("ngd_"):
        params.update(u=_potential(cfg.solver["potential"]) if "potential" in cfg.solver
                      else _costs.potential_from_objective(f, len(trace.xs[0])), f=f)
    elif kind.startswith("newton_"):
        params.update(f_star=problem.f_star)
    elif kind.startswith("am_") or kind == "lyapunov":
        phi = _surrogate(cfg, cost, problem, search)
        params.update(surrogate=phi)
        ref = (ref, phi.argmin_y(ref)[1])
    elif kind == "sinkhorn_sublinear":
        d = problem.data
        if ref is None:
            ref = _solvers.sinkhorn(d["b"], d["eps"], d["mu"], d["nu"],
                                    int(check.get("converge_steps", 3000))).xs[-1]
    return _verify.rate_certificate(trace, kind, ref, params,
                                    rtol=float(check.get("rtol", 1e-9)))


def _implied_cost(cfg):
    s = cfg.solver
    if s["kind"] == "gradient_descent":
        return _costs.quadratic_cost(float(s["L"]), len(s["x0"]))
    if s["kind"] == "mirror_descent":
        return _costs.bregman_cost(_potential(s["potential"]))
    if s["kind"] == "natural_gradient":
        return _costs.reverse_bregman_cost(_potential(s["potential"]))
    raise ConfigError("certificate needs a cost")


def _property(check, cfg, cost, problem, search, trace):
    name = check["property"]
    samples = int(check.get("samples", 50))
    lam = float(check.get("lambda", 0.0))
    box = check.get("box")
    pcfg = search if box is None else SearchConfig(
        restarts=search.restarts, max_iter=search.max_iter, tol=search.tol,
        box=tuple(box), seed=search.seed, ceiling=search.ceiling, method=search.method)
    f = problem.objective
    if name == "five_point":
        phi = _surrogate(cfg, cost, problem, pcfg)
        return _verify.check_five_point(phi, lam, samples, pcfg,
                                        stop_after=check.get("stop_after"))
    if name == "c_concavity":
        return _verify.check_c_concavity(f, cost, samples, pcfg)
    if name == "cross_convexity":
        return _verify.check_cross_convexity(f, cost, lam, samples, pcfg,
                                             mode=check.get("mode", "direct"))
    if name == "cross_convexity_necessary":
        return _verify.check_cross_convexity_necessary(f, cost, lam, samples, pcfg)
    if name == "cross_concavity":
        return _verify.check_cross_concavity(problem.g, cost, lam, samples, pcfg,
                                             mode=check.get("mode", "direct"))
    if name == "cross_curvature":
        return _verify.check_cross_curvature(cost, samples, pcfg,
                                             tol=float(check.get("tol", 1e-6)))
    if name == "descent_gap":
        if trace is None:
            raise ConfigError("descent_gap needs a solver trace")
        c = cost or _implied_cost(cfg)
        return _verify.check_descent_gap(trace, f, c)
    if name == "lyapunov":
        phi = _surrogate(cfg, cost, problem, search)
        x = np.asarray(problem.minimizer, float)
        return _verify.lyapunov_check(trace, phi, (x, phi.argmin_y(x)[1]))
    raise ConfigError(f"unknown property {name!r}")  # pragma: no cover


@dataclass(frozen=True)
class RunReport:
    """Result of one experiment.  ``report`` is what report.json holds."""

    name: str
    status: str
    exit_code: int
    report: dict
    files: dict
    timings: dict

    @property
    def passed(self) -> bool:
        return self.exit_code == 0


def _encode(v):
    if isinstance(v, np.ndarray):
        return {"__array__": list(v.shape), "data": [float(t) for t in v.ravel()]}
    if isinstance(v, (list, tuple)):
        return [_encode(t) for t in v]
    if isinstance(v, dict):
        return {str(k): _encode(t) for k, t in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _decode(v):
    if isinstance(v, dict):
        if "__array__" in v:
            return np.array(v["data"], float).reshape(v["__array__"])
        return {k: _decode(t) for k, t in v.items()}
    if isinstance(v, list):
        return [_decode(t) for t in v]
    return v


def trace_to_json(trace: SolverTrace) -> str:
    """Lossless JSON encoding of a trace; floats are written in round-trip form."""
    return _dump({"solver": trace.solver, "xs": _encode(list(trace.xs)),
                  "ys": _encode(list(trace.ys)), "f": list(trace.f),
                  "phi": list(trace.phi), "gap": list(trace.gap),
                  "metadata": _encode(trace.metadata), "extras": _encode(trace.extras)})


def trace_from_json(text: str) -> SolverTrace:
    d = json.loads(text)
    return SolverTrace(d["solver"], tuple(_decode(d["xs"])), tuple(_decode(d["ys"])),
                       tuple(d["f"]), tuple(d["phi"]), tuple(d["gap"]),
                       _decode(d["metadata"]), _decode(d["extras"]))


def read_trace_csv(path: str) -> dict:
    """Columns of a trace.csv as lists; empty cells become None."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path} has no rows")
    cols = {k: [] for k in rows[0]}
    for r in rows:
        for k, v in r.items():
            cols[k].append(int(v) if k == "n" else (float(v) if v != "" else None))
    return cols


def _trace_csv(trace: Optional[SolverTrace], cert) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "f", "phi", "gap", "bound_lhs", "bound_rhs"])
    if trace is not None:
        bounds = {} if cert is None else {n: (l, r) for n, l, r, _ in cert.per_n}
        for n in range(len(trace)):
            l, r = bounds.get(n, (None, None))
            w.writerow([n, format_float(trace.f[n]), format_float(trace.phi[n]),
                        format_float(trace.gap[n]), format_float(l), format_float(r)])
    return buf.getvalue()


def _iterates_csv(trace: Optional[SolverTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if trace is None:
        w.writerow(["n"])
        return buf.getvalue()
    dx = np.size(trace.xs[0])
    ys = [y for y in trace.ys if y is not None]
    dy = np.size(ys[0]) if ys else 0
    w.writerow(["n"] + [f"x{i}" for i in range(dx)] + [f"y{j}" for j in range(dy)])
    for n in range(len(trace)):
        x = np.ravel(trace.xs[n])
        y = trace.ys[n]
        yv = [""] * dy if y is None else [format_float(v) for v in np.ravel(y)]
        w.writerow([n] + [format_float(v) for v in x] + yv)
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _resolve_out(cfg: ExperimentConfig, out: Optional[str]) -> str:
    # precedence: explicit argument, then environment, then the config
    base = out or os.environ.get(OUTPUT_ENV) or cfg.output or "gdgc-out"
    return base


def run_experiment(cfg: ExperimentConfig, out: Optional[str] = None,
                   nested: bool = False) -> RunReport:
    """Run the solver and declared checks of `cfg` and write its output files.

    Files go to ``<out>/<name>/`` when `nested` (manifest runs), else to
    `<out>` directly.  Solver and check errors are recorded in the report and
    give exit code 1; they are not raised.
    """
    base = _resolve_out(cfg, out)
    out_dir = os.path.join(base, cfg.name) if nested else base
    os.makedirs(out_dir, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    cost, problem, search = build_problem(cfg)
    trace, errors = None, []
    if cfg.solver is not None:
        try:
            trace = _run_solver(cfg, cost, problem, search)
        except GdgcError as exc:
            if isinstance(exc, ConfigError):
                raise
            errors.append({"stage": "solver", "error": type(exc).__name__,
                           "message": str(exc)})
    timings["solver"] = time.perf_counter() - t0

    certificates, properties = [], []
    first_cert = None
    for check in cfg.verify:
        t1 = time.perf_counter()
        cid = check.get("id", check.get("certificate", check.get("property")))
        if trace is None and cfg.solver is not None:
            # the solver failed and is already reported; checks on it cannot run
            (certificates if "certificate" in check else properties).append(
                {"id": cid, "skipped": "solver failed", "passed": False, "overall": False})
            continue
        try:
            if "certificate" in check:
                cert = _certificate(check, cfg, cost, problem, search, trace)
                first_cert = first_cert or cert
                certificates.append({"id": cid, **_verify.certificate_to_dict(cert)})
            else:
                rep = _property(check, cfg, cost, problem, search, trace)
                properties.append({"id": cid, **rep.to_dict()})
        except ConfigError:
            raise
        except GdgcError as exc:
            entry = {"id": cid, "error": type(exc).__name__, "message": str(exc)}
            (certificates if "certificate" in check else properties).append(
                {**entry, "passed": False, "overall": False})
        timings[cid] = time.perf_counter() - t1

    ok = (not errors and all(c.get("overall", False) for c in certificates)
          and all(p.get("passed", False) for p in properties))
    files = {"trace": "trace.csv", "iterates": "iterates.csv", "report": "report.json",
             "config": "config.json"}
    if trace is not None:
        files["trace_json"] = "trace.json"
        with open(os.path.join(out_dir, "trace.json"), "w", encoding="utf-8") as fh:
            fh.write(trace_to_json(trace))
    summary = None
    if trace is not None:
        last = trace.f[-1] if trace.f[-1] is not None else trace.phi[-1]
        summary = {"solver": trace.solver, "horizon": trace.horizon,
                   "final_value": last}
    report = {"name": cfg.name, "seed": cfg.seed, "topic": cfg.topic,
              "status": "pass" if ok else "fail", "config": cfg.to_dict(),
              "trace": summary, "certificates": certificates,
              "properties": properties, "errors": errors, "files": files}
    with open(os.path.join(out_dir, "trace.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(_trace_csv(trace, first_cert))
    with open(os.path.join(out_dir, "iterates.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(_iterates_csv(trace))
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(_dump(report))
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(_dump(cfg.to_dict()))
    timings["total"] = time.perf_counter() - t0
    # wall-clock times vary run to run, so they live outside report.json
    with open(os.path.join(out_dir, "timings.json"), "w", encoding="utf-8") as fh:
        fh.write(_dump(timings))
    return RunReport(cfg.name, report["status"], 0 if ok else 1, report,
                     {k: os.path.join(out_dir, v) for k, v in files.items()}, timings)


def run_manifest(configs, out: Optional[str] = None, workers: int = 1):
    """Run several experiments, one worker each, in isolated subdirectories.

    Results come back in manifest order regardless of completion order.
    """
    configs = list(configs)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError("experiment names in a manifest must be unique")
    if workers <= 1:
        return [run_experiment(c, out, nested=True) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_experiment(c, out, nested=True), configs))


# ---------------------------------------------------------------------------
# Builtin catalog

_ENT = {"kind": "negative_entropy", "dim": 2}

BUILTIN = {
    "am-quadratic": {
        "topic": "alternating minimization",
        "description": "alternating minimization of L/2|x-y|^2 + 1/2|y|^2; sublinear bound and Lyapunov decrease",
        "cost": {"family": "quadratic", "params": {"L": 1.0, "dim": 2}},
        "objective": {"family": "am_quadratic", "params": {"dim": 2, "weight": 1.0}},
        "solver": {"kind": "alternating_min", "horizon": 40, "x0": [1.0, -2.0]},
        "verify": [{"certificate": "am_sublinear"}, {"certificate": "lyapunov"},
                   {"certificate": "descent"}],
    },
    "gd-quadratic": {
        "topic": "gradient descent",
        "description": "vanilla gradient descent as gradient descent with the quadratic cost",
        "cost": {"family": "quadratic", "params": {"L": 1.0, "dim": 3}},
        "objective": {"family": "quadratic", "params": {"dim": 3, "L": 1.0, "mu_min": 0.05,
                                                        "b": [1.0, -0.5, 0.25]}},
        "solver": {"kind": "gdgc_explicit", "horizon": 100, "x0": [2.0, -1.0, 3.0]},
        "verify": [{"certificate": "gdgc_sublinear"},
                   {"certificate": "gdgc_linear", "lambda": 0.05},
                   {"property": "descent_gap"}],
    },
    "mirror-descent-entropy": {
        "topic": "mirror descent",
        "description": "mirror descent with negative entropy on a relatively smooth, relatively strongly convex f",
        "cost": {"family": "bregman", "params": {"potential": _ENT}},
        "objective": {"family": "entropy_linear", "params": {"a": 0.6, "s": [0.5, -0.3]}},
        "solver": {"kind": "gdgc_explicit", "horizon": 100, "x0": [1.0, 2.0]},
        "search": {"box": [0.05, 3.0]},
        "verify": [{"certificate": "gdgc_sublinear"},
                   {"certificate": "gdgc_linear", "lambda": 0.6},
                   {"property": "c_concavity", "samples": 100},
                   {"property": "cross_convexity", "lambda": 0.6, "samples": 100},
                   {"property": "descent_gap"}],
    },
    "natural-gradient-entropy": {
        "topic": "natural gradient descent",
        "description": "natural gradient descent with the entropy Hessian metric",
        "solver": {"kind": "natural_gradient", "horizon": 60, "x0": [0.3, 2.5],
                   "potential": _ENT},
        "objective": {"family": "entropy_log", "params": {"a": 0.5, "s": [1.0, 1.5]}},
        "verify": [{"certificate": "ngd_sublinear"},
                   {"certificate": "ngd_linear", "lambda": 0.5},
                   {"certificate": "descent"}],
    },
    "newton-expsum": {
        "topic": "Newton's method",
        "description": "undamped Newton on sum exp(x_i); infimum taken over the configured box",
        "objective": {"family": "exp_sum", "params": {"dim": 3, "box_lo": -120.0}},
        "solver": {"kind": "newton", "horizon": 100, "x0": [2.0, -1.5, 0.5]},
        "verify": [{"certificate": "newton_sublinear"}, {"certificate": "descent"}],
    },
    "newton-expsum-coercive": {
        "topic": "Newton's method",
        "description": "undamped Newton on sum exp(x_i) + eps/2 |x|^2",
        "objective": {"family": "exp_sum", "params": {"dim": 3, "eps": 0.1}},
        "solver": {"kind": "newton", "horizon": 100, "x0": [2.0, -1.5, 0.5]},
        "verify": [{"certificate": "newton_sublinear"}, {"certificate": "descent"}],
    },
    "riemannian-sphere": {
        "topic": "Riemannian gradient descent",
        "description": "Riemannian gradient descent of a linear function on the 2-sphere",
        "cost": {"family": "sphere", "params": {"L": 1.0, "dim": 3}},
        "objective": {"family": "sphere_linear", "params": {"v": [0.6, 0.0, 0.0]}},
        "solver": {"kind": "riemannian_sphere", "horizon": 60, "L": 1.0,
                   "x0": [0.0, 1.0, 0.0]},
        "verify": [{"certificate": "descent"}, {"property": "descent_gap"}],
    },
    "pocs-halfspace-ball": {
        "topic": "projection onto convex sets",
        "description": "alternating projections between a halfspace and a ball in R^5",
        "objective": {"family": "pocs", "params": {
            "B": {"kind": "halfspace", "a": [-1.0, 0.0, 0.0, 0.0, 0.0], "b": -0.5},
            "C": {"kind": "ball", "center": [0.0, 0.0, 0.0, 0.0, 0.0], "r": 1.0},
            "reference": [0.75, 0.1, 0.0, -0.2, 0.0]}},
        "solver": {"kind": "pocs", "horizon": 200, "x0": [3.0, 2.0, -1.0, 0.5, 1.0]},
        "verify": [{"certificate": "pocs_sublinear"}, {"certificate": "descent"}],
    },
    "bregman-prox": {
        "topic": "Bregman alternating minimization",
        "description": "forward-backward with an entropy Bregman cost: linear f, entropic g",
        "cost": {"family": "bregman", "params": {"potential": _ENT}},
        "objective": {"family": "entropy_fb", "params": {"a": 0.5, "s": [0.4, -0.2]}},
        "solver": {"kind": "forward_backward", "horizon": 60, "x0": [1.5, 0.5]},
        "search": {"box": [0.05, 3.0]},
        "verify": [{"certificate": "fb_sublinear"},
                   {"certificate": "fb_linear", "lambda": 0.0, "mu": 0.5},
                   {"certificate": "descent"}],
    },
    "sinkhorn-20x20": {
        "topic": "Sinkhorn",
        "description": "Sinkhorn as primal alternating KL projections on a random 20x20 problem",
        "objective": {"family": "sinkhorn", "params": {"n": 20, "eps": 0.5, "cost_scale": 2.0}},
        "solver": {"kind": "sinkhorn", "horizon": 500},
        "verify": [{"certificate": "sinkhorn_sublinear", "reference": "converged"},
                   {"certificate": "descent"}],
    },
    "latent-em": {
        "topic": "expectation-maximization",
        "description": "EM for a latent mixture over the full simplex",
        "objective": {"family": "latent_em", "params": {"nx": 5, "nz": 3}},
        "solver": {"kind": "latent_em", "horizon": 100},
        "verify": [{"certificate": "descent"}],
    },
    "forward-backward-quadratic": {
        "topic": "forward-backward splitting",
        "description": "Euclidean forward-backward on diagonal convex quadratics",
        "cost": {"family": "quadratic", "params": {"L": 2.0, "dim": 2}},
        "objective": {"family": "fb_quadratic", "params": {
            "qf": [2.0, 1.0], "bf": [1.0, -1.0], "qg": [0.5, 1.5], "bg": [0.0, 0.5]}},
        "solver": {"kind": "forward_backward", "horizon": 200, "x0": [3.0, -2.0]},
        "verify": [{"certificate": "fb_sublinear"},
                   {"certificate": "fb_linear", "lambda": 0.25, "mu": 0.25},
                   {"certificate": "descent"}],
    },
    "log-divergence-gd": {
        "topic": "log-divergence cost",
        "description": "gradient descent with the log-divergence cost of a quadratic potential",
        "objective": {"family": "quadratic", "params": {"Q": [[0.8, 0.1], [0.1, 0.5]],
                                                        "b": [0.3, -0.2]}},
        "solver": {"kind": "log_divergence_gd", "horizon": 50, "alpha": 0.2,
                   "potential": {"kind": "quadratic", "L": 1.0, "dim": 2},
                   "x0": [0.8, -0.5]},
        "verify": [{"certificate": "descent"}],
    },
    "surrogate-sin": {
        "topic": "gradient descent with a general cost",
        "description": "surrogate route through a numeric c-transform on f = sin",
        "cost": {"family": "quadratic", "params": {"L": 1.0, "dim": 1}},
        "objective": {"family": "sin", "params": {"scale": 1.0}},
        "solver": {"kind": "gdgc_surrogate", "horizon": 6, "x0": [2.0]},
        "search": {"restarts": 1},
        "verify": [{"certificate": "descent"}, {"property": "descent_gap"}],
    },
    "properties-bregman": {
        "topic": "five-point property",
        "description": "c-concavity, cross-convexity and the five-point property for an entropy Bregman cost",
        "cost": {"family": "bregman", "params": {"potential": _ENT}},
        "objective": {"family": "entropy_linear", "params": {"a": 0.6, "s": [0.5, -0.3]}},
        "search": {"box": [0.05, 3.0], "restarts": 1},
        "solver": None,
        "verify": [{"property": "c_concavity", "samples": 100},
                   {"property": "cross_convexity", "samples": 100},
                   {"property": "cross_convexity", "id": "cross_convexity_semilocal",
                    "mode": "semilocal", "samples": 20},
                   {"property": "cross_convexity_necessary", "samples": 100},
                   {"property": "five_point", "samples": 5}],
    },
    "properties-curvature": {
        "topic": "cross-curvature",
        "description": "cross-curvature sign of the exponential-kernel cost",
        "cost": {"family": "exponential_kernel", "params": {
            "K": [[1.0, 0.3], [0.2, 1.0]], "eps": 1.0}},
        "search": {"box": [-1.0, 1.0]},
        "solver": None,
        "verify": [{"property": "cross_curvature", "samples": 100, "tol": 1e-5}],
    },
}


def list_experiments():
    """``[(name, topic, description)]`` for every builtin experiment, sorted by name."""
    return [(k, BUILTIN[k]["topic"], BUILTIN[k]["description"]) for k in sorted(BUILTIN)]


def builtin_config(name: str, seed: int = 0) -> ExperimentConfig:
    if name not in BUILTIN:
        raise ConfigError(f"unknown builtin experiment {name!r}")
    d = copy.deepcopy(BUILTIN[name])
    d["name"] = name
    d["seed"] = derive_seed(seed, name)
    d.setdefault("search", {})
    return ExperimentConfig.from_dict(d)
