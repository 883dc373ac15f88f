"""Iterative solvers.  Every solver returns a :class:`~gdgc.core.SolverTrace`.

The generic drivers are :func:`alternating_minimize`, :func:`gdgc_explicit`,
:func:`gdgc_surrogate` and :func:`forward_backward`.  The remaining
functions are the closed-form recursions these reduce to for particular
costs, kept separate so the reductions can be tested against each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import optimize, special

from . import _search
from .core import (ConfigError, CostFunction, DomainError, GdgcError,
                   InnerSolveFailure, MonotonicityViolation, NoConvergence,
                   NoRoot, Objective, SingularHessian, SolverTrace, ZeroMarginal,
                   ZeroMass, as_point, scale_of)
from .costs import ConvexPotential
from .geometry import c_exponential
from .transforms import SearchConfig, Surrogate, surrogate_from_ctransform

__all__ = [
    "SOLVER_KINDS", "SolverSpec", "DiscreteCoupling", "ConvexSet",
    "alternating_minimize", "gdgc_explicit", "gdgc_surrogate",
    "forward_backward", "gradient_descent", "mirror_descent",
    "natural_gradient", "newton", "log_divergence_gd", "riemannian_sphere_gd",
    "sinkhorn", "classical_sinkhorn", "pocs", "latent_em", "kl_divergence",
]

SOLVER_KINDS = (
    "alternating_min", "gdgc_explicit", "gdgc_surrogate", "forward_backward",
    "gradient_descent", "mirror_descent", "natural_gradient", "newton",
    "riemannian_sphere", "log_divergence_gd", "sinkhorn", "pocs", "latent_em",
)


@dataclass(frozen=True)
class SolverSpec:
    """Which solver to run, for how long, and with which inner tolerances.

    ``params`` holds solver constants such as ``L`` or ``alpha``.
    """

    kind: str
    horizon: int
    tol: float = 1e-10
    max_iter: int = 100
    closed_form: bool = True
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ConfigError(f"unknown solver kind {self.kind!r}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError("horizon must be an integer >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")


def _horizon(spec: Union[SolverSpec, int]) -> int:
    if isinstance(spec, SolverSpec):
        return int(spec.horizon)
    h = int(spec)
    if h != spec or h < 1:
        raise ConfigError("horizon must be an integer >= 1")
    return h


class _Recorder:
    def __init__(self, solver):
        self.solver = solver
        self.xs, self.ys, self.f, self.phi, self.gap = [], [], [], [], []

    def add(self, x, y=None, f=None, phi=None, gap=None):
        self.xs.append(None if x is None else np.array(x, float))
        self.ys.append(None if y is None else np.array(y, float))
        self.f.append(None if f is None else float(f))
        self.phi.append(None if phi is None else float(phi))
        self.gap.append(None if gap is None else float(gap))

    def trace(self, metadata=None, extras=None) -> SolverTrace:
        return SolverTrace(self.solver, tuple(self.xs), tuple(self.ys), tuple(self.f),
                           tuple(self.phi), tuple(self.gap), dict(metadata or {}),
                           dict(extras or {}))


# ---------------------------------------------------------------------------
# Discrete couplings and convex sets

@dataclass(frozen=True)
class DiscreteCoupling:
    """A nonnegative matrix read as a joint distribution on a product space."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, float))
        if m.ndim != 2:
            raise DomainError("coupling must be a matrix")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise DomainError("coupling entries must be finite and nonnegative")
        object.__setattr__(self, "matrix", m)

    @property
    def row_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    @property
    def mass(self) -> float:
        return float(self.matrix.sum())

    def check_mass(self, tol: float = 1e-12):
        if abs(self.mass - 1.0) > tol:
            raise DomainError(f"coupling has mass {self.mass!r}, expected 1")
        return self


@dataclass(frozen=True)
class ConvexSet:
    """Closed convex set with a closed-form Euclidean projection.

    ``halfspace``: ``<a, x> <= b``; ``ball``: ``||x - center|| <= r``;
    ``box``: ``lo <= x <= hi``; ``affine``: ``A x = b``.
    """

    kind: str
    data: dict

    @classmethod
    def halfspace(cls, a, b):
        a = np.asarray(a, float)
        if not np.linalg.norm(a) > 0:
            raise ConfigError("halfspace normal must be nonzero")
        return cls("halfspace", {"a": a, "b": float(b)})

    @classmethod
    def ball(cls, center, r):
        if r < 0:
            raise ConfigError("ball radius must be nonnegative")
        return cls("ball", {"center": np.asarray(center, float), "r": float(r)})

    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        if np.any(lo > hi):
            raise ConfigError("box needs lo <= hi")
        return cls("box", {"lo": lo, "hi": hi})

    @classmethod
    def affine(cls, A, b):
        A = np.atleast_2d(np.asarray(A, float))
        b = np.atleast_1d(np.asarray(b, float))
        if np.linalg.norm(A @ np.linalg.pinv(A) @ b - b) > 1e-10 * (1 + np.linalg.norm(b)):
            raise ConfigError("affine set is empty")
        return cls("affine", {"A": A, "b": b})

    def project(self, x) -> np.ndarray:
        x = as_point(x)
        d = self.data
        if self.kind == "halfspace":
            a, b = d["a"], d["b"]
            excess = a @ x - b
            return x if excess <= 0 else x - (excess / (a @ a)) * a
        if self.kind == "ball":
            v = x - d["center"]
            n = np.linalg.norm(v)
            return x if n <= d["r"] else d["center"] + (d["r"] / n) * v
        if self.kind == "box":
            return np.clip(x, d["lo"], d["hi"])
        if self.kind == "affine":
            A, b = d["A"], d["b"]
            return x - np.linalg.pinv(A) @ (A @ x - b)
        raise ConfigError(f"unknown convex set kind {self.kind!r}")

    def distance(self, x) -> float:
        x = as_point(x)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x, tol: float = 1e-12) -> bool:
        return self.distance(x) <= tol * (1.0 + np.linalg.norm(x))


# ---------------------------------------------------------------------------
# Generic drivers

def _initial_dual(s: Surrogate, x0):
    """A y0 with ``S(y0) = x0``, when the cost's c-exponential can provide one."""
    xi = np.zeros(s.cost.dim_x) if s.g is None else s.g.gradient(x0)
    try:
        return c_exponential(s.cost, x0, xi)
    except GdgcError:
        return None


def alternating_minimize(phi: Surrogate, x0, spec: Union[SolverSpec, int],
                         cfg: Optional[SearchConfig] = None, y0="auto",
                         solver_name: str = "alternating_min") -> SolverTrace:
    """Alternate ``y <- argmin_y phi(x, y)`` and ``x <- argmin_x phi(x, y)``.

    The trace starts at ``(x0, y0)``.  By default y0 is the point with
    ``S(y0) = x0`` when the cost can produce it, which is the reference the
    rate bounds are stated against; pass ``y0=None`` to leave it unset.

    Raises MonotonicityViolation if either half-step increases phi by more
    than ``1e-8`` relative.

    Examples
    --------
    >>> from gdgc.costs import quadratic_cost
    >>> h = Objective(lambda y: 0.5 * y @ y, lambda y: y, lambda y: np.eye(1))
    >>> tr = alternating_minimize(Surrogate(quadratic_cost(1.0, 1), h=h), [1.0], 3, y0=None)
    >>> [round(float(x[0]), 12) for x in tr.xs]
    [1.0, 0.5, 0.25, 0.125]
    """
    if cfg is not None and cfg != phi.cfg:
        phi = Surrogate(phi.cost, phi.g, phi.h, phi.f, cfg)
    n_steps = _horizon(spec)
    tol = spec.tol if isinstance(spec, SolverSpec) else 1e-8
    mono_tol = max(tol, 1e-8)
    x = as_point(x0, phi.cost.dim_x).copy()
    if isinstance(y0, str) and y0 == "auto":
        y0 = _initial_dual(phi, x)
    y = None if y0 is None else as_point(y0, phi.cost.dim_y).copy()
    rec = _Recorder(solver_name)

    def objective(z):
        return None if phi.f is None else phi.f(z) + (0.0 if phi.g is None else phi.g(z))

    cur = None if y is None else phi.phi(x, y)
    rec.add(x, y, objective(x), cur, 0.0)
    for n in range(n_steps):
        try:
            mid, y_new = phi.argmin_y(x, y_init=y)
            val, x_new = phi.argmin_x(y_new, x_init=x)
        except NoConvergence as exc:
            raise InnerSolveFailure(f"inner solve failed at step {n}: {exc}") from exc
        if cur is not None and mid > cur + mono_tol * scale_of(cur, mid):
            raise MonotonicityViolation(
                f"y-step raised phi at step {n}: {cur!r} -> {mid!r}")
        if val > mid + mono_tol * scale_of(val, mid):
            raise MonotonicityViolation(
                f"x-step raised phi at step {n}: {mid!r} -> {val!r}")
        x, y, cur = x_new, y_new, val
        rec.add(x, y, objective(x), val, mid - val)
    return rec.trace({"horizon": n_steps})


def _x_step(c: CostFunction, y, x_init, cfg: SearchConfig):
    # argmin_x c(x, y); closed form when the cost provides one
    if c.x_step is not None:
        return np.asarray(c.x_step(y), float)
    starts = [x_init, *cfg.sample(cfg.restarts, x_init, stream=4)]
    x, _ = _search.multistart_minimize(
        lambda z: c(z, y), lambda z: c.grad_x(z, y), lambda z: c.hess_xx(z, y),
        starts, tol=cfg.tol, max_iter=cfg.max_iter, ceiling=cfg.ceiling,
        method=cfg.method)
    return x


def gdgc_explicit(f: Objective, c: CostFunction, x0, spec: Union[SolverSpec, int],
                  cfg: Optional[SearchConfig] = None,
                  closed_form: Optional[bool] = None) -> SolverTrace:
    """Gradient descent with a general cost, in explicit form.

    Each step solves ``-grad_x c(x_n, y) = -grad f(x_n)`` for ``y_{n+1}``
    and then minimizes ``c(., y_{n+1})`` for ``x_{n+1}``.  ``ys[0]`` is the
    point with ``grad_x c(x0, y0) = 0``.  ``phi[n]`` (n >= 1) is the value of
    the tangent majorant at ``x_n``, and ``gap[n] = c(x_{n-1}, y_n) - c(x_n, y_n)``.

    >>> from gdgc.costs import quadratic_cost
    >>> f = Objective(lambda x: 0.5 * x @ x, lambda x: x, lambda x: np.eye(1))
    >>> tr = gdgc_explicit(f, quadratic_cost(1.0, 1), [1.0], 1)
    >>> float(tr.xs[1][0])
    0.0
    """
    cfg = cfg or SearchConfig()
    if closed_form is None:
        closed_form = spec.closed_form if isinstance(spec, SolverSpec) else True
    n_steps = _horizon(spec)
    x = as_point(x0, c.dim_x).copy()
    try:
        y = c_exponential(c, x, np.zeros(c.dim_x), closed_form=closed_form)
    except GdgcError:
        y = None
    rec = _Recorder("gdgc_explicit")
    fx = f(x)
    rec.add(x, y, fx, None, 0.0)
    for _ in range(n_steps):
        y_new = c_exponential(c, x, -f.gradient(x), y0=y, closed_form=closed_form)
        x_new = _x_step(c, y_new, x, cfg)
        gap = c(x, y_new) - c(x_new, y_new)
        majorant = fx - gap
        x, y = x_new, y_new
        fx = f(x)
        rec.add(x, y, fx, majorant, gap)
    return rec.trace({"horizon": n_steps, "cost": c.name, "closed_form": closed_form})


def gdgc_surrogate(f: Objective, c: CostFunction, x0, spec: Union[SolverSpec, int],
                   cfg: Optional[SearchConfig] = None) -> SolverTrace:
    """Gradient descent with a general cost through a numeric c-transform.

    Runs alternating minimization on ``c(x, y) + f^c(y)``; no derivative of
    the c-exponential is used, so it is an independent route to the same
    iterates as :func:`gdgc_explicit` when f is c-concave.
    """
    cfg = cfg or SearchConfig()
    s = surrogate_from_ctransform(f, c, cfg)
    tr = alternating_minimize(s, x0, spec, y0="auto", solver_name="gdgc_surrogate")
    return SolverTrace(tr.solver, tr.xs, tr.ys, tr.f, tr.phi, tr.gap,
                       {**tr.metadata, "cost": c.name}, tr.extras)


def _backward_step(c: CostFunction, g: Objective, y, x_init, cfg: SearchConfig):
    # argmin_x c(x, y) + g(x): damped Newton from the previous iterate first,
    # multi-start only if that fails
    def fun(z):
        return c(z, y) + g(z)

    def grad(z):
        return c.grad_x(z, y) + g.gradient(z)

    def hess(z):
        return c.hess_xx(z, y) + g.hess(z)

    base = c.x_step(y) if c.x_step is not None else x_init
    x, _, ok = _search.newton_minimize(fun, grad, hess, x_init, tol=cfg.tol,
                                       max_iter=100, ceiling=cfg.ceiling)
    if ok:
        return x
    starts = _search_starts(x_init, base, cfg)
    try:
        x, _ = _search.multistart_minimize(fun, grad, hess, starts, tol=cfg.tol,
                                           max_iter=cfg.max_iter, ceiling=cfg.ceiling,
                                           method=cfg.method)
    except NoConvergence as exc:
        raise InnerSolveFailure(f"backward step failed: {exc}") from exc
    return x


def _search_starts(x_init, base, cfg):
    pts = [np.asarray(x_init, float)]
    if base is not None and not np.array_equal(base, x_init):
        pts.append(np.asarray(base, float))
    return pts + list(cfg.sample(cfg.restarts, x_init, stream=5))


def forward_backward(f: Objective, g: Optional[Objective], c: CostFunction, x0,
                     spec: Union[SolverSpec, int], cfg: Optional[SearchConfig] = None,
                     closed_form: Optional[bool] = None) -> SolverTrace:
    """Explicit step on f followed by an implicit step on g.

    ``f[n]`` records ``F(x_n) = f(x_n) + g(x_n)``.  ``ys[0]`` satisfies
    ``-grad_x c(x0, y0) = grad g(x0)`` and ``extras["y_bar0"]`` the point with
    ``grad_x c(x0, y) = 0`` used by the rate bounds.  With ``g=None`` the
    backward step is the cost's own x-step, so the iterates coincide with
    :func:`gdgc_explicit`.
    """
    cfg = cfg or SearchConfig()
    if closed_form is None:
        closed_form = spec.closed_form if isinstance(spec, SolverSpec) else True
    n_steps = _horizon(spec)
    x = as_point(x0, c.dim_x).copy()

    def F(z):
        return f(z) + (0.0 if g is None else g(z))

    zero = np.zeros(c.dim_x)
    y_bar0 = c_exponential(c, x, zero, closed_form=closed_form)
    y = y_bar0 if g is None else c_exponential(c, x, g.gradient(x), y0=y_bar0,
                                                closed_form=closed_form)
    rec = _Recorder("forward_backward")
    rec.add(x, y, F(x), None, 0.0)
    for _ in range(n_steps):
        y_new = c_exponential(c, x, -f.gradient(x), y0=y, closed_form=closed_form)
        if g is None:
            x_new = _x_step(c, y_new, x, cfg)
        else:
            x_new = _backward_step(c, g, y_new, x, cfg)
        gap = c(x, y_new) - c(x_new, y_new)
        x, y = x_new, y_new
        rec.add(x, y, F(x), None, gap)
    return rec.trace({"horizon": n_steps, "cost": c.name},
                     {"y_bar0": y_bar0})


# ---------------------------------------------------------------------------
# Closed-form recursions

def gradient_descent(f: Objective, L: float, x0, horizon) -> SolverTrace:
    """``x_{n+1} = x_n - grad f(x_n) / L``.

    ``ys[n+1] = x_n - grad f(x_n) / L`` as for the quadratic cost, so ``ys``
    and ``xs[1:]`` coincide.
    """
    if not L > 0:
        raise ConfigError("L must be positive")
    n_steps = _horizon(horizon)
    x = as_point(x0).copy()
    rec = _Recorder("gradient_descent")
    rec.add(x, x, f(x), None, 0.0)
    for _ in range(n_steps):
        g = f.gradient(x)
        x = x - g / L
        rec.add(x, x, f(x), None, 0.5 * float(g @ g) / L)
    return rec.trace({"horizon": n_steps, "L": float(L)})


def mirror_descent(f: Objective, u: ConvexPotential, x0, horizon) -> SolverTrace:
    """``grad u(x_{n+1}) = grad u(x_n) - grad f(x_n)``.

    >>> from gdgc.costs import negative_entropy
    >>> lin = Objective(lambda x: float(x @ [1.0]), lambda x: np.ones(1))
    >>> tr = mirror_descent(lin, negative_entropy(1), [1.0], 1)
    >>> bool(np.isclose(tr.xs[1][0], np.exp(-1.0)))
    True
    """
    n_steps = _horizon(horizon)
    x = as_point(x0, u.dim).copy()
    if not u.in_domain(x):
        raise DomainError("x0 outside the domain of the mirror potential")
    rec = _Recorder("mirror_descent")
    rec.add(x, x, f(x), None, 0.0)
    for n in range(n_steps):
        x_new = u.grad_inverse(u.grad(x) - f.gradient(x))
        if not u.in_domain(x_new):
            raise DomainError(f"mirror descent left the domain at step {n}")
        gap = u(x) - u(x_new) - float(u.grad(x_new) @ (x - x_new))
        x = x_new
        rec.add(x, x, f(x), None, gap)
    return rec.trace({"horizon": n_steps, "potential": u.kind})


def _solve_spd(H, g, what):
    try:
        cond = np.linalg.cond(H)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError("ill conditioned")
        return np.linalg.solve(H, g)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(f"{what}: Hessian is singular") from exc


def natural_gradient(f: Objective, u: ConvexPotential, x0, horizon) -> SolverTrace:
    """``x_{n+1} = x_n - hess u(x_n)^{-1} grad f(x_n)``.

    ``extras["dual"]`` holds ``grad u(x_n)``, the mirror-descent view of the
    same iterates in the dual variable.
    """
    n_steps = _horizon(horizon)
    x = as_point(x0, u.dim).copy()
    if not u.in_domain(x):
        raise DomainError("x0 outside the domain of the metric potential")
    rec = _Recorder("natural_gradient")
    dual = [u.grad(x)]
    rec.add(x, x, f(x), None, 0.0)
    for n in range(n_steps):
        x_new = x - _solve_spd(u.hess(x), f.gradient(x), "natural gradient")
        if not u.in_domain(x_new):
            raise DomainError(f"natural gradient left the domain at step {n}")
        gap = u(x_new) - u(x) - float(u.grad(x) @ (x_new - x))
        x = x_new
        dual.append(u.grad(x))
        rec.add(x, x, f(x), None, gap)
    return rec.trace({"horizon": n_steps, "potential": u.kind},
                     {"dual": tuple(dual)})


def newton(f: Objective, x0, horizon) -> SolverTrace:
    """Undamped Newton iterates ``x_{n+1} = x_n - hess f(x_n)^{-1} grad f(x_n)``.

    >>> e = Objective(lambda x: float(np.exp(x[0])), np.exp, lambda x: np.exp(x).reshape(1, 1))
    >>> [float(x[0]) for x in newton(e, [0.0], 2).xs]
    [0.0, -1.0, -2.0]
    """
    n_steps = _horizon(horizon)
    x = as_point(x0).copy()
    rec = _Recorder("newton")
    fx = f(x)
    rec.add(x, x, fx, None, 0.0)
    for _ in range(n_steps):
        g = f.gradient(x)
        x_new = x - _solve_spd(f.hess(x), g, "newton")
        f_new = f(x_new)
        gap = f_new - fx - float(g @ (x_new - x))
        x, fx = x_new, f_new
        rec.add(x, x, fx, None, gap)
    return rec.trace({"horizon": n_steps})


def _log_div_multiplier(u: ConvexPotential, alpha: float, x, w):
    """Smallest positive root of ``alpha mu <(grad u)^{-1}(mu w) - x, w> - mu + 1``."""
    params = dict(u.params or ())
    if u.kind == "quadratic" and not np.any(params.get("anchor", 0.0)):
        L = float(params["L"])
        v = w / L
        A = alpha * L * float(v @ v)
        B = alpha * L * float(x @ v) + 1.0
        disc = B * B - 4.0 * A
        if B <= 0 or disc < 0:
            raise NoRoot("log-divergence multiplier equation has no positive root")
        return 2.0 / (B + np.sqrt(disc))

    def eq(mu):
        return alpha * mu * float((u.grad_inverse(mu * w) - x) @ w) - mu + 1.0

    # eq(0) = 1 > 0; walk a geometric grid until the sign changes
    lo = 0.0
    hi = 0.25
    while hi < 1e8:
        try:
            fhi = eq(hi)
        except GdgcError as exc:
            raise NoRoot(f"multiplier bracket left the potential domain at mu={hi:g}") from exc
        if fhi <= 0:
            if fhi == 0:
                return hi
            return optimize.brentq(eq, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        lo, hi = hi, hi * 1.5
    raise NoRoot("no sign change of the multiplier equation below mu=1e8")


def log_divergence_gd(f: Objective, u: ConvexPotential, alpha: float, x0,
                      horizon) -> SolverTrace:
    """Gradient descent for the log-divergence cost.

    ``grad u(x_{n+1}) = mu (grad u(x_n) - grad f(x_n))`` with the multiplier
    taken as the smallest positive root of its scalar equation, the root that
    tends to 1 as ``alpha -> 0``.  For an unanchored quadratic u the root is
    computed in closed form.  ``extras["mu"]`` lists the multipliers.
    """
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    n_steps = _horizon(horizon)
    x = as_point(x0, u.dim).copy()
    if not u.in_domain(x):
        raise DomainError("x0 outside the domain of u")
    rec = _Recorder("log_divergence_gd")
    rec.add(x, x, f(x), None, 0.0)
    mus = []
    for n in range(n_steps):
        w = u.grad(x) - f.gradient(x)
        mu = _log_div_multiplier(u, float(alpha), x, w)
        x_new = u.grad_inverse(mu * w)
        if not u.in_domain(x_new):
            raise DomainError(f"log-divergence step left the domain at step {n}")
        ell = 1.0 - alpha * float(u.grad(x_new) @ (x - x_new))
        if not ell > 0:
            raise DomainError(f"log-divergence undefined at step {n}")
        gap = u(x) - u(x_new) + np.log(ell) / alpha
        mus.append(float(mu))
        x = x_new
        rec.add(x, x, f(x), None, gap)
    return rec.trace({"horizon": n_steps, "alpha": float(alpha), "potential": u.kind},
                     {"mu": tuple(mus)})


def _sphere_exp(x, v):
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return x.copy()
    y = np.cos(nv) * x + np.sin(nv) * (v / nv)
    return y / np.linalg.norm(y)


def riemannian_sphere_gd(f: Objective, L: float, x0, horizon) -> SolverTrace:
    """``x_{n+1} = exp_{x_n}(-grad f(x_n) / L)`` on the unit sphere.

    f is given in ambient coordinates; its gradient is projected onto the
    tangent space.  ``gap[n] = |grad f(x_{n-1})|^2 / (2 L)``, the cost of the
    geodesic step.
    """
    if not L > 0:
        raise ConfigError("L must be positive")
    n_steps = _horizon(horizon)
    x = as_point(x0).copy()
    if abs(np.linalg.norm(x) - 1.0) > 1e-10:
        raise DomainError("x0 must lie on the unit sphere")
    rec = _Recorder("riemannian_sphere")
    rec.add(x, x, f(x), None, 0.0)
    for _ in range(n_steps):
        g = f.gradient(x)
        g = g - float(g @ x) * x
        x = _sphere_exp(x, -g / L)
        rec.add(x, x, f(x), None, 0.5 * float(g @ g) / L)
    return rec.trace({"horizon": n_steps, "L": float(L)})


# ---------------------------------------------------------------------------
# Discrete alternating projections

def kl_divergence(p, q) -> float:
    """``sum p log(p / q) - p + q``, the divergence between nonnegative measures.

    Equals the usual relative entropy when p and q have the same mass.
    """
    p, q = np.asarray(p, float), np.asarray(q, float)
    return float(np.sum(special.kl_div(p, q)))


def _prob_vector(v, name):
    v = np.asarray(v, float)
    if v.ndim != 1 or np.any(~np.isfinite(v)):
        raise DomainError(f"{name} must be a finite vector")
    if np.any(v <= 0):
        raise ZeroMarginal(f"{name} must be strictly positive")
    if abs(v.sum() - 1.0) > 1e-12:
        raise DomainError(f"{name} must sum to 1")
    return v


def sinkhorn(b, eps: float, mu, nu, horizon) -> SolverTrace:
    """Sinkhorn written as primal alternating KL projections.

    ``xs[n]`` is the coupling ``pi_n`` and ``ys[n]`` the row-rescaled
    ``gamma_n`` (``ys[0]`` unset); ``f[n] = KL(row marginal of pi_n | mu)``.
    ``pi_0`` is the Gibbs kernel ``exp(-b / eps) mu nu^T``, whose logarithm
    is kept in ``extras["log_gibbs"]``.  Runs in the log domain when the
    kernel underflows.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    n_steps = _horizon(horizon)
    b = np.atleast_2d(np.asarray(b, float))
    mu, nu = _prob_vector(mu, "mu"), _prob_vector(nu, "nu")
    if b.shape != (mu.size, nu.size):
        raise DomainError(f"cost matrix has shape {b.shape}, expected {(mu.size, nu.size)}")
    if not np.all(np.isfinite(b)):
        raise DomainError("cost matrix must be finite")
    log_g = -b / eps + np.log(mu)[:, None] + np.log(nu)[None, :]
    log_domain = bool(np.min(-b / eps) < np.log(1e-300))
    rec = _Recorder("sinkhorn")

    if log_domain:
        lp = log_g.copy()

        def row_kl(lp):
            lr = special.logsumexp(lp, axis=1)
            r = np.exp(lr)
            return float(np.sum(r * (lr - np.log(mu)) - r + mu))

        rec.add(np.exp(lp), None, row_kl(lp))
        for _ in range(n_steps):
            lgam = lp + (np.log(mu) - special.logsumexp(lp, axis=1))[:, None]
            lp = lgam + (np.log(nu) - special.logsumexp(lgam, axis=0))[None, :]
            rec.add(np.exp(lp), np.exp(lgam), row_kl(lp))
    else:
        p = np.exp(log_g)
        rec.add(p, None, kl_divergence(p.sum(axis=1), mu))
        for _ in range(n_steps):
            rows = p.sum(axis=1)
            if np.any(rows <= 0):
                raise ZeroMarginal("row marginal vanished")
            gam = p * (mu / rows)[:, None]
            cols = gam.sum(axis=0)
            if np.any(cols <= 0):
                raise ZeroMarginal("column marginal vanished")
            p = gam * (nu / cols)[None, :]
            rec.add(p, gam, kl_divergence(p.sum(axis=1), mu))
    return rec.trace({"horizon": n_steps, "eps": float(eps), "log_domain": log_domain},
                     {"log_gibbs": log_g, "mu": mu, "nu": nu})


def classical_sinkhorn(b, eps: float, mu, nu, horizon):
    """Matrix scaling ``diag(r) K diag(s)`` with ``K = exp(-b / eps) mu nu^T``.

    Returns the list of couplings after each column update; kept as an
    independent reference for :func:`sinkhorn`.
    """
    b = np.atleast_2d(np.asarray(b, float))
    mu, nu = np.asarray(mu, float), np.asarray(nu, float)
    K = np.exp(-b / eps) * np.outer(mu, nu)
    r = np.ones(mu.size)
    s = np.ones(nu.size)
    out = [K.copy()]
    for _ in range(_horizon(horizon)):
        r = mu / (K @ s)
        s = nu / (K.T @ r)
        out.append(r[:, None] * K * s[None, :])
    return out


def pocs(B: ConvexSet, C: ConvexSet, x0, horizon) -> SolverTrace:
    """Alternating projections ``y_{n+1} = P_C(x_n)``, ``x_{n+1} = P_B(y_{n+1})``.

    ``f[n]`` records the squared distance from ``x_n`` to C.

    >>> B = ConvexSet.halfspace([-1.0, 0.0], -1.0)
    >>> C = ConvexSet.ball([0.0, 0.0], 1.0)
    >>> tr = pocs(B, C, [2.0, 0.0], 1)
    >>> tr.xs[1].tolist(), tr.f[1]
    ([1.0, 0.0], 0.0)
    """
    n_steps = _horizon(horizon)
    x = as_point(x0).copy()
    if not B.contains(x, 1e-10):
        raise DomainError("x0 must lie in B")
    rec = _Recorder("pocs")
    rec.add(x, None, C.distance(x) ** 2)
    for _ in range(n_steps):
        y = C.project(x)
        x = B.project(y)
        rec.add(x, y, C.distance(x) ** 2)
    return rec.trace({"horizon": n_steps})


def latent_em(K, mu, theta0, horizon) -> SolverTrace:
    """EM for the mixture ``p_theta(x, z) = K[x, z] theta[z]`` over the full simplex.

    The E-step rescales ``p_theta`` so its x-marginal is mu, the M-step takes
    the z-marginal.  ``xs[n] = theta_n``, ``ys[n]`` the coupling ``pi_n`` and
    ``f[n] = KL(mu | K theta_n)``.
    """
    n_steps = _horizon(horizon)
    K = np.atleast_2d(np.asarray(K, float))
    if np.any(K < 0) or not np.allclose(K.sum(axis=0), 1.0, atol=1e-12, rtol=0):
        raise DomainError("K must have nonnegative columns summing to 1")
    mu = np.asarray(mu, float)
    theta = np.asarray(theta0, float)
    if mu.shape != (K.shape[0],) or theta.shape != (K.shape[1],):
        raise DomainError("mu and theta0 must match the kernel shape")
    if np.any(mu < 0) or abs(mu.sum() - 1) > 1e-12:
        raise DomainError("mu must be a probability vector")
    if np.any(theta <= 0) or abs(theta.sum() - 1) > 1e-12:
        raise DomainError("theta0 must be a strictly positive probability vector")

    def model(theta):
        m = K @ theta
        if np.any((m <= 0) & (mu > 0)):
            raise ZeroMass("model assigns zero mass where mu does not")
        return m

    rec = _Recorder("latent_em")
    rec.add(theta, None, kl_divergence(mu, model(theta)))
    for _ in range(n_steps):
        m = model(theta)
        joint = K * theta[None, :]
        scale = np.divide(mu, m, out=np.zeros_like(mu), where=m > 0)
        pi = joint * scale[:, None]
        theta = pi.sum(axis=0)
        rec.add(theta, pi, kl_divergence(mu, model(theta)))
    return rec.trace({"horizon": n_steps})
