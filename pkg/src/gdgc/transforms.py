r"""c-transforms, surrogates and marginal functions.

A surrogate is a function :math:`\phi(x, y) = c(x, y) + g(x) + h(y)` that
alternating minimization works on.  Built from an objective f through its
c-transform (``h = f^c``, ``g = 0``) it majorizes f, and its marginal
:math:`F(x) = \inf_y \phi(x, y)` recovers f when f is c-concave.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _search
from .core import (ConfigError, CostFunction, DomainError,
                   Objective, Unbounded, as_point, fd_gradient)

__all__ = [
    "SearchConfig", "Surrogate", "CTransform", "EnvelopeReport",
    "c_transform", "surrogate_from_ctransform", "marginal_F", "check_envelope",
]


@dataclass(frozen=True)
class SearchConfig:
    """Settings for the multi-start inner searches.

    ``box`` is a pair ``(lo, hi)`` of scalars or per-coordinate arrays; when
    omitted, restarts are drawn in ``anchor +- 2 (1 + |anchor|)`` around the
    point the search is centred on.
    """

    restarts: int = 8
    max_iter: int = 100
    tol: float = 1e-10
    box: Optional[tuple] = None
    seed: int = 0
    ceiling: float = 1e12
    method: str = "newton"

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.method not in ("newton", "bfgs"):
            raise ConfigError(f"unknown search method {self.method!r}")

    def rng(self, stream: int = 0) -> np.random.Generator:
        # counter-based generator; each purpose gets its own key
        return np.random.Generator(np.random.Philox(key=[self.seed, stream]))

    def sample(self, n: int, anchor, stream: int = 0) -> np.ndarray:
        anchor = np.asarray(anchor, float)
        r = self.rng(stream)
        if self.box is None:
            half = 2.0 * (1.0 + np.abs(anchor))
            return anchor + r.uniform(-1.0, 1.0, size=(n, anchor.size)) * half
        lo, hi = self.box
        lo = np.broadcast_to(np.asarray(lo, float), anchor.shape)
        hi = np.broadcast_to(np.asarray(hi, float), anchor.shape)
        return lo + r.uniform(size=(n, anchor.size)) * (hi - lo)


def _dedupe(points):
    out = []
    for p in points:
        if p is None:
            continue
        p = np.asarray(p, float)
        if not any(np.array_equal(p, q) for q in out):
            out.append(p)
    return out


def c_transform(f: Objective, c: CostFunction, y, cfg: SearchConfig = SearchConfig(),
                x_init=None):
    """``f^c(y) = sup_x f(x) - c(x, y)`` by multi-start Newton.

    Returns ``(value, argmax)``.  Raises Unbounded if the supremum exceeds
    ``cfg.ceiling``.

    Examples
    --------
    >>> from gdgc.costs import quadratic_cost
    >>> zero = Objective(lambda x: 0.0, lambda x: 0 * x, lambda x: np.zeros((1, 1)))
    >>> v, x = c_transform(zero, quadratic_cost(1.0, 1), [2.0])
    >>> round(v, 12), float(x[0])
    (0.0, 2.0)
    """
    y = as_point(y, c.dim_y, "y")

    def fun(x):
        if not f.in_domain(x):
            raise DomainError("outside dom f")
        return c(x, y) - f(x)

    def grad(x):
        return c.grad_x(x, y) - f.gradient(x)

    def hess(x):
        return c.hess_xx(x, y) - f.hess(x)

    base = c.x_step(y) if c.x_step is not None else (y if c.dim_x == c.dim_y else None)
    anchor = base if base is not None else np.zeros(c.dim_x)
    starts = _dedupe([x_init, base, *cfg.sample(cfg.restarts, anchor, stream=1)])
    x, v = _search.multistart_minimize(fun, grad, hess, starts, tol=cfg.tol,
                                       max_iter=cfg.max_iter, ceiling=cfg.ceiling,
                                       method=cfg.method)
    if -v > cfg.ceiling:
        raise Unbounded(f"c-transform exceeds {cfg.ceiling:g}")
    return -v, x


class CTransform:
    """``f^c`` packaged as an objective in y.

    The gradient comes from the envelope identity ``grad f^c(y) =
    -grad_y c(x*, y)`` and the Hessian from implicit differentiation of the
    maximizer.  Recent solves are memoized and the last maximizer is used as
    a warm start.
    """

    def __init__(self, f: Objective, c: CostFunction, cfg: SearchConfig, memo: int = 16):
        self.f, self.c, self.cfg = f, c, cfg
        self._memo = OrderedDict()
        self._size = memo
        self._warm = None

    def solve(self, y):
        y = as_point(y, self.c.dim_y)
        key = y.tobytes()
        if key in self._memo:
            return self._memo[key]
        out = c_transform(self.f, self.c, y, self.cfg, x_init=self._warm)
        self._warm = out[1]
        self._memo[key] = out
        if len(self._memo) > self._size:
            self._memo.popitem(last=False)
        return out

    def value(self, y):
        return self.solve(y)[0]

    def grad(self, y):
        _, x = self.solve(y)
        return -self.c.grad_y(x, y)

    def hess(self, y):
        _, x = self.solve(y)
        M = self.c.hess_xy(x, y)
        A = self.f.hess(x) - self.c.hess_xx(x, y)
        H = -self.c.hess_yy(x, y) - M.T @ np.linalg.solve(A, M)
        return 0.5 * (H + H.T)

    def as_objective(self) -> Objective:
        return Objective(self.value, self.grad, self.hess, name="f^c")


@dataclass(frozen=True)
class Surrogate:
    """``phi(x, y) = c(x, y) + g(x) + h(y)``; g and h may be omitted.

    ``f`` records the objective a c-transform surrogate was built from.
    """

    cost: CostFunction
    g: Optional[Objective] = None
    h: Optional[Objective] = None
    f: Optional[Objective] = None
    cfg: SearchConfig = field(default_factory=SearchConfig)

    @property
    def f_c(self):
        return self.h

    def phi(self, x, y) -> float:
        v = self.cost(x, y)
        if self.g is not None:
            v += self.g(x)
        if self.h is not None:
            v += self.h(y)
        return float(v)

    __call__ = phi

    def grad_x(self, x, y):
        g = self.cost.grad_x(x, y)
        return g if self.g is None else g + self.g.gradient(x)

    def grad_y(self, x, y):
        g = self.cost.grad_y(x, y)
        return g if self.h is None else g + self.h.gradient(y)

    def hess_xx(self, x, y):
        H = self.cost.hess_xx(x, y)
        return H if self.g is None else H + self.g.hess(x)

    def hess_yy(self, x, y):
        H = self.cost.hess_yy(x, y)
        return H if self.h is None else H + self.h.hess(y)

    def argmin_y(self, x, y_init=None):
        """``T(x) = argmin_y phi(x, y)``; returns ``(value, y)``."""
        x = as_point(x, self.cost.dim_x)
        cfg = self.cfg
        base = x if self.cost.dim_x == self.cost.dim_y else np.zeros(self.cost.dim_y)
        starts = _dedupe([y_init, base, *cfg.sample(cfg.restarts, base, stream=2)])
        y, v = _search.multistart_minimize(
            lambda y: self.phi(x, y), lambda y: self.grad_y(x, y),
            lambda y: self.hess_yy(x, y), starts, tol=cfg.tol, max_iter=cfg.max_iter,
            ceiling=cfg.ceiling, method=cfg.method)
        return v, y

    def argmin_x(self, y, x_init=None):
        """``S(y) = argmin_x phi(x, y)``; returns ``(value, x)``."""
        y = as_point(y, self.cost.dim_y)
        if self.g is None and self.cost.x_step is not None:
            x = np.asarray(self.cost.x_step(y), float)
            return self.phi(x, y), x
        cfg = self.cfg
        base = self.cost.x_step(y) if self.cost.x_step is not None else (
            y if self.cost.dim_x == self.cost.dim_y else np.zeros(self.cost.dim_x))
        starts = _dedupe([x_init, base, *cfg.sample(cfg.restarts, base, stream=3)])
        x, v = _search.multistart_minimize(
            lambda x: self.phi(x, y), lambda x: self.grad_x(x, y),
            lambda x: self.hess_xx(x, y), starts, tol=cfg.tol, max_iter=cfg.max_iter,
            ceiling=cfg.ceiling, method=cfg.method)
        return v, x


def surrogate_from_ctransform(f: Objective, c: CostFunction,
                              cfg: SearchConfig = SearchConfig()) -> Surrogate:
    """The majorizing surrogate ``c(x, y) + f^c(y)`` with a numeric c-transform."""
    return Surrogate(c, None, CTransform(f, c, cfg).as_objective(), f, cfg)


def marginal_F(s: Surrogate, x, cfg: Optional[SearchConfig] = None, y_init=None):
    """``F(x) = inf_y phi(x, y)``; returns ``(value, argmin_y)``.

    >>> from gdgc.costs import quadratic_cost
    >>> h = Objective(lambda y: 0.5 * y @ y, lambda y: y, lambda y: np.eye(1))
    >>> v, y = marginal_F(Surrogate(quadratic_cost(1.0, 1), h=h), [1.0])
    >>> round(v, 12), round(float(y[0]), 12)
    (0.25, 0.5)
    """
    if cfg is not None and cfg != s.cfg:
        s = Surrogate(s.cost, s.g, s.h, s.f, cfg)
    v, y = s.argmin_y(x, y_init)
    if v < -s.cfg.ceiling:
        raise Unbounded("marginal function below the ceiling")
    return v, y


@dataclass(frozen=True)
class EnvelopeReport:
    x: np.ndarray
    grad_fd: np.ndarray
    grad_phi: np.ndarray
    deviation: float

    @property
    def passed(self) -> bool:
        return self.deviation <= 1e-5


def check_envelope(s: Surrogate, x, cfg: Optional[SearchConfig] = None,
                   step: float = 1e-3) -> EnvelopeReport:
    """Compare a difference gradient of F with ``grad_x phi(x, argmin_y)``."""
    x = as_point(x, s.cost.dim_x)
    _, y = marginal_F(s, x, cfg)
    gfd = fd_gradient(lambda z: marginal_F(s, z, cfg, y_init=y)[0], x, step=step)
    gphi = s.grad_x(x, y)
    return EnvelopeReport(x, gfd, gphi, float(np.max(np.abs(gfd - gphi))))
