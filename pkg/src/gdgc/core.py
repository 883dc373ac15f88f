"""Shared types, error classes and the finite-difference engine.

Everything here is dependency-free apart from numpy.  Costs, objectives and
traces are plain frozen dataclasses holding callables and tuples so they can
be passed between threads and compared by value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

__all__ = [
    "GdgcError", "DomainError", "ConfigError", "NoConvergence",
    "ShootingFailure", "ConjugateUnavailable", "AntipodalError", "Unbounded",
    "MonotonicityViolation", "InnerSolveFailure", "SingularHessian", "NoRoot",
    "ZeroMarginal", "ZeroMass", "KindMismatch", "MissingDualIterates",
    "NumericalNoise",
    "as_point", "scale_of", "fd_step", "fd_gradient", "fd_jacobian", "fd_hessian",
    "fd_mixed_hessian",
    "Objective", "CostFunction", "SolverTrace", "RateCertificate",
    "CERTIFICATE_KINDS",
]


class GdgcError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(GdgcError, ValueError):
    """A point lies outside the domain, or an evaluation was not finite."""


class ConfigError(GdgcError, ValueError):
    """Invalid or inconsistent configuration."""


class NoConvergence(GdgcError, RuntimeError):
    """An iterative inner solve did not reach its tolerance."""


class ShootingFailure(NoConvergence):
    """The shooting method could not hit the requested endpoint."""


class ConjugateUnavailable(GdgcError):
    """A potential has no coded gradient inverse / convex conjugate."""


class AntipodalError(DomainError):
    """Two sphere points are (numerically) antipodal."""


class Unbounded(GdgcError, ArithmeticError):
    """A supremum exceeded the configured ceiling."""


class MonotonicityViolation(GdgcError, RuntimeError):
    """Alternating minimization increased the surrogate value."""


class InnerSolveFailure(NoConvergence):
    """An argmin inside alternating minimization failed."""


class SingularHessian(GdgcError, np.linalg.LinAlgError):
    """A Hessian that must be inverted is singular."""


class NoRoot(GdgcError, RuntimeError):
    """A scalar root-finding problem has no admissible root."""


class ZeroMarginal(GdgcError, ValueError):
    """A marginal of a coupling vanished where the target has mass."""


class ZeroMass(GdgcError, ValueError):
    """A model marginal vanished where the data has mass."""


class KindMismatch(GdgcError, ValueError):
    """A certificate kind does not fit the trace it is applied to."""


class MissingDualIterates(GdgcError, ValueError):
    """A check needs the y-iterates but the trace does not carry them."""


class NumericalNoise(UserWarning):
    """A finite-difference result is within its estimated noise floor."""


def as_point(x, dim: Optional[int] = None, name: str = "x") -> np.ndarray:
    """Return `x` as a float64 1-d array, checking the dimension if given."""
    if type(x) is np.ndarray and x.dtype == np.float64 and x.ndim == 1:
        a = x
    else:
        a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise DomainError(f"{name} must be a vector, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DomainError(f"{name} has dimension {a.shape[0]}, expected {dim}")
    if not np.isfinite(a).all():
        raise DomainError(f"{name} has non-finite entries")
    return a


def _finite(v, what):
    if isinstance(v, float):
        ok = math.isfinite(v)
    else:
        ok = np.isfinite(v).all()
    if not ok:
        raise DomainError(f"non-finite value in {what}")
    return v


# ---------------------------------------------------------------------------
# Finite differences.  Central differences at steps h and h/2 combined by one
# Richardson level, which cancels the h**2 term.

def fd_step(x, step=None) -> float:
    if step is not None:
        return float(step)
    return 1e-4 * (1.0 + float(np.linalg.norm(x)))


def _richardson(d_h, d_h2):
    return (4.0 * d_h2 - d_h) / 3.0


def fd_gradient(fn: Callable, x, step=None) -> np.ndarray:
    """Gradient of a scalar function by Richardson-extrapolated central differences.

    Examples
    --------
    >>> float(fd_gradient(np.exp, [0.0])[0])  # doctest: +ELLIPSIS
    1.0...
    """
    x = as_point(x)
    h = fd_step(x, step)

    def central(hh):
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = hh
            fp = fn(x + e)
            fm = fn(x - e)
            g[i] = (float(np.squeeze(fp)) - float(np.squeeze(fm))) / (2 * hh)
        return g

    return _finite(_richardson(central(h), central(h / 2)), "fd_gradient")


def fd_jacobian(fn: Callable, x, step=None) -> np.ndarray:
    """Jacobian ``J[i, j] = d fn_i / d x_j`` of a vector-valued function."""
    x = as_point(x)
    h = fd_step(x, step)

    def central(hh):
        cols = []
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = hh
            cols.append((np.asarray(fn(x + e), float) - np.asarray(fn(x - e), float)) / (2 * hh))
        return np.stack(cols, axis=-1)

    return _finite(_richardson(central(h), central(h / 2)), "fd_jacobian")


def fd_hessian(fn: Callable, x, step=None) -> np.ndarray:
    """Symmetrized Hessian of a scalar function from function values only.

    Examples
    --------
    >>> H = fd_hessian(lambda z: z[0] ** 2 * z[1], [1.0, 1.0])
    >>> np.allclose(H, [[2.0, 2.0], [2.0, 0.0]], atol=1e-6)
    True
    """
    x = as_point(x)
    h = fd_step(x, step)
    d = x.size

    def stencil(hh):
        H = np.empty((d, d))
        f0 = float(fn(x))
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = hh
            H[i, i] = (float(fn(x + ei)) - 2 * f0 + float(fn(x - ei))) / hh ** 2
            for j in range(i + 1, d):
                ej = np.zeros(d)
                ej[j] = hh
                v = (float(fn(x + ei + ej)) - float(fn(x + ei - ej))
                     - float(fn(x - ei + ej)) + float(fn(x - ei - ej))) / (4 * hh ** 2)
                H[i, j] = H[j, i] = v
        return H

    H = _richardson(stencil(h), stencil(h / 2))
    return _finite(0.5 * (H + H.T), "fd_hessian")


def fd_mixed_hessian(cost: "CostFunction", x, y, step=None) -> np.ndarray:
    """Mixed second derivative ``M[i, j] = d^2 c / dx_i dy_j`` from cost values."""
    x = as_point(x)
    y = as_point(y)
    h = fd_step(np.concatenate([x, y]), step)

    def stencil(hh):
        M = np.empty((x.size, y.size))
        for i in range(x.size):
            ei = np.zeros(x.size)
            ei[i] = hh
            for j in range(y.size):
                ej = np.zeros(y.size)
                ej[j] = hh
                M[i, j] = (cost(x + ei, y + ej) - cost(x + ei, y - ej)
                           - cost(x - ei, y + ej) + cost(x - ei, y - ej)) / (4 * hh ** 2)
        return M

    return _finite(_richardson(stencil(h), stencil(h / 2)), "fd_mixed_hessian")


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Objective:
    """A scalar function with gradient and an optional Hessian.

    Missing Hessians fall back to a finite-difference Jacobian of `grad`.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "objective"

    def __call__(self, x) -> float:
        x = as_point(x)
        self.check_domain(x)
        return float(_finite(self.value(x), self.name))

    def gradient(self, x) -> np.ndarray:
        x = as_point(x)
        self.check_domain(x)
        return _finite(np.asarray(self.grad(x), float).reshape(x.shape), self.name)

    def hess(self, x) -> np.ndarray:
        x = as_point(x)
        self.check_domain(x)
        if self.hess_fn is not None:
            H = np.asarray(self.hess_fn(x), float).reshape(x.size, x.size)
        else:
            H = fd_jacobian(self.grad, x)
            H = 0.5 * (H + H.T)
        return _finite(H, self.name)

    def in_domain(self, x) -> bool:
        return True if self.domain is None else bool(self.domain(as_point(x)))

    def check_domain(self, x):
        if self.domain is not None and not self.domain(x):
            raise DomainError(f"{self.name}: point outside domain")

    def __add__(self, other: "Objective") -> "Objective":
        h1, h2 = self.hess_fn, other.hess_fn
        both = None
        if h1 is not None and h2 is not None:
            both = lambda x: h1(x) + h2(x)
        d1, d2 = self.domain, other.domain
        dom = None
        if d1 is not None or d2 is not None:
            dom = lambda x: (d1 is None or d1(x)) and (d2 is None or d2(x))
        return Objective(lambda x: self.value(x) + other.value(x),
                         lambda x: self.grad(x) + other.grad(x),
                         both, dom, f"{self.name}+{other.name}")


@dataclass(frozen=True)
class CostFunction:
    """A cost ``c(x, y)`` with optional analytic derivatives and closed forms.

    Derivative slots left as ``None`` are filled by finite differences of the
    next-lower analytic order.  The closed-form hooks are used by geometry and
    the solvers when present:

    ``c_exp(x, xi)``
        the y solving ``-grad_x c(x, y) = xi``.
    ``x_step(y)``
        the x solving ``grad_x c(x, y) = 0``.
    ``segment(x0, x1, y, ts)``
        samples of the horizontal segment from x0 to x1 with y fixed.
    ``mtw(x, y, xi, eta)``
        the cross-curvature form.
    """

    name: str
    dim_x: int
    dim_y: int
    value: Callable[[np.ndarray, np.ndarray], float]
    grad_x_fn: Optional[Callable] = None
    grad_y_fn: Optional[Callable] = None
    hess_xx_fn: Optional[Callable] = None
    hess_xy_fn: Optional[Callable] = None
    hess_yy_fn: Optional[Callable] = None
    domain: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None
    c_exp: Optional[Callable] = None
    x_step: Optional[Callable] = None
    segment: Optional[Callable] = None
    mtw: Optional[Callable] = None
    params: dict = field(default_factory=dict, compare=False)

    def _pts(self, x, y):
        x = as_point(x, self.dim_x, "x")
        y = as_point(y, self.dim_y, "y")
        self.check_domain(x, y)
        return x, y

    def in_domain(self, x, y) -> bool:
        if self.domain is None:
            return True
        try:
            return bool(self.domain(as_point(x), as_point(y)))
        except GdgcError:
            return False

    def check_domain(self, x, y):
        if self.domain is not None and not self.domain(x, y):
            raise DomainError(f"{self.name}: (x, y) outside domain")

    def __call__(self, x, y) -> float:
        x, y = self._pts(x, y)
        return float(_finite(self.value(x, y), self.name))

    def grad_x(self, x, y) -> np.ndarray:
        x, y = self._pts(x, y)
        if self.grad_x_fn is not None:
            g = np.asarray(self.grad_x_fn(x, y), float)
        else:
            g = fd_gradient(lambda z: self.value(z, y), x)
        return _finite(g, self.name)

    def grad_y(self, x, y) -> np.ndarray:
        x, y = self._pts(x, y)
        if self.grad_y_fn is not None:
            g = np.asarray(self.grad_y_fn(x, y), float)
        else:
            g = fd_gradient(lambda z: self.value(x, z), y)
        return _finite(g, self.name)

    def hess_xx(self, x, y) -> np.ndarray:
        x, y = self._pts(x, y)
        if self.hess_xx_fn is not None:
            H = np.asarray(self.hess_xx_fn(x, y), float)
        else:
            H = fd_jacobian(lambda z: self.grad_x(z, y), x)
            H = 0.5 * (H + H.T)
        return _finite(H.reshape(self.dim_x, self.dim_x), self.name)

    def hess_yy(self, x, y) -> np.ndarray:
        x, y = self._pts(x, y)
        if self.hess_yy_fn is not None:
            H = np.asarray(self.hess_yy_fn(x, y), float)
        else:
            H = fd_jacobian(lambda z: self.grad_y(x, z), y)
            H = 0.5 * (H + H.T)
        return _finite(H.reshape(self.dim_y, self.dim_y), self.name)

    def hess_xy(self, x, y) -> np.ndarray:
        """Matrix ``M[i, j] = d^2 c / dx_i dy_j``."""
        x, y = self._pts(x, y)
        if self.hess_xy_fn is not None:
            M = np.asarray(self.hess_xy_fn(x, y), float)
        else:
            M = fd_jacobian(lambda z: self.grad_x(x, z), y)
        return _finite(M.reshape(self.dim_x, self.dim_y), self.name)

    @property
    def analytic(self) -> dict:
        return {k: getattr(self, k + "_fn") is not None
                for k in ("grad_x", "grad_y", "hess_xx", "hess_xy", "hess_yy")}


CERTIFICATE_KINDS = (
    "am_sublinear", "am_linear", "gdgc_sublinear", "gdgc_linear",
    "fb_sublinear", "fb_linear", "descent", "lyapunov",
    "ngd_sublinear", "ngd_linear", "newton_sublinear", "newton_linear",
    "pocs_sublinear", "sinkhorn_sublinear",
)


@dataclass(frozen=True)
class SolverTrace:
    """Iterates and per-step scalars of one solver run.

    ``f[n]`` is the objective at ``xs[n]``; ``phi[n]`` the surrogate value at
    ``(xs[n], ys[n])`` and ``gap[n]`` the cost gap of the step that produced
    ``xs[n]`` (0 at n = 0).  Entries are ``None`` where undefined.
    """

    solver: str
    xs: tuple
    ys: tuple
    f: tuple
    phi: tuple
    gap: tuple
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.xs)
        for name in ("ys", "f", "phi", "gap"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trace field {name} has length "
                                 f"{len(getattr(self, name))}, expected {n}")
        for name in ("f", "phi", "gap"):
            for v in getattr(self, name):
                if v is not None and not np.isfinite(v):
                    raise DomainError(f"non-finite {name} value in trace")

    def __len__(self):
        return len(self.xs)

    @property
    def horizon(self) -> int:
        return len(self.xs) - 1

    @property
    def has_dual(self) -> bool:
        return all(y is not None for y in self.ys[1:])


@dataclass(frozen=True)
class RateCertificate:
    """Per-step comparison ``lhs <= rhs + tol`` for one theoretical rate."""

    kind: str
    reference_point: Any
    per_n: tuple  # of (n, lhs, rhs, satisfied)
    tol: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(row[3] for row in self.per_n)

    @property
    def worst_slack(self) -> float:
        """Largest ``lhs - rhs`` over all steps (negative means slack)."""
        if not self.per_n:
            return -np.inf
        return max(row[1] - row[2] for row in self.per_n)

    def first_failure(self) -> Optional[int]:
        for n, _, _, ok in self.per_n:
            if not ok:
                return n
        return None


def scale_of(*values: Sequence[float]) -> float:
    """Magnitude used to turn relative tolerances into absolute ones."""
    m = 1.0
    for v in values:
        a = np.abs(np.asarray(v, float))
        a = a[np.isfinite(a)]
        if a.size:
            m = max(m, float(a.max()))
    return m
