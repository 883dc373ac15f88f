r"""Cost families and convex potentials.

Every constructor returns an immutable :class:`~gdgc.core.CostFunction`
with analytic first and second derivatives where they are cheap, plus the
closed-form hooks (``c_exp``, ``x_step``, ``segment``, ``mtw``) that the
geometry module and the solvers pick up automatically.

Conventions: ``hess_xy(x, y)[i, j]`` is :math:`\partial^2 c/\partial x_i
\partial y_j` and ``c_exp(x, xi)`` returns the y solving
:math:`-\nabla_x c(x, y) = \xi`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (AntipodalError, ConfigError, ConjugateUnavailable,
                   CostFunction, DomainError, NoConvergence, Objective,
                   SingularHessian, as_point, fd_jacobian)

__all__ = [
    "ConvexPotential", "quadratic_potential", "negative_entropy",
    "log_sum_exp", "exp_sum", "custom_potential", "potential_from_objective",
    "quadratic_cost", "mapped_quadratic_cost", "bregman_cost",
    "reverse_bregman_cost", "fenchel_young_cost", "log_divergence_cost",
    "exponential_kernel_cost", "sphere_geodesic_cost", "sphere_chart_cost",
    "tensor_product_cost", "swap_cost", "add_potentials",
]


@dataclass(frozen=True)
class ConvexPotential:
    """Strictly convex potential u with gradient, Hessian and optional extras.

    ``third(x, v)`` returns the matrix :math:`\\nabla^3 u(x)[v]`; when missing
    it is obtained by differencing ``hess``.  ``grad_inverse`` is the inverse
    gradient map, i.e. the gradient of the convex conjugate.
    """

    kind: str
    dim: int
    value: Callable
    grad: Callable
    hess: Callable
    grad_inverse_fn: Optional[Callable] = None
    third_fn: Optional[Callable] = None
    conjugate_fn: Optional[Callable] = None
    domain: Optional[Callable] = None
    params: tuple = ()

    def __call__(self, x) -> float:
        x = self._check(x)
        return float(self.value(x))

    def _check(self, x):
        x = as_point(x, self.dim)
        if self.domain is not None and not self.domain(x):
            raise DomainError(f"{self.kind} potential: point outside domain")
        return x

    def in_domain(self, x) -> bool:
        return self.domain is None or bool(self.domain(as_point(x)))

    def third(self, x, v) -> np.ndarray:
        """Third derivative contracted once: ``sum_k u_ijk(x) v_k``."""
        x = self._check(x)
        v = as_point(v, self.dim)
        if self.third_fn is not None:
            return np.asarray(self.third_fn(x, v), float)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros((self.dim, self.dim))
        # directional derivative of the Hessian along v
        T = fd_jacobian(lambda t: self.hess(x + t[0] * v / nv).ravel(), np.zeros(1),
                        step=1e-4 * (1 + np.linalg.norm(x)))
        T = T[:, 0].reshape(self.dim, self.dim) * nv
        return 0.5 * (T + T.T)

    def third_derivative(self, x, a, b, c) -> float:
        return float(np.asarray(a) @ self.third(x, c) @ np.asarray(b))

    def grad_inverse(self, p) -> np.ndarray:
        p = as_point(p, self.dim)
        if self.grad_inverse_fn is not None:
            x = np.asarray(self.grad_inverse_fn(p), float)
            if not np.all(np.isfinite(x)) or not self.in_domain(x):
                raise DomainError(f"{self.kind}: gradient not invertible at this point")
            return x
        return _newton_grad_inverse(self, p)

    def conjugate(self, p) -> float:
        """Convex conjugate ``u*(p) = <x, p> - u(x)`` with ``grad u(x) = p``."""
        p = as_point(p, self.dim)
        if self.conjugate_fn is not None:
            return float(self.conjugate_fn(p))
        try:
            x = self.grad_inverse(p)
        except (NoConvergence, DomainError) as exc:
            raise ConjugateUnavailable(str(exc)) from exc
        return float(x @ p - self.value(x))

    def as_objective(self) -> Objective:
        return Objective(self.value, self.grad, self.hess, self.domain, self.kind)


def _newton_grad_inverse(u: ConvexPotential, p, x0=None, tol=1e-12, max_iter=100):
    # damped Newton on grad u(x) = p, which is minimization of u(x) - <p, x>
    x = np.zeros(u.dim) if x0 is None else np.array(x0, float)
    if u.domain is not None and not u.domain(x):
        x = np.ones(u.dim)
        if not u.domain(x):
            raise ConjugateUnavailable(f"{u.kind}: no interior starting point")
    val = u.value(x) - p @ x
    for _ in range(max_iter):
        r = u.grad(x) - p
        if np.linalg.norm(r) <= tol * (1 + np.linalg.norm(p)):
            return x
        step = np.linalg.solve(u.hess(x), -r)
        t = 1.0
        while t > 1e-14:
            xn = x + t * step
            if u.domain is None or u.domain(xn):
                vn = u.value(xn) - p @ xn
                if vn <= val + 1e-4 * t * (r @ step) or t == 1.0 and vn <= val:
                    break
            t *= 0.5
        else:
            break
        x, val = xn, vn
    if np.linalg.norm(u.grad(x) - p) <= 1e-8 * (1 + np.linalg.norm(p)):
        return x
    raise NoConvergence(f"{u.kind}: gradient inversion did not converge")


def quadratic_potential(L: float = 1.0, anchor=None, dim: int = 1) -> ConvexPotential:
    """``u(x) = L/2 ||x - a||^2``."""
    if L <= 0:
        raise ConfigError("quadratic potential needs L > 0")
    a = np.zeros(dim) if anchor is None else as_point(anchor, dim)
    eye = np.eye(dim)
    return ConvexPotential(
        "quadratic", dim,
        value=lambda x: 0.5 * L * float((x - a) @ (x - a)),
        grad=lambda x: L * (x - a),
        hess=lambda x: L * eye,
        grad_inverse_fn=lambda p: a + p / L,
        third_fn=lambda x, v: np.zeros((dim, dim)),
        conjugate_fn=lambda p: float(p @ p) / (2 * L) + float(p @ a),
        params=(("L", float(L)), ("anchor", tuple(a))),
    )


def negative_entropy(dim: int = 1) -> ConvexPotential:
    """``u(x) = sum x_i log x_i`` on the open positive orthant."""
    return ConvexPotential(
        "negative_entropy", dim,
        value=lambda x: float(np.sum(x * np.log(x))),
        grad=lambda x: 1.0 + np.log(x),
        hess=lambda x: np.diag(1.0 / x),
        grad_inverse_fn=lambda p: np.exp(p - 1.0),
        third_fn=lambda x, v: np.diag(-v / x ** 2),
        conjugate_fn=lambda p: float(np.sum(np.exp(p - 1.0))),
        domain=lambda x: bool(np.all(x > 0)),
    )


def log_sum_exp(dim: int = 1) -> ConvexPotential:
    """``u(x) = log(1 + sum exp x_i)``, strictly convex on all of R^d.

    The gradient ranges over the open probability simplex interior
    ``{p > 0, sum p < 1}``.
    """

    def probs(x):
        m = max(0.0, float(x.max()))
        e = np.exp(x - m)
        return e / (np.exp(-m) + e.sum())

    def value(x):
        m = max(0.0, float(x.max()))
        return m + float(np.log(np.exp(-m) + np.exp(x - m).sum()))

    def hess(x):
        p = probs(x)
        return np.diag(p) - np.outer(p, p)

    def third(x, v):
        p = probs(x)
        w = v - p @ v
        return np.diag(p * w) - np.outer(p * w, p) - np.outer(p, p * w)

    def ginv(q):
        rest = 1.0 - q.sum()
        if np.any(q <= 0) or rest <= 0:
            raise DomainError("log_sum_exp: gradient value outside the simplex interior")
        return np.log(q / rest)

    def conj(q):
        rest = 1.0 - q.sum()
        if np.any(q <= 0) or rest <= 0:
            raise DomainError("log_sum_exp: conjugate is finite only on the simplex")
        return float(np.sum(q * np.log(q)) + rest * np.log(rest))

    return ConvexPotential("log_sum_exp", dim, value, probs, hess, ginv, third, conj)


def exp_sum(dim: int = 1, weights=None) -> ConvexPotential:
    """``u(x) = sum w_i exp(x_i)``."""
    w = np.ones(dim) if weights is None else as_point(weights, dim)
    return ConvexPotential(
        "exp_sum", dim,
        value=lambda x: float(w @ np.exp(x)),
        grad=lambda x: w * np.exp(x),
        hess=lambda x: np.diag(w * np.exp(x)),
        grad_inverse_fn=lambda p: np.log(p / w),
        third_fn=lambda x, v: np.diag(w * np.exp(x) * v),
        conjugate_fn=lambda p: float(np.sum(p * np.log(p / w) - p)),
        params=(("weights", tuple(w)),),
    )


def custom_potential(value, grad, hess, dim, grad_inverse=None, third=None,
                     conjugate=None, domain=None, kind="custom") -> ConvexPotential:
    return ConvexPotential(kind, dim, value, grad, hess, grad_inverse, third,
                           conjugate, domain)


def potential_from_objective(f: Objective, dim: int) -> ConvexPotential:
    """View a convex objective as a potential, e.g. for Newton's method."""
    return ConvexPotential("objective:" + f.name, dim, f.value, f.grad,
                           lambda x: f.hess(x), domain=f.domain)


def add_potentials(u: ConvexPotential, v: ConvexPotential) -> ConvexPotential:
    """Sum of two potentials on the intersection of their domains."""
    if u.dim != v.dim:
        raise ConfigError("potentials of different dimension")
    dom = None
    if u.domain is not None or v.domain is not None:
        dom = lambda x: u.in_domain(x) and v.in_domain(x)
    return ConvexPotential(
        f"{u.kind}+{v.kind}", u.dim,
        value=lambda x: u.value(x) + v.value(x),
        grad=lambda x: u.grad(x) + v.grad(x),
        hess=lambda x: u.hess(x) + v.hess(x),
        third_fn=lambda x, w: u.third(x, w) + v.third(x, w),
        domain=dom,
    )


# ---------------------------------------------------------------------------
# costs

def _linear_segment(x0, x1, y, ts):
    return x0[None, :] + ts[:, None] * (x1 - x0)[None, :]


def _zero_mtw(x, y, xi, eta):
    return 0.0


def quadratic_cost(L: float = 1.0, dim: int = 1) -> CostFunction:
    """``c(x, y) = L/2 ||x - y||^2``.

    >>> quadratic_cost(1.0, 2)([0.0, 0.0], [3.0, 4.0])
    12.5
    """
    if L <= 0:
        raise ConfigError("quadratic cost needs L > 0")
    eye = np.eye(dim)
    return CostFunction(
        "quadratic", dim, dim,
        value=lambda x, y: 0.5 * L * float((x - y) @ (x - y)),
        grad_x_fn=lambda x, y: L * (x - y),
        grad_y_fn=lambda x, y: L * (y - x),
        hess_xx_fn=lambda x, y: L * eye,
        hess_xy_fn=lambda x, y: -L * eye,
        hess_yy_fn=lambda x, y: L * eye,
        c_exp=lambda x, xi: x + xi / L,
        x_step=lambda y: y.copy(),
        segment=_linear_segment,
        mtw=_zero_mtw,
        params={"family": "quadratic", "L": float(L), "dim": dim},
    )


def mapped_quadratic_cost(A, JA, B, JB, dim_x: int, dim_y: Optional[int] = None,
                          A_inv=None, B_inv=None) -> CostFunction:
    """``c(x, y) = ||A(x) - B(y)||^2`` for diffeomorphisms A, B with Jacobians."""
    dim_y = dim_x if dim_y is None else dim_y

    def mapped(F, z, what):
        v = np.asarray(F(z), float)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"mapped_quadratic: {what} undefined at input")
        return v

    def value(x, y):
        r = mapped(A, x, "A") - mapped(B, y, "B")
        return float(r @ r)

    def grad_x(x, y):
        return 2.0 * JA(x).T @ (mapped(A, x, "A") - mapped(B, y, "B"))

    def grad_y(x, y):
        return -2.0 * JB(y).T @ (mapped(A, x, "A") - mapped(B, y, "B"))

    def hess_xy(x, y):
        return -2.0 * JA(x).T @ JB(y)

    c_exp = x_step = None
    if B_inv is not None:
        # -2 JA^T (A(x) - B(y)) = xi
        def c_exp(x, xi):
            return np.asarray(B_inv(mapped(A, x, "A") + np.linalg.solve(JA(x).T, xi) / 2.0))
    if A_inv is not None:
        def x_step(y):
            return np.asarray(A_inv(mapped(B, y, "B")))

    return CostFunction("mapped_quadratic", dim_x, dim_y, value, grad_x, grad_y,
                        None, hess_xy, None, c_exp=c_exp, x_step=x_step,
                        params={"family": "mapped_quadratic"})


def bregman_cost(u: ConvexPotential) -> CostFunction:
    """``c(x, y) = u(x | y) = u(x) - u(y) - <grad u(y), x - y>``."""

    def value(x, y):
        return u.value(x) - u.value(y) - float(u.grad(y) @ (x - y))

    def hess_yy(x, y):
        return u.hess(y) - u.third(y, x - y)

    def c_exp(x, xi):
        return u.grad_inverse(u.grad(x) + xi)

    return CostFunction(
        "bregman", u.dim, u.dim, value,
        grad_x_fn=lambda x, y: u.grad(x) - u.grad(y),
        grad_y_fn=lambda x, y: -u.hess(y) @ (x - y),
        hess_xx_fn=lambda x, y: u.hess(x),
        hess_xy_fn=lambda x, y: -u.hess(y),
        hess_yy_fn=hess_yy,
        domain=lambda x, y: u.in_domain(x) and u.in_domain(y),
        c_exp=c_exp,
        x_step=lambda y: y.copy(),
        segment=_linear_segment,
        mtw=_zero_mtw,
        params={"family": "bregman", "potential": u.kind},
    )


def reverse_bregman_cost(u: ConvexPotential) -> CostFunction:
    """``c(x, y) = u(y | x)``; gradient descent with it is natural gradient."""

    def value(x, y):
        return u.value(y) - u.value(x) - float(u.grad(x) @ (y - x))

    def c_exp(x, xi):
        try:
            return x + np.linalg.solve(u.hess(x), xi)
        except np.linalg.LinAlgError as exc:
            raise SingularHessian(str(exc)) from exc

    def segment(x0, x1, y, ts):
        g0, g1 = u.grad(x0), u.grad(x1)
        return np.stack([u.grad_inverse((1 - t) * g0 + t * g1) for t in ts])

    return CostFunction(
        "reverse_bregman", u.dim, u.dim, value,
        grad_x_fn=lambda x, y: -u.hess(x) @ (y - x),
        grad_y_fn=lambda x, y: u.grad(y) - u.grad(x),
        hess_xx_fn=lambda x, y: u.hess(x) - u.third(x, y - x),
        hess_xy_fn=lambda x, y: -u.hess(x),
        hess_yy_fn=lambda x, y: u.hess(y),
        domain=lambda x, y: u.in_domain(x) and u.in_domain(y),
        c_exp=c_exp,
        x_step=lambda y: y.copy(),
        segment=segment,
        params={"family": "reverse_bregman", "potential": u.kind},
    )


def fenchel_young_cost(u: ConvexPotential) -> CostFunction:
    """``c(x, y) = u(x) + u*(y) - <x, y>``.

    Raises ConjugateUnavailable when u has neither a coded conjugate nor a
    gradient inverse.
    """
    if u.conjugate_fn is None and u.grad_inverse_fn is None:
        raise ConjugateUnavailable(f"{u.kind}: no conjugate available")
    eye = np.eye(u.dim)

    def y_ok(y):
        try:
            u.conjugate(y)
            return True
        except (DomainError, ConjugateUnavailable):
            return False

    return CostFunction(
        "fenchel_young", u.dim, u.dim,
        value=lambda x, y: u.value(x) + u.conjugate(y) - float(x @ y),
        grad_x_fn=lambda x, y: u.grad(x) - y,
        grad_y_fn=lambda x, y: u.grad_inverse(y) - x,
        hess_xx_fn=lambda x, y: u.hess(x),
        hess_xy_fn=lambda x, y: -eye,
        hess_yy_fn=lambda x, y: np.linalg.inv(u.hess(u.grad_inverse(y))),
        domain=lambda x, y: u.in_domain(x) and y_ok(y),
        c_exp=lambda x, xi: u.grad(x) + xi,
        x_step=lambda y: u.grad_inverse(y),
        segment=_linear_segment,
        mtw=_zero_mtw,
        params={"family": "fenchel_young", "potential": u.kind},
    )


def log_divergence_cost(u: ConvexPotential, alpha: float) -> CostFunction:
    """``c(x, y) = u(x) - u(y) + log(1 - alpha <grad u(y), x - y>) / alpha``.

    The log argument must stay positive; points where it does not raise
    DomainError instead of being clamped.
    """
    if alpha <= 0:
        raise ConfigError("log-divergence needs alpha > 0")
    a = float(alpha)

    def arg(x, y):
        return 1.0 - a * float(u.grad(y) @ (x - y))

    def domain(x, y):
        return u.in_domain(x) and u.in_domain(y) and arg(x, y) > 0

    def value(x, y):
        return u.value(x) - u.value(y) + np.log(arg(x, y)) / a

    def grad_x(x, y):
        return u.grad(x) - u.grad(y) / arg(x, y)

    def grad_y(x, y):
        g, r = u.grad(y), x - y
        return -g + (g - u.hess(y) @ r) / arg(x, y)

    def hess_xx(x, y):
        g = u.grad(y)
        return u.hess(x) - a * np.outer(g, g) / arg(x, y) ** 2

    def hess_xy(x, y):
        g, H, r = u.grad(y), u.hess(y), x - y
        ell = arg(x, y)
        return -H / ell + a * np.outer(g, g - H @ r) / ell ** 2

    def hess_yy(x, y):
        g, H, r = u.grad(y), u.hess(y), x - y
        ell = arg(x, y)
        w = g - H @ r
        return -H + (2 * H - u.third(y, r)) / ell - a * np.outer(w, w) / ell ** 2

    return CostFunction(
        "log_divergence", u.dim, u.dim, value, grad_x, grad_y, hess_xx,
        hess_xy, hess_yy, domain=domain, x_step=lambda y: y.copy(),
        params={"family": "log_divergence", "alpha": a, "potential": u.kind},
    )


def exponential_kernel_cost(K, eps: float) -> CostFunction:
    """``c(x, y) = sum_ij exp((x_i - y_j) / eps) K_ij``."""
    K = np.atleast_2d(np.asarray(K, float))
    if K.shape[0] != K.shape[1]:
        raise ConfigError("kernel matrix must be square")
    if eps == 0:
        raise ConfigError("eps must be nonzero")
    d = K.shape[0]
    e = float(eps)
    try:
        Kinv = np.linalg.inv(K)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("kernel matrix must be invertible") from exc

    def ab(x, y):
        return np.exp(x / e), np.exp(-y / e)

    def value(x, y):
        a, b = ab(x, y)
        return float(a @ K @ b)

    def grad_x(x, y):
        a, b = ab(x, y)
        return a * (K @ b) / e

    def grad_y(x, y):
        a, b = ab(x, y)
        return -b * (K.T @ a) / e

    def hess_xx(x, y):
        a, b = ab(x, y)
        return np.diag(a * (K @ b)) / e ** 2

    def hess_yy(x, y):
        a, b = ab(x, y)
        return np.diag(b * (K.T @ a)) / e ** 2

    def hess_xy(x, y):
        a, b = ab(x, y)
        return -(a[:, None] * K * b[None, :]) / e ** 2

    def c_exp(x, xi):
        a = np.exp(x / e)
        b = Kinv @ (-e * xi / a)
        if np.any(b <= 0):
            raise DomainError("exponential kernel: xi outside the range of -grad_x c")
        return -e * np.log(b)

    def mtw(x, y, xi, eta):
        # c_{ik m} xi xi, c_{r jl} eta eta contracted through the inverse of c_{xy}
        a, b = ab(x, y)
        va = -b * (K.T @ (a * xi ** 2)) / e ** 3
        vb = a * (K @ (b * eta ** 2)) / e ** 3
        t1 = va @ np.linalg.solve(hess_xy(x, y), vb)
        t2 = float((a * xi ** 2) @ K @ (b * eta ** 2)) / e ** 4
        return float(t1 - t2)

    return CostFunction("exponential_kernel", d, d, value, grad_x, grad_y,
                        hess_xx, hess_xy, hess_yy, c_exp=c_exp, mtw=mtw,
                        params={"family": "exponential_kernel", "eps": e})


# ---------------------------------------------------------------------------
# sphere

_SPHERE_TOL = 1e-10
_ANTIPODAL_TOL = 1e-8


def _angle(x, y):
    # atan2 form keeps full precision near 0 and pi
    cos = float(x @ y)
    sin = float(np.linalg.norm(y - cos * x))
    return np.arctan2(sin, cos), cos, sin


def _theta_over_sin(theta, sin):
    if theta < 1e-6:
        return 1.0 + theta ** 2 / 6.0
    return theta / sin


def sphere_geodesic_cost(L: float = 1.0, dim: int = 3) -> CostFunction:
    """``c(x, y) = L/2 d(x, y)^2`` on the unit sphere in R^dim.

    Gradients are Riemannian (tangent vectors in ambient coordinates).
    Ambient Hessians are not provided; use :func:`sphere_chart_cost` for
    second- and higher-order geometry.
    """
    if L <= 0:
        raise ConfigError("sphere cost needs L > 0")

    def on_sphere(x, y):
        return (abs(np.linalg.norm(x) - 1) <= _SPHERE_TOL
                and abs(np.linalg.norm(y) - 1) <= _SPHERE_TOL)

    def value(x, y):
        theta, _, _ = _angle(x, y)
        return 0.5 * L * theta ** 2

    def grad_x(x, y):
        theta, cos, sin = _angle(x, y)
        if cos <= -1 + _ANTIPODAL_TOL:
            raise AntipodalError("sphere cost derivative at antipodal points")
        return -L * _theta_over_sin(theta, sin) * (y - cos * x)

    def grad_y(x, y):
        return grad_x(y, x)

    def no_hess(x, y):
        raise DomainError("sphere cost: ambient Hessians are rank deficient; use a chart")

    def c_exp(x, xi):
        v = xi / L - (xi @ x) / L * x
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return x.copy()
        return np.cos(nv) * x + np.sin(nv) * v / nv

    return CostFunction("sphere", dim, dim, value, grad_x, grad_y, no_hess,
                        no_hess, no_hess, domain=on_sphere, c_exp=c_exp,
                        x_step=lambda y: y.copy(),
                        params={"family": "sphere", "L": float(L), "dim": dim})


def _tangent_basis(p):
    d = p.size
    # columns of Q after the first span the orthogonal complement of p
    Q, _ = np.linalg.qr(np.column_stack([p, np.eye(d)]))
    return Q[:, 1:d]


def sphere_chart_cost(L: float, base_x, base_y) -> CostFunction:
    """The sphere cost in gnomonic charts centred at ``base_x`` and ``base_y``.

    Chart coordinates live in R^(dim-1); ``a = 0`` maps to the base point.
    First derivatives are analytic, second and higher by differencing.
    """
    px = as_point(base_x)
    py = as_point(base_y)
    px = px / np.linalg.norm(px)
    py = py / np.linalg.norm(py)
    Ex, Ey = _tangent_basis(px), _tangent_basis(py)
    k = px.size - 1

    def embed(p, E, a):
        z = p + E @ a
        nz = np.linalg.norm(z)
        x = z / nz
        J = (E - np.outer(x, x @ E)) / nz
        return x, J

    def value(a, b):
        x, _ = embed(px, Ex, a)
        y, _ = embed(py, Ey, b)
        theta, _, _ = _angle(x, y)
        return 0.5 * L * theta ** 2

    def dtheta_ddot(x, y):
        theta, cos, sin = _angle(x, y)
        if cos <= -1 + _ANTIPODAL_TOL:
            raise AntipodalError("sphere chart cost at antipodal points")
        return theta, -_theta_over_sin(theta, sin)

    def grad_x(a, b):
        x, J = embed(px, Ex, a)
        y, _ = embed(py, Ey, b)
        theta, ts = dtheta_ddot(x, y)
        # d(theta^2/2) = theta * dtheta = (theta / sin) * (-d<x, y>)
        return L * ts * (J.T @ y)

    def grad_y(a, b):
        x, _ = embed(px, Ex, a)
        y, J = embed(py, Ey, b)
        theta, ts = dtheta_ddot(x, y)
        return L * ts * (J.T @ x)

    def domain(a, b):
        x, _ = embed(px, Ex, a)
        y, _ = embed(py, Ey, b)
        return float(x @ y) > -1 + _ANTIPODAL_TOL

    return CostFunction("sphere_chart", k, k, value, grad_x, grad_y,
                        domain=domain,
                        params={"family": "sphere_chart", "L": float(L)})


def tensor_product_cost(c1: CostFunction, c2: CostFunction) -> CostFunction:
    """Block-sum cost ``c1(x1, y1) + c2(x2, y2)`` on the product space."""
    if not isinstance(c1, CostFunction) or not isinstance(c2, CostFunction):
        raise ConfigError("tensor product needs two CostFunction factors")
    n1, m1 = c1.dim_x, c1.dim_y
    dx, dy = c1.dim_x + c2.dim_x, c1.dim_y + c2.dim_y

    def split(x, y):
        if x.size != dx or y.size != dy:
            raise ConfigError("tensor product: input dimension mismatch")
        return x[:n1], x[n1:], y[:m1], y[m1:]

    def value(x, y):
        x1, x2, y1, y2 = split(x, y)
        return c1(x1, y1) + c2(x2, y2)

    def block(f1, f2):
        def fn(x, y):
            x1, x2, y1, y2 = split(x, y)
            A, B = f1(x1, y1), f2(x2, y2)
            out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
            out[:A.shape[0], :A.shape[1]] = A
            out[A.shape[0]:, A.shape[1]:] = B
            return out
        return fn

    def cat(f1, f2):
        def fn(x, y):
            x1, x2, y1, y2 = split(x, y)
            return np.concatenate([f1(x1, y1), f2(x2, y2)])
        return fn

    c_exp = None
    if c1.c_exp is not None and c2.c_exp is not None:
        def c_exp(x, xi):
            return np.concatenate([c1.c_exp(x[:n1], xi[:n1]), c2.c_exp(x[n1:], xi[n1:])])
    x_step = None
    if c1.x_step is not None and c2.x_step is not None:
        def x_step(y):
            return np.concatenate([c1.x_step(y[:m1]), c2.x_step(y[m1:])])

    return CostFunction(
        f"tensor({c1.name},{c2.name})", dx, dy, value,
        cat(c1.grad_x, c2.grad_x), cat(c1.grad_y, c2.grad_y),
        block(c1.hess_xx, c2.hess_xx), block(c1.hess_xy, c2.hess_xy),
        block(c1.hess_yy, c2.hess_yy),
        domain=lambda x, y: (c1.in_domain(x[:n1], y[:m1])
                             and c2.in_domain(x[n1:], y[m1:])),
        c_exp=c_exp, x_step=x_step,
        params={"family": "tensor_product"},
    )


def swap_cost(c: CostFunction) -> CostFunction:
    """The cost ``c~(y, x) = c(x, y)`` with the roles of the spaces exchanged."""
    return CostFunction(
        f"swap({c.name})", c.dim_y, c.dim_x,
        value=lambda y, x: c.value(x, y),
        grad_x_fn=lambda y, x: c.grad_y(x, y),
        grad_y_fn=lambda y, x: c.grad_x(x, y),
        hess_xx_fn=lambda y, x: c.hess_yy(x, y),
        hess_xy_fn=lambda y, x: c.hess_xy(x, y).T,
        hess_yy_fn=lambda y, x: c.hess_xx(x, y),
        domain=None if c.domain is None else (lambda y, x: c.domain(x, y)),
        params={"family": "swap", "of": c.name},
    )
