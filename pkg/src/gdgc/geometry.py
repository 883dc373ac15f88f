r"""Transport geometry of a cost: c-exponential, c-segments, cross-difference,
Kim-McCann metric and cross-curvature.

Cross-curvature uses the coordinate formula

.. math::

    S_c(x, y)(\xi, \eta) = (c_{ik\bar m} c^{\bar m r} c_{r\bar j\bar l}
        - c_{i\bar j k\bar l}) \xi^i \eta^{\bar j} \xi^k \eta^{\bar l}

with the third and fourth derivatives obtained as directional differences of
the analytic gradients.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (CostFunction, DomainError, GdgcError, NoConvergence,
                   NumericalNoise, ShootingFailure, as_point, scale_of)
from .costs import swap_cost

__all__ = [
    "CSegment", "SegmentConvexity", "c_exponential", "c_segment",
    "cross_difference", "kim_mccann_metric", "cross_curvature",
    "path_cross_curvature", "convexity_along_segment",
]


def c_exponential(c: CostFunction, x, xi, *, y0=None, tol=1e-9, max_iter=60,
                  closed_form=True) -> np.ndarray:
    """Return y with ``-grad_x c(x, y) = xi``.

    Uses the cost's closed form when available, otherwise damped Newton on y
    with Jacobian ``hess_xy``.  The residual satisfies
    ``||grad_x c(x, y) + xi|| <= tol * (1 + ||xi||)``.

    Examples
    --------
    >>> from gdgc.costs import quadratic_cost
    >>> c_exponential(quadratic_cost(2.0, 2), [1.0, 0.0], [2.0, 0.0])
    array([2., 0.])
    """
    x = as_point(x, c.dim_x, "x")
    xi = as_point(xi, c.dim_x, "xi")
    if closed_form and c.c_exp is not None:
        # out-of-domain x gives nan here; check_domain turns that into DomainError
        with np.errstate(invalid="ignore", divide="ignore"):
            y = np.asarray(c.c_exp(x, xi), float)
        c.check_domain(x, y)
        return y
    if y0 is None:
        y0 = x.copy() if c.dim_x == c.dim_y else np.zeros(c.dim_y)
    y = as_point(y0, c.dim_y, "y0").copy()
    if not c.in_domain(x, y):
        raise DomainError("c_exponential: starting point outside domain")
    target = tol * (1.0 + np.linalg.norm(xi))

    def resid(v):
        return c.grad_x(x, v) + xi

    r = resid(y)
    nr = np.linalg.norm(r)
    for _ in range(max_iter):
        if nr <= target:
            # one extra step polishes to rounding level
            try:
                yp = y - np.linalg.solve(c.hess_xy(x, y), r)
                if c.in_domain(x, yp):
                    rp = resid(yp)
                    if np.linalg.norm(rp) < nr:
                        y = yp
            except (np.linalg.LinAlgError, GdgcError):
                pass
            return y
        try:
            step = -np.linalg.solve(c.hess_xy(x, y), r)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("c_exponential: singular mixed Hessian") from exc
        t = 1.0
        while t > 1e-12:
            yn = y + t * step
            if c.in_domain(x, yn):
                rn = resid(yn)
                nrn = np.linalg.norm(rn)
                if nrn <= (1 - 1e-4 * t) * nr:
                    break
            t *= 0.5
        else:
            raise NoConvergence("c_exponential: line search failed")
        y, r, nr = yn, rn, nrn
    if nr <= target:
        return y
    raise NoConvergence(f"c_exponential: residual {nr:.3e} after {max_iter} iterations")


@dataclass(frozen=True)
class CSegment:
    """Sampled c-segment; ``path[k]`` is the moving point at ``ts[k]``."""

    cost: CostFunction
    fixed_side: str
    fixed_point: np.ndarray
    ts: np.ndarray
    path: np.ndarray

    @property
    def endpoints(self):
        return self.path[0], self.path[-1]

    def __len__(self):
        return len(self.ts)


def _second_dir_diff(fn, x, v, h):
    # d^2/ds^2 fn(x + s v) at 0, Richardson-combined
    def d2(hh):
        return (fn(x + hh * v) - 2.0 * fn(x) + fn(x - hh * v)) / hh ** 2
    return (4.0 * d2(h / 2) - d2(h)) / 3.0


def _segment_accel(c, y, h):
    def accel(x, v):
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros_like(v)
        u = v / nv
        a = _second_dir_diff(lambda z: c.grad_y(z, y), x, u, h) * nv ** 2
        return -np.linalg.solve(c.hess_xy(x, y).T, a)
    return accel


def _rk4(accel, x0, v0, steps):
    dt = 1.0 / steps
    xs = [x0]
    x, v = x0, v0
    for _ in range(steps):
        k1x, k1v = v, accel(x, v)
        k2x, k2v = v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = v + dt * k3v, accel(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs.append(x)
    return np.array(xs)


def c_segment(c: CostFunction, x_start, x_end, y, steps: int = 64, *,
              fixed_side: str = "horizontal", max_newton: int = 30,
              tol: float = 1e-7, closed_form: bool = True) -> CSegment:
    """Sample the c-segment from `x_start` to `x_end` with `y` held fixed.

    With ``fixed_side="vertical"`` the roles are exchanged: `x_start` and
    `x_end` are points of the y-space and `y` is the fixed x-point.

    Closed forms (straight lines for Bregman-type costs, affine gradient
    paths for reverse Bregman costs) are used when the cost provides them.
    Otherwise the geodesic equation is integrated with RK4 and the initial
    velocity corrected by Newton shooting until the end point is hit.
    """
    if fixed_side == "vertical":
        seg = c_segment(swap_cost(c), x_start, x_end, y, steps, max_newton=max_newton,
                        tol=tol, closed_form=closed_form)
        return CSegment(c, "vertical", seg.fixed_point, seg.ts, seg.path)
    if fixed_side != "horizontal":
        raise ValueError("fixed_side must be 'horizontal' or 'vertical'")
    x0 = as_point(x_start, c.dim_x, "x_start")
    x1 = as_point(x_end, c.dim_x, "x_end")
    y = as_point(y, c.dim_y, "y")
    c.check_domain(x0, y)
    c.check_domain(x1, y)
    ts = np.linspace(0.0, 1.0, steps + 1)
    if closed_form and c.segment is not None:
        path = np.asarray(c.segment(x0, x1, y, ts), float)
        return CSegment(c, "horizontal", y, ts, path)

    h = 1e-3 * (1.0 + np.linalg.norm(x0))
    accel = _segment_accel(c, y, h)
    # along a c-segment grad_y c(x(t), y) is affine, which fixes the velocity
    # at t = 0 up to the integration error that the shooting then removes
    v = np.linalg.solve(c.hess_xy(x0, y).T, c.grad_y(x1, y) - c.grad_y(x0, y))
    scale = 1.0 + np.linalg.norm(x1 - x0)
    for _ in range(max_newton + 1):
        try:
            path = _rk4(accel, x0, v, steps)
        except (GdgcError, np.linalg.LinAlgError) as exc:
            raise ShootingFailure(f"integration left the domain: {exc}") from exc
        miss = path[-1] - x1
        if np.linalg.norm(miss) <= tol * scale:
            path[-1] = x1
            return CSegment(c, "horizontal", y, ts, path)
        J = np.empty((c.dim_x, c.dim_x))
        dv = 1e-6 * (1.0 + np.linalg.norm(v))
        for j in range(c.dim_x):
            e = np.zeros(c.dim_x)
            e[j] = dv
            try:
                J[:, j] = (_rk4(accel, x0, v + e, steps)[-1] - path[-1]) / dv
            except (GdgcError, np.linalg.LinAlgError) as exc:
                raise ShootingFailure(str(exc)) from exc
        try:
            v = v - np.linalg.solve(J, miss)
        except np.linalg.LinAlgError as exc:
            raise ShootingFailure("singular shooting Jacobian") from exc
    raise ShootingFailure(f"endpoint missed by {np.linalg.norm(miss):.3e}")


def cross_difference(c: CostFunction, xp, yp, x, y) -> float:
    """``c(x, y') + c(x', y) - c(x, y) - c(x', y')``.

    >>> from gdgc.costs import quadratic_cost
    >>> cross_difference(quadratic_cost(1.0, 1), [1.0], [2.0], [0.0], [0.0])
    2.0
    """
    return c(x, yp) + c(xp, y) - c(x, y) - c(xp, yp)


def kim_mccann_metric(c: CostFunction, x, y, xi, eta) -> float:
    """``-xi^T hess_xy(x, y) eta``."""
    return -float(as_point(xi) @ c.hess_xy(x, y) @ as_point(eta))


def _mtw_fd(c, x, y, xi, eta, h):
    # T1 = a^T M^{-1} b with a = c_{ik m} xi xi, b = c_{r jl} eta eta
    a = _second_dir_diff(lambda z: c.grad_y(z, y), x, xi, h)
    b = _second_dir_diff(lambda w: c.grad_x(x, w), y, eta, h)
    t1 = float(a @ np.linalg.solve(c.hess_xy(x, y), b))

    if c.hess_yy_fn is not None:
        # T2 = d^2/ds^2 eta^T hess_yy(x + s xi, y) eta
        t2 = _second_dir_diff(lambda z: eta @ c.hess_yy(z, y) @ eta, x, xi, h)
        return t1 - t2

    # T2 = d^2/ds^2 d/dt <eta, grad_y c(x + s xi, y + t eta)>
    def mixed(hh):
        def dt(s):
            xs = x + s * xi
            return (eta @ c.grad_y(xs, y + hh * eta) - eta @ c.grad_y(xs, y - hh * eta)) / (2 * hh)
        return (dt(hh) - 2.0 * dt(0.0) + dt(-hh)) / hh ** 2

    t2 = (4.0 * mixed(h / 2) - mixed(h)) / 3.0
    return t1 - t2


def cross_curvature(c: CostFunction, x, y, xi, eta, *, method: str = "auto",
                    step: float = None, return_noise: bool = False, warn: bool = True):
    """Cross-curvature ``S_c(x, y)(xi, eta)``.

    ``method="auto"`` uses the cost's analytic form when it has one and
    finite differences otherwise; ``"fd"`` forces differences.  The
    difference route is evaluated at two step sizes and their discrepancy
    is the reported noise floor.  A NumericalNoise warning is issued when
    the result is within ten times that floor.
    """
    x = as_point(x, c.dim_x, "x")
    y = as_point(y, c.dim_y, "y")
    xi = as_point(xi, c.dim_x, "xi")
    eta = as_point(eta, c.dim_y, "eta")
    c.check_domain(x, y)
    if method not in ("auto", "fd", "analytic"):
        raise ValueError(f"unknown method {method!r}")
    if method != "fd" and c.mtw is not None:
        val = float(c.mtw(x, y, xi, eta))
        return (val, 0.0) if return_noise else val
    if method == "analytic":
        raise ValueError(f"{c.name}: no analytic cross-curvature coded")
    nxi, neta = np.linalg.norm(xi), np.linalg.norm(eta)
    if nxi == 0.0 or neta == 0.0:
        return (0.0, 0.0) if return_noise else 0.0
    u, w = xi / nxi, eta / neta
    if step is None:
        # the gradient-only route divides by h**3, so it needs a larger step
        base = 5e-3 if c.hess_yy_fn is not None else 1.5e-2
        step = base * (1.0 + max(np.linalg.norm(x), np.linalg.norm(y)))
    h = step
    s1 = _mtw_fd(c, x, y, u, w, h)
    s2 = _mtw_fd(c, x, y, u, w, 2.0 * h)
    mult = nxi ** 2 * neta ** 2
    val, noise = s1 * mult, abs(s1 - s2) * mult
    if warn and noise > 0 and abs(val) < 10.0 * noise:
        warnings.warn(f"cross-curvature {val:.3e} within noise floor {noise:.1e}",
                      NumericalNoise, stacklevel=2)
    return (val, noise) if return_noise else val


def path_cross_curvature(c: CostFunction, x, y, xi, eta, h: float = 1e-2) -> float:
    """Cross-curvature from its path definition.

    Computes ``-d^4/ds^2 dt^2 c(x(s), y + t eta)`` at 0 where ``x(s)`` is the
    horizontal c-segment through x with velocity xi, located by solving
    ``grad_y c(x(s), y) = grad_y c(x, y) + s hess_xy^T xi``.  Meant as a
    coarse cross-check of :func:`cross_curvature`.
    """
    x = as_point(x, c.dim_x)
    y = as_point(y, c.dim_y)
    xi = as_point(xi, c.dim_x)
    eta = as_point(eta, c.dim_y)
    g0 = c.grad_y(x, y)
    vel = c.hess_xy(x, y).T @ xi

    def seg(s):
        target = g0 + s * vel
        z = x + s * xi
        for _ in range(50):
            r = c.grad_y(z, y) - target
            if np.linalg.norm(r) <= 1e-14 * (1 + np.linalg.norm(target)):
                break
            z = z - np.linalg.solve(c.hess_xy(z, y).T, r)
        return z

    pts = {s: seg(s * h) for s in (-1, 0, 1)}

    def d2t(z):
        return (c(z, y + h * eta) - 2 * c(z, y) + c(z, y - h * eta)) / h ** 2

    return -(d2t(pts[1]) - 2 * d2t(pts[0]) + d2t(pts[-1])) / h ** 2


@dataclass(frozen=True)
class SegmentConvexity:
    second_differences: np.ndarray
    min_second_difference: float
    scale: float
    is_convex: bool


def convexity_along_segment(fn, seg: CSegment, rtol: float = 1e-8) -> SegmentConvexity:
    """Second differences of ``fn`` over the segment samples.

    The function counts as convex when every second difference is at least
    ``-rtol * scale``, with ``scale`` the largest absolute sampled value
    (and at least 1).
    """
    vals = np.array([float(fn(p)) for p in seg.path])
    if not np.all(np.isfinite(vals)):
        raise DomainError("non-finite value along segment")
    d2 = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
    scale = scale_of(vals)
    m = float(d2.min()) if d2.size else 0.0
    return SegmentConvexity(d2, m, scale, bool(m >= -rtol * scale))
