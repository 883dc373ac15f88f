"""Multi-start damped Newton minimization used by every inner solve.

Objectives are passed as plain callables.  Evaluations that raise a package
error or return non-finite values count as outside the feasible region and
are rejected by the line search.
"""
from __future__ import annotations

import numpy as np
from scipy import optimize

from .core import GdgcError, NoConvergence, Unbounded


def _safe(fn, x):
    try:
        v = fn(x)
    except (GdgcError, FloatingPointError, np.linalg.LinAlgError):
        return None
    if isinstance(v, float):
        return v if np.isfinite(v) else None
    v = np.asarray(v, float)
    return v if np.isfinite(v).all() else None


def _direction(H, g):
    # Newton direction with eigenvalues floored away from zero, so that
    # nonconvex regions still give a descent step
    try:
        L = np.linalg.cholesky(H)
        return -np.linalg.solve(L.T, np.linalg.solve(L, g))
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(0.5 * (H + H.T))
        floor = 1e-8 * max(1.0, float(np.abs(w).max()))
        w = np.maximum(np.abs(w), floor)
        return -Q @ ((Q.T @ g) / w)


def newton_minimize(fun, grad, hess, x0, *, tol=1e-10, max_iter=100, ceiling=1e12,
                    xtol=1e-9):
    """Damped Newton from `x0`.  Returns ``(x, f(x), converged)``."""
    x = np.array(x0, float)
    fx = _safe(fun, x)
    if fx is None:
        return x, np.inf, False
    fx = float(fx)
    for _ in range(max_iter):
        g = _safe(grad, x)
        if g is None:
            return x, fx, False
        gn = float(np.linalg.norm(g))
        H = _safe(hess, x)
        if H is None:
            return x, fx, False
        p = _direction(H, g)
        if gn <= tol * (1.0 + abs(fx)):
            # polishing step: accept a full step that shrinks the gradient
            xn = x + p
            fn_ = _safe(fun, xn)
            gn_ = _safe(grad, xn)
            if (fn_ is not None and gn_ is not None and np.linalg.norm(gn_) < gn
                    and float(fn_) <= fx + 1e-12 * (1.0 + abs(fx))):
                x, fx = xn, float(fn_)
            return x, fx, True
        if np.linalg.norm(p) <= xtol * (1.0 + np.linalg.norm(x)):
            # Newton step below what the values can resolve: take it as a
            # polish and stop
            xn = x + p
            fn_ = _safe(fun, xn)
            if fn_ is not None and float(fn_) <= fx + 1e-12 * (1.0 + abs(fx)):
                x, fx = xn, float(fn_)
            return x, fx, True
        slope = float(g @ p)
        t = 1.0
        accepted = False
        while t > 1e-10:
            xn = x + t * p
            fn_ = _safe(fun, xn)
            if fn_ is not None and float(fn_) <= fx + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if accepted and t == 1.0:
            # curvature can be badly overestimated (nearly degenerate inner
            # maximizers); expand while the value keeps dropping
            for _ in range(30):
                xe = x + 2.0 * t * p
                fe = _safe(fun, xe)
                if fe is None or float(fe) >= float(fn_):
                    break
                t, xn, fn_ = 2.0 * t, xe, fe
        if not accepted:
            # rounding can hide a genuine decrease; fall back to the gradient
            xn = x + p
            fn_ = _safe(fun, xn)
            gn_ = _safe(grad, xn)
            if (fn_ is not None and gn_ is not None and np.linalg.norm(gn_) < gn
                    and float(fn_) <= fx + 1e-10 * (1.0 + abs(fx))):
                accepted = True
        if not accepted:
            return x, fx, gn <= np.sqrt(tol) * (1.0 + abs(fx))
        x, fx = xn, float(fn_)
        if fx < -ceiling:
            raise Unbounded(f"objective below -{ceiling:g}")
    g = _safe(grad, x)
    ok = g is not None and np.linalg.norm(g) <= np.sqrt(tol) * (1.0 + abs(fx))
    return x, fx, bool(ok)


def bfgs_minimize(fun, grad, x0, *, tol=1e-10, max_iter=200, ceiling=1e12):
    """Quasi-Newton fallback for objectives without Hessians."""
    def f(z):
        v = _safe(fun, z)
        return np.inf if v is None else float(v)

    def g(z):
        v = _safe(grad, z)
        return np.zeros_like(z) if v is None else v

    res = optimize.minimize(f, np.array(x0, float), jac=g, method="BFGS",
                            options={"gtol": tol, "maxiter": max_iter})
    if res.fun < -ceiling:
        raise Unbounded(f"objective below -{ceiling:g}")
    gv = _safe(grad, res.x)
    ok = np.isfinite(res.fun) and gv is not None and (
        np.linalg.norm(gv) <= np.sqrt(tol) * (1.0 + abs(res.fun)))
    return res.x, float(res.fun), bool(ok)


def multistart_minimize(fun, grad, hess, starts, *, tol=1e-10, max_iter=100,
                        ceiling=1e12, method="newton"):
    """Best converged local minimum over `starts`, reduced in start order.

    Ties are broken in favour of the earlier start, so results do not depend
    on how the runs are scheduled.
    """
    best = None
    for x0 in starts:
        if _safe(fun, x0) is None:
            continue
        if method == "newton" and hess is not None:
            x, fx, ok = newton_minimize(fun, grad, hess, x0, tol=tol,
                                        max_iter=max_iter, ceiling=ceiling)
        else:
            x, fx, ok = bfgs_minimize(fun, grad, x0, tol=tol, max_iter=max_iter,
                                      ceiling=ceiling)
        if ok and (best is None or fx < best[1]):
            best = (x, fx)
    if best is None:
        raise NoConvergence("no restart converged")
    return best
