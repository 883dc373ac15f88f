import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gdgc.core import (ConfigError, DomainError, Objective, SingularHessian,
                       ZeroMass)
from gdgc.costs import (bregman_cost, custom_potential, exp_sum, fenchel_young_cost,
                        negative_entropy, potential_from_objective, quadratic_cost,
                        quadratic_potential, reverse_bregman_cost)
from gdgc.solvers import (ConvexSet, DiscreteCoupling, SolverSpec,
                          alternating_minimize, classical_sinkhorn, forward_backward,
                          gdgc_explicit, gradient_descent, latent_em,
                          log_divergence_gd, mirror_descent, natural_gradient, newton,
                          pocs, riemannian_sphere_gd, sinkhorn)
from gdgc.transforms import SearchConfig, Surrogate

from _helpers import entropy_linear, entropy_linear_fc, max_diff, quadratic_objective

HALF_SQ = quadratic_objective([[1.0]])


def _nonincreasing(vals, rtol=1e-12):
    v = [t for t in vals if t is not None]
    return all(b <= a + rtol * max(1.0, abs(a)) for a, b in zip(v, v[1:]))


def test_solver_spec_validation():
    SolverSpec("newton", 3)
    with pytest.raises(ConfigError):
        SolverSpec("bogus", 3)
    with pytest.raises(ConfigError):
        SolverSpec("newton", 0)
    with pytest.raises(ConfigError):
        newton(HALF_SQ, [1.0], 0)


# ---------------------------------------------------------------- alternating minimization

def _half_surrogate(d=1):
    h = Objective(lambda y: 0.5 * float(y @ y), lambda y: y, lambda y: np.eye(d))
    return Surrogate(quadratic_cost(1.0, d), h=h)


def test_am_geometric_recursion():
    tr = alternating_minimize(_half_surrogate(), [1.0], 6, y0=None)
    for n in range(1, 7):
        assert tr.xs[n][0] == pytest.approx(0.5 ** n, rel=1e-10)
        assert tr.ys[n][0] == pytest.approx(0.5 ** n, rel=1e-10)
    # grid oracle for the first y-step
    grid = np.linspace(-2, 2, 400001)
    assert tr.ys[1][0] == pytest.approx(grid[np.argmin(0.5 * (1 - grid) ** 2 + 0.5 * grid ** 2)],
                                        abs=1e-5)


def test_am_stationary_at_minimizer():
    tr = alternating_minimize(_half_surrogate(2), [0.0, 0.0], 4)
    assert all(np.allclose(x, 0.0, atol=1e-12) for x in tr.xs)


def test_am_bregman_surrogate_decreases():
    a, s = 0.6, [0.5, -0.3]
    cfg = SearchConfig(box=(0.05, 3.0), restarts=1)
    phi = Surrogate(bregman_cost(negative_entropy(2)), h=entropy_linear_fc(a, s),
                    f=entropy_linear(a, s), cfg=cfg)
    tr = alternating_minimize(phi, [1.5, 0.4], 10, cfg)
    assert _nonincreasing(tr.phi)
    np.testing.assert_allclose(tr.xs[-1], np.exp(-np.array(s) / a - 1), rtol=1e-2)


# ---------------------------------------------------------------- gdgc explicit

def test_gdgc_quadratic_is_gradient_step():
    tr = gdgc_explicit(HALF_SQ, quadratic_cost(1.0, 1), [1.0], 3)
    assert tr.xs[1][0] == 0.0


def test_gdgc_half_square_bregman_matches():
    a = gdgc_explicit(HALF_SQ, quadratic_cost(1.0, 1), [1.0], 3)
    b = gdgc_explicit(HALF_SQ, bregman_cost(quadratic_potential(1.0, dim=1)), [1.0], 3)
    assert max_diff(a.xs, b.xs) == 0.0


def test_gdgc_reverse_bregman_one_step(rng):
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    f = quadratic_objective(Q, [1.0, -2.0])
    tr = gdgc_explicit(f, reverse_bregman_cost(potential_from_objective(f, 2)), [3.0, 3.0], 2)
    np.testing.assert_allclose(tr.xs[1], np.linalg.solve(Q, [-1.0, 2.0]), atol=1e-12)


def test_gdgc_bregman_and_fenchel_young_share_x_iterates():
    u = negative_entropy(3)
    f = entropy_linear(0.5, [0.3, -0.2, 0.5])
    a = gdgc_explicit(f, bregman_cost(u), np.ones(3), 20)
    b = gdgc_explicit(f, fenchel_young_cost(u), np.ones(3), 20)
    assert max_diff(a.xs, b.xs) <= 1e-12
    # dual iterates are related by the mirror map
    np.testing.assert_allclose(b.ys[5], u.grad(a.ys[5]), rtol=1e-12)


# ---------------------------------------------------------------- forward-backward

def test_fb_without_g_is_gdgc():
    Q = np.array([[1.0, 0.2], [0.2, 0.5]])
    f = quadratic_objective(Q, [0.3, 0.1])
    c = quadratic_cost(1.0, 2)
    a = forward_backward(f, None, c, [2.0, -1.0], 30)
    b = gdgc_explicit(f, c, [2.0, -1.0], 30)
    assert max_diff(a.xs, b.xs) == 0.0


def test_fb_without_f_is_proximal_point():
    L, b, t = 2.0, 0.5, 3.0
    zero = Objective(lambda x: 0.0, lambda x: 0.0 * x, lambda x: np.zeros((1, 1)))
    g = Objective(lambda x: 0.5 * b * (x[0] - t) ** 2, lambda x: b * (x - t),
                  lambda x: b * np.eye(1))
    tr = forward_backward(zero, g, quadratic_cost(L, 1), [0.0], 10)
    x = 0.0
    for n in range(1, 11):
        x = (L * x + b * t) / (L + b)
        assert tr.xs[n][0] == pytest.approx(x, rel=1e-10)


@pytest.mark.parametrize("a,b,L", [(1.0, 0.5, 2.0), (0.3, 2.0, 1.0)])
def test_fb_affine_recursion(a, b, L):
    f = quadratic_objective([[a]])
    g = quadratic_objective([[b]])
    tr = forward_backward(f, g, quadratic_cost(L, 1), [1.5], 15)
    r = (L - a) / (L + b)
    for n in range(16):
        assert tr.xs[n][0] == pytest.approx(1.5 * r ** n, rel=1e-9, abs=1e-14)
    assert _nonincreasing(tr.f)


def test_fb_entropy_records_composite_objective():
    u = negative_entropy(2)
    s = np.array([0.4, -0.2])
    f = Objective(lambda x: float(s @ x), lambda x: s.copy(), lambda x: np.zeros((2, 2)),
                  domain=u.in_domain)
    g = Objective(lambda x: 0.5 * u(x), lambda x: 0.5 * u.grad(x), lambda x: 0.5 * u.hess(x),
                  domain=u.in_domain)
    tr = forward_backward(f, g, bregman_cost(u), [1.5, 0.5], 30,
                          SearchConfig(box=(0.05, 3.0)))
    for x, F in zip(tr.xs, tr.f):
        assert F == pytest.approx(f(x) + g(x), rel=1e-12)
    assert _nonincreasing(tr.f)
    np.testing.assert_allclose(tr.xs[-1], np.exp(-s / 0.5 - 1), rtol=1e-4)


# ---------------------------------------------------------------- closed-form methods

def test_mirror_descent_quadratic_is_gd():
    Q = np.array([[1.0, 0.2], [0.2, 0.5]])
    f = quadratic_objective(Q, [0.3, 0.1])
    a = mirror_descent(f, quadratic_potential(2.0, dim=2), [1.0, 1.0], 20)
    b = gradient_descent(f, 2.0, [1.0, 1.0], 20)
    assert max_diff(a.xs, b.xs) <= 1e-15


def test_mirror_descent_entropy_multiplicative_update():
    s = np.array([0.3, -0.2, 0.5])
    lin = Objective(lambda x: float(s @ x), lambda x: s.copy())
    tr = mirror_descent(lin, negative_entropy(3), np.ones(3), 5)
    for n in range(6):
        np.testing.assert_allclose(tr.xs[n], np.exp(-n * s), rtol=1e-14)
    b = gdgc_explicit(lin, bregman_cost(negative_entropy(3)), np.ones(3), 5)
    assert max_diff(tr.xs, b.xs) <= 1e-14


def test_mirror_descent_constant_is_stationary():
    const = Objective(lambda x: 2.0, lambda x: 0.0 * x)
    tr = mirror_descent(const, negative_entropy(2), [0.3, 0.7], 5)
    assert all(np.array_equal(x, tr.xs[0]) for x in tr.xs)


def test_natural_gradient_reductions():
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    f = quadratic_objective(Q, [1.0, -2.0])
    a = natural_gradient(f, quadratic_potential(1.0, dim=2), [1.0, 1.0], 10)
    b = gradient_descent(f, 1.0, [1.0, 1.0], 10)
    assert max_diff(a.xs, b.xs) <= 1e-13
    n1 = natural_gradient(f, potential_from_objective(f, 2), [1.0, 1.0], 3)
    n2 = newton(f, [1.0, 1.0], 3)
    assert max_diff(n1.xs, n2.xs) == 0.0


def test_natural_gradient_dual_view_is_mirror_descent():
    # x~ = grad u(x) follows mirror descent of f o grad u* with mirror u*
    u = negative_entropy(2)
    a, s = 0.5, np.array([1.0, 1.5])
    f = Objective(lambda x: a * float(np.sum(x - s * np.log(x))), lambda x: a * (1 - s / x),
                  domain=u.in_domain)
    tr = natural_gradient(f, u, [0.3, 2.5], 15)
    ustar = custom_potential(lambda p: float(np.sum(np.exp(p - 1))), lambda p: np.exp(p - 1),
                             lambda p: np.diag(np.exp(p - 1)), 2,
                             grad_inverse=lambda x: 1 + np.log(x))
    ft = Objective(lambda p: f(np.exp(p - 1)), lambda p: np.exp(p - 1) * f.gradient(np.exp(p - 1)))
    md = mirror_descent(ft, ustar, u.grad(np.array([0.3, 2.5])), 15)
    assert max_diff(md.xs, tr.extras["dual"]) <= 1e-8


def test_newton_examples():
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    f = quadratic_objective(Q, [1.0, -2.0])
    np.testing.assert_allclose(newton(f, [5.0, 5.0], 1).xs[1], np.linalg.solve(Q, [-1.0, 2.0]),
                               atol=1e-12)
    e = Objective(lambda x: math.exp(x[0]), lambda x: np.exp(x), lambda x: np.exp(x).reshape(1, 1))
    tr = newton(e, [0.5], 5)
    for n in range(6):
        assert tr.xs[n][0] == pytest.approx(0.5 - n, abs=1e-14)
    es = Objective(lambda x: float(np.sum(np.exp(x)) + 0.5 * x @ x), lambda x: np.exp(x) + x,
                   lambda x: np.diag(np.exp(x) + 1))
    assert _nonincreasing(newton(es, [2.0, -1.5, 0.5], 20).f)


def test_newton_singular_hessian():
    flat = Objective(lambda x: float(x[0]), lambda x: np.ones(1), lambda x: np.zeros((1, 1)))
    with pytest.raises(SingularHessian):
        newton(flat, [0.0], 2)


def test_log_divergence_small_alpha_is_gd():
    Q = np.array([[0.8, 0.1], [0.1, 0.5]])
    f = quadratic_objective(Q, [0.3, -0.2])
    ld = log_divergence_gd(f, quadratic_potential(1.0, dim=2), 1e-4, [0.8, -0.5], 20)
    gd = mirror_descent(f, quadratic_potential(1.0, dim=2), [0.8, -0.5], 20)
    assert max_diff(ld.xs, gd.xs) <= 1e-3


def test_log_divergence_constant_objective_multiplier_is_one():
    const = Objective(lambda x: 1.0, lambda x: 0.0 * x)
    tr = log_divergence_gd(const, quadratic_potential(1.0, dim=1), 0.5, [0.7], 3)
    assert all(m == pytest.approx(1.0) for m in tr.extras["mu"])
    assert all(x[0] == pytest.approx(0.7) for x in tr.xs)


def test_log_divergence_one_step():
    tr = log_divergence_gd(HALF_SQ, quadratic_potential(1.0, dim=1), 0.5, [1.0], 1)
    assert tr.xs[1][0] == 0.0


def test_log_divergence_general_root_matches_closed_form():
    # a quadratic written as a custom potential takes the bracketing route
    q = quadratic_potential(1.0, dim=2)
    custom = custom_potential(q.value, q.grad, q.hess, 2, grad_inverse=lambda p: p)
    Q = np.array([[0.8, 0.1], [0.1, 0.5]])
    f = quadratic_objective(Q, [0.3, -0.2])
    a = log_divergence_gd(f, q, 0.3, [0.8, -0.5], 10)
    b = log_divergence_gd(f, custom, 0.3, [0.8, -0.5], 10)
    assert max_diff(a.xs, b.xs) <= 1e-12


def test_sphere_examples():
    e1 = np.array([1.0, 0.0, 0.0])
    lin = Objective(lambda x: float(e1 @ x), lambda x: e1.copy())
    tr = riemannian_sphere_gd(lin, 1.0, [0.0, 1.0, 0.0], 3)
    np.testing.assert_allclose(tr.xs[1], [-math.sin(1), math.cos(1), 0.0], atol=1e-15)
    stat = riemannian_sphere_gd(lin, 1.0, e1, 3)
    assert all(np.array_equal(x, e1) for x in stat.xs)
    tr = riemannian_sphere_gd(lin, 0.7, [0.0, 0.6, 0.8], 100)
    assert all(abs(np.linalg.norm(x) - 1) <= 1e-12 for x in tr.xs)
    assert _nonincreasing(tr.f)
    with pytest.raises(DomainError):
        riemannian_sphere_gd(lin, 1.0, [0.0, 2.0, 0.0], 1)


def test_sphere_geodesic_residual():
    # x(t) = cos(t) x0 + sin(t) v is a unit-speed great circle: x'' = -x
    e1 = np.array([1.0, 0.0, 0.0])
    lin = Objective(lambda x: float(e1 @ x), lambda x: e1.copy())
    x1 = riemannian_sphere_gd(lin, 1.0, [0.0, 1.0, 0.0], 1).xs[1]
    x0, v = np.array([0.0, 1.0, 0.0]), -e1
    h = 1e-4
    path = lambda t: math.cos(t) * x0 + math.sin(t) * v  # noqa: E731
    acc = (path(1 + h) - 2 * path(1) + path(1 - h)) / h ** 2
    np.testing.assert_allclose(acc, -x1, atol=1e-6)


# ---------------------------------------------------------------- discrete problems

def _instance(seed, n=20, scale=1.0):
    r = np.random.default_rng(seed)
    mu = r.random(n) + 0.1
    nu = r.random(n) + 0.1
    return r.random((n, n)) * scale, mu / mu.sum(), nu / nu.sum()


def test_sinkhorn_zero_cost_uniform():
    mu = nu = np.full(4, 0.25)
    tr = sinkhorn(np.zeros((4, 4)), 1.0, mu, nu, 2)
    np.testing.assert_allclose(tr.xs[1], np.outer(mu, nu), atol=1e-17)
    assert tr.f[1] == pytest.approx(0.0, abs=1e-16)


def test_sinkhorn_column_marginal_exact():
    b, mu, nu = _instance(1)
    tr = sinkhorn(b, 0.7, mu, nu, 20)
    for p in tr.xs[1:]:
        np.testing.assert_allclose(p.sum(axis=0), nu, rtol=1e-14)
    assert _nonincreasing(tr.f)


def test_sinkhorn_matches_classical_scaling():
    b, mu, nu = _instance(2)
    tr = sinkhorn(b, 1.0, mu, nu, 100)
    assert max_diff(tr.xs, classical_sinkhorn(b, 1.0, mu, nu, 100)) <= 1e-12


def test_sinkhorn_log_domain():
    b, mu, nu = _instance(3, scale=1000.0)
    tr = sinkhorn(b, 0.5, mu, nu, 50)
    assert tr.metadata["log_domain"]
    np.testing.assert_allclose(tr.xs[-1].sum(axis=0), nu, rtol=1e-12)
    assert _nonincreasing(tr.f)
    assert all(np.isfinite(p).all() for p in tr.xs)


def test_sinkhorn_log_domain_agrees_with_direct():
    b, mu, nu = _instance(4, scale=1.0)
    direct = sinkhorn(b, 1.0, mu, nu, 30)
    shifted = sinkhorn(b + 2000.0, 1.0, mu, nu, 30)   # constant shift cancels
    assert shifted.metadata["log_domain"] and not direct.metadata["log_domain"]
    assert max_diff(direct.xs[1:], shifted.xs[1:]) <= 1e-12


def test_pocs_examples():
    B = ConvexSet.halfspace([-1.0, 0.0], -1.0)
    C = ConvexSet.ball([0.0, 0.0], 1.0)
    tr = pocs(B, C, [2.0, 0.0], 1)
    np.testing.assert_allclose(tr.ys[1], [1.0, 0.0])
    np.testing.assert_allclose(tr.xs[1], [1.0, 0.0])
    assert tr.f[1] == 0.0
    stat = pocs(B, ConvexSet.ball([0.0, 0.0], 2.0), [1.5, 0.3], 5)
    assert all(np.array_equal(x, stat.xs[0]) for x in stat.xs)
    with pytest.raises(DomainError):
        pocs(B, C, [0.0, 0.0], 1)


def test_pocs_disjoint_halfspaces():
    B = ConvexSet.halfspace([1.0, 0.0], 0.0)     # x1 <= 0
    C = ConvexSet.halfspace([-1.0, 0.0], -1.0)   # x1 >= 1
    tr = pocs(B, C, [-3.0, 2.0], 10)
    assert _nonincreasing(tr.f)
    assert min(tr.f) >= 1.0 - 1e-12


def test_latent_em_examples():
    mu = np.array([0.2, 0.5, 0.3])
    tr = latent_em(np.eye(3), mu, np.full(3, 1 / 3), 3)
    np.testing.assert_allclose(tr.xs[1], mu, atol=1e-15)
    K = np.array([[0.5, 0.1], [0.3, 0.2], [0.2, 0.7]])
    theta = np.array([0.4, 0.6])
    tr = latent_em(K, K @ theta, theta, 5)
    assert max_diff(tr.xs, [theta] * 6) <= 1e-15
    r = np.random.default_rng(0)
    K = r.random((5, 3)) + 0.05
    K /= K.sum(axis=0)
    mu = r.random(5) + 0.05
    tr = latent_em(K, mu / mu.sum(), np.full(3, 1 / 3), 50)
    assert _nonincreasing(tr.f)


def test_latent_em_zero_mass():
    K = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ZeroMass):
        latent_em(K, np.array([0.3, 0.3, 0.4]), np.array([0.5, 0.5]), 2)


def test_discrete_coupling():
    c = DiscreteCoupling(np.array([[0.1, 0.2], [0.3, 0.4]]))
    np.testing.assert_allclose(c.row_marginal, [0.3, 0.7])
    np.testing.assert_allclose(c.col_marginal, [0.4, 0.6])
    c.check_mass()
    with pytest.raises(DomainError):
        DiscreteCoupling(np.array([[0.5, -0.1]]))
    with pytest.raises(DomainError):
        DiscreteCoupling(np.array([[0.5, 0.1]])).check_mass()


_SETS = [
    ConvexSet.halfspace([1.0, -2.0], 0.5),
    ConvexSet.ball([0.3, -0.2], 0.8),
    ConvexSet.box([-0.5, 0.0], [0.5, 1.0]),
    ConvexSet.affine([[1.0, 1.0]], [0.4]),
]

# membership written out independently of ConvexSet.contains
_MEMBER = {
    "halfspace": lambda P: P[:, 0] - 2 * P[:, 1] <= 0.5,
    "ball": lambda P: np.hypot(P[:, 0] - 0.3, P[:, 1] + 0.2) <= 0.8,
    "box": lambda P: (np.abs(P[:, 0]) <= 0.5) & (P[:, 1] >= 0) & (P[:, 1] <= 1),
}


@pytest.mark.parametrize("S", _SETS, ids=lambda s: s.kind)
def test_projection_distance_matches_grid(S):
    if S.kind == "affine":
        # measure-zero set: grid the line itself
        t = np.linspace(-5, 5, 200001)
        members = np.stack([0.2 + t, 0.2 - t], axis=1)
    else:
        g = np.linspace(-3, 3, 1201)
        X, Y = np.meshgrid(g, g)
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        members = pts[_MEMBER[S.kind](pts)]
    r = np.random.default_rng(1)
    for x in r.uniform(-2, 2, (10, 2)):
        d_grid = np.min(np.linalg.norm(members - x, axis=1))
        assert S.distance(x) == pytest.approx(d_grid, abs=6e-3)


@given(arrays(float, 2, elements=st.floats(-5, 5)))
def test_projection_idempotent(x):
    for S in _SETS:
        p = S.project(x)
        np.testing.assert_allclose(S.project(p), p, atol=1e-12)
        assert S.contains(p, 1e-9)
        assert S.distance(x) == pytest.approx(np.linalg.norm(x - p))


# ---------------------------------------------------------------- descent across solvers

@given(st.integers(0, 10_000))
def test_descent_on_random_quadratics(seed):
    r = np.random.default_rng(seed)
    d = int(r.integers(1, 4))
    V, _ = np.linalg.qr(r.normal(size=(d, d)))
    Q = V @ np.diag(r.uniform(0.1, 1.0, d)) @ V.T
    f = quadratic_objective(0.5 * (Q + Q.T), r.normal(size=d))
    x0 = r.normal(size=d)
    for tr in (gradient_descent(f, 1.0, x0, 20), gdgc_explicit(f, quadratic_cost(1.0, d), x0, 20),
               newton(f, x0, 3), natural_gradient(f, quadratic_potential(1.5, dim=d), x0, 20),
               forward_backward(f, quadratic_objective(np.eye(d)), quadratic_cost(1.0, d), x0, 20)):
        assert _nonincreasing(tr.f, 1e-12)


def test_descent_exp_sum_mirror():
    # f = exp_sum is 1-smooth relative to itself plus anything convex
    u = exp_sum(2)
    f = Objective(lambda x: 0.5 * u(x), lambda x: 0.5 * u.grad(x), lambda x: 0.5 * u.hess(x))
    tr = mirror_descent(f, u, [0.5, -0.3], 30)
    assert _nonincreasing(tr.f)
