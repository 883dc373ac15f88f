"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``criterion N PASS|FAIL`` line, repeated in the
pytest terminal summary.
"""
import time

import numpy as np
from scipy.special import lambertw

from gdgc import experiments as ex
from gdgc.core import Objective, fd_gradient, fd_jacobian
from gdgc.costs import (bregman_cost, exp_sum, exponential_kernel_cost,
                        fenchel_young_cost, log_divergence_cost, log_sum_exp,
                        mapped_quadratic_cost, negative_entropy, potential_from_objective,
                        quadratic_cost, quadratic_potential, reverse_bregman_cost,
                        sphere_chart_cost, tensor_product_cost)
from gdgc.geometry import cross_curvature
from gdgc.solvers import (ConvexSet, alternating_minimize, classical_sinkhorn,
                          forward_backward, gdgc_explicit, gdgc_surrogate,
                          gradient_descent, mirror_descent, natural_gradient, newton,
                          pocs, sinkhorn)
from gdgc.transforms import (SearchConfig, Surrogate, check_envelope,
                             surrogate_from_ctransform)
from gdgc.verify import (check_c_concavity, check_cross_concavity,
                         check_cross_convexity, check_cross_curvature, check_five_point,
                         rate_certificate, sphere_chart_sampler)

from _helpers import entropy_linear, entropy_linear_fc, quadratic_objective, random_spd

SIN = Objective(lambda x: float(np.sin(x[0])), lambda x: np.cos(x),
                lambda x: -np.sin(x).reshape(1, 1), name="sin")


def _rel_diff(xs, ys):
    return max(float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
               for a, b in zip(xs, ys))


# ---------------------------------------------------------------- 1

def _equivalence_problems(seed):
    r = np.random.default_rng(seed)
    d = (1, 2, 8)[seed % 3]
    Q = random_spd(r, d, 0.1, 1.0)
    quad = quadratic_objective(Q, r.normal(size=d))
    # mirror descent: a u + <s, x> with the entropy, 1-smooth relative to u
    a, s = r.uniform(0.2, 0.8), r.normal(scale=0.5, size=d)
    md = entropy_linear(a, s)
    # natural gradient: a u + <s, x> with u = sum w_i exp(x_i), s < 0
    w = r.uniform(0.5, 2.0, d)
    u_exp = exp_sum(d, weights=w)
    s2 = -r.uniform(0.2, 1.5, d)
    ng = Objective(lambda x: a * u_exp(x) + float(s2 @ x),
                   lambda x: a * u_exp.grad(x) + s2, lambda x: a * u_exp.hess(x))
    x_ng = np.log(-s2 / (a * w)) + r.uniform(-1, 1, d)
    # Newton: sum w exp(x) + 1/2 x'Qx + b'x
    b = r.normal(size=d)
    nt = Objective(lambda x: u_exp(x) + 0.5 * float(x @ Q @ x) + float(b @ x),
                   lambda x: u_exp.grad(x) + Q @ x + b, lambda x: u_exp.hess(x) + Q)
    return d, r, dict(quad=quad, md=md, ng=ng, u_exp=u_exp, x_ng=x_ng, nt=nt)


def test_criterion_01_equivalence_suite(criterion):
    with criterion(1, "gdgc_explicit reproduces GD / mirror descent / NGD / Newton") as c:
        t0 = time.perf_counter()
        worst = {}
        for seed in range(10):
            d, r, p = _equivalence_problems(seed)
            x0 = r.normal(size=d)
            pairs = {
                "gd": (gdgc_explicit(p["quad"], quadratic_cost(1.0, d), x0, 50),
                       gradient_descent(p["quad"], 1.0, x0, 50)),
                "md": (gdgc_explicit(p["md"], bregman_cost(negative_entropy(d)),
                                     np.exp(x0), 50),
                       mirror_descent(p["md"], negative_entropy(d), np.exp(x0), 50)),
                "ngd": (gdgc_explicit(p["ng"], reverse_bregman_cost(p["u_exp"]), p["x_ng"], 50),
                        natural_gradient(p["ng"], p["u_exp"], p["x_ng"], 50)),
                "newton": (gdgc_explicit(p["nt"], reverse_bregman_cost(
                    potential_from_objective(p["nt"], d)), x0, 50), newton(p["nt"], x0, 50)),
            }
            for k, (a, b) in pairs.items():
                assert len(a.xs) == len(b.xs) == 51
                worst[k] = max(worst.get(k, 0.0), _rel_diff(a.xs, b.xs))
        elapsed = time.perf_counter() - t0
        c.note(", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
        assert max(worst.values()) <= 1e-10
        assert elapsed < 5.0


# ---------------------------------------------------------------- 2

def test_criterion_02_surrogate_matches_explicit(criterion):
    with criterion(2, "numeric c-transform solver matches the explicit solver") as c:
        t0 = time.perf_counter()
        worst = 0.0
        q = quadratic_cost(1.0, 1)
        for x0 in (0.3, 2.0):
            cfg = SearchConfig(box=(-6.0, 6.0), restarts=2)
            a = gdgc_surrogate(SIN, q, [x0], 15, cfg)
            b = gdgc_explicit(SIN, q, [x0], 15)
            worst = max(worst, _rel_diff(a.xs, b.xs))
        c.note(f"sin {worst:.1e}")
        bw = 0.0
        for a_, s, x0 in ((0.5, [0.3, -0.4], [1.5, 0.4]), (0.8, [-0.2], [0.3])):
            f = entropy_linear(a_, s)
            cb = bregman_cost(negative_entropy(len(s)))
            cfg = SearchConfig(box=(0.02, 5.0), restarts=2)
            a = gdgc_surrogate(f, cb, x0, 15, cfg)
            b = gdgc_explicit(f, cb, x0, 15)
            bw = max(bw, _rel_diff(a.xs, b.xs))
        elapsed = time.perf_counter() - t0
        c.note(f"bregman {bw:.1e}")
        assert max(worst, bw) <= 1e-5
        assert elapsed < 60.0


# ---------------------------------------------------------------- 3

def test_criterion_03_rate_certificates(criterion):
    with criterion(3, "AM / gdgc / forward-backward rate certificates, n <= 200") as c:
        N, lam = 200, 0.3
        results = {}
        box = SearchConfig(box=(0.05, 4.0), seed=1)
        cb = bregman_cost(negative_entropy(2))
        s = np.array([0.3, -0.4])
        for a in (0.3, 0.6):
            f = entropy_linear(a, s)
            x_star = np.exp(-s / a - 1)
            # hypotheses first
            assert check_c_concavity(f, cb, 50, box).passed
            assert check_cross_convexity(f, cb, lam=lam, samples=50, cfg=box).passed
            tr = gdgc_explicit(f, cb, [1.5, 0.4], N)
            for kind, extra in (("gdgc_sublinear", {}), ("gdgc_linear", {"lambda": lam})):
                cert = rate_certificate(tr, kind, x_star, {"cost": cb, "f": f, **extra})
                results[f"{kind} a={a}"] = cert
        # alternating minimization on the surrogate with its closed-form c-transform
        a = 0.3
        cfg = SearchConfig(box=(1e-3, 10.0), restarts=1, tol=1e-12)
        phi = Surrogate(cb, h=entropy_linear_fc(a, s), f=entropy_linear(a, s), cfg=cfg)
        assert check_five_point(phi, lam=lam, samples=20, cfg=cfg).passed
        tr = alternating_minimize(phi, [1.5, 0.4], N, cfg)
        x_star = np.exp(-s / a - 1)
        ref = (x_star, phi.argmin_y(x_star)[1])
        for kind, extra in (("am_sublinear", {}), ("am_linear", {"lambda": lam})):
            results[kind] = rate_certificate(tr, kind, ref, {"surrogate": phi, **extra})
        # forward-backward with convex quadratics
        r = np.random.default_rng(3)
        Qf, Qg = random_spd(r, 3, 0.2, 1.0), random_spd(r, 3, 0.1, 0.5)
        bf, bg = r.normal(size=3), r.normal(size=3)
        f, g = quadratic_objective(Qf, bf), quadratic_objective(Qg, bg)
        F = Objective(lambda x: f(x) + g(x), lambda x: f.gradient(x) + g.gradient(x))
        lam_f, mu_g = np.linalg.eigvalsh(Qf).min(), np.linalg.eigvalsh(Qg).min()
        q = quadratic_cost(1.0, 3)
        qcfg = SearchConfig(box=(-3.0, 3.0))
        assert check_cross_convexity(f, q, lam=lam_f * 0.999, samples=50, cfg=qcfg).passed
        assert check_cross_concavity(g, q, lam=mu_g * 0.999, samples=50, cfg=qcfg).passed
        x_star = np.linalg.solve(Qf + Qg, -(bf + bg))
        tr = forward_backward(f, g, q, r.normal(size=3) * 2, N)
        results["fb_sublinear"] = rate_certificate(tr, "fb_sublinear", x_star,
                                                   {"cost": q, "F": F})
        results["fb_linear"] = rate_certificate(tr, "fb_linear", x_star,
                                                {"cost": q, "F": F, "lambda": lam_f,
                                                 "mu": mu_g})
        bad = [k for k, v in results.items() if not v.overall]
        c.note(f"{len(results) - len(bad)}/{len(results)} certificates")
        assert all(len(v.per_n) == N for v in results.values())
        assert all(v.tol == 1e-9 for v in results.values())
        assert not bad, bad


# ---------------------------------------------------------------- 4

def _flat_costs():
    A = np.array([[1.0, 0.3], [-0.2, 0.8]])
    return {
        "quadratic": (quadratic_cost(1.3, 2), (-2.0, 2.0)),
        "mapped_quadratic": (mapped_quadratic_cost(
            lambda z: np.array([np.exp(z[0]), z[1] + z[0] ** 3]),
            lambda z: np.array([[np.exp(z[0]), 0.0], [3 * z[0] ** 2, 1.0]]),
            lambda z: A @ z + np.sin(z), lambda z: A + np.diag(np.cos(z)), 2), (-1.0, 1.0)),
        "bregman_entropy": (bregman_cost(negative_entropy(2)), (0.2, 3.0)),
        "bregman_log_sum_exp": (bregman_cost(log_sum_exp(2)), (-1.5, 1.5)),
        "exponential_kernel": (exponential_kernel_cost(np.array([[1.0, 0.3], [0.2, 1.0]]),
                                                       1.0), (-1.0, 1.0)),
        "tensor_of_flats": (tensor_product_cost(quadratic_cost(1.0, 1),
                                                bregman_cost(negative_entropy(1))), (0.2, 2.0)),
    }


def test_criterion_04_cross_curvature_zoo(criterion):
    with criterion(4, "cross-curvature of the cost zoo") as c:
        # differences are forced so coded closed forms are not what is tested
        worst_flat = 0.0
        for name, (cost, box) in _flat_costs().items():
            rep = check_cross_curvature(cost, 200, SearchConfig(box=box, seed=4), tol=1e-5,
                                        method="fd")
            worst_flat = max(worst_flat, rep.details["max_abs"])
            assert rep.passed and rep.details["max_abs"] <= 1e-5, name
        c.note(f"flat max |S| {worst_flat:.1e}")
        alpha = 0.3
        cost = log_divergence_cost(quadratic_potential(1.0, dim=2), alpha)
        r = np.random.default_rng(4)
        worst = 0.0
        for _ in range(200):
            x, y = r.uniform(-0.8, 0.8, (2, 2))
            xi, eta = r.normal(size=(2, 2))
            val = cross_curvature(cost, x, y, xi, eta, method="fd", warn=False)
            ref = 2 * alpha * float(xi @ cost.hess_xy(x, y) @ eta) ** 2
            worst = max(worst, abs(val - ref) / abs(ref))
        c.note(f"log-divergence rel {worst:.1e}")
        assert worst <= 1e-3
        sph = check_cross_curvature(None, 200, SearchConfig(seed=4), tol=1e-6,
                                    sampler=sphere_chart_sampler(), method="fd")
        c.note(f"sphere min {sph.details['min_value']:.1e}")
        assert sph.passed


# ---------------------------------------------------------------- 5

def test_criterion_05_sinkhorn(criterion):
    with criterion(5, "Sinkhorn as alternating minimization") as c:
        t0 = time.perf_counter()
        worst, fails = 0.0, 0
        for i in range(50):
            r = np.random.default_rng(500 + i)
            b = r.random((20, 20))
            mu, nu = r.random(20) + 0.1, r.random(20) + 0.1
            mu, nu = mu / mu.sum(), nu / nu.sum()
            tr = sinkhorn(b, 1.0, mu, nu, 500)
            worst = max(worst, float(max(np.max(np.abs(p - q)) for p, q in
                                         zip(tr.xs, classical_sinkhorn(b, 1.0, mu, nu, 500)))))
            pi_star = classical_sinkhorn(b, 1.0, mu, nu, 3000)[-1]
            fails += not rate_certificate(tr, "sinkhorn_sublinear", pi_star).overall
        elapsed = time.perf_counter() - t0
        c.note(f"max diff {worst:.1e}, {50 - fails}/50 certificates")
        assert worst <= 1e-12 and fails == 0
        assert elapsed < 10.0


# ---------------------------------------------------------------- 6

def test_criterion_06_pocs(criterion):
    with criterion(6, "POCS rate in R^5") as c:
        B = ConvexSet.halfspace([-1.0, 0.0, 0.0, 0.0, 0.0], -0.5)
        C = ConvexSet.ball(np.zeros(5), 1.0)
        x0 = np.array([3.0, 2.0, -1.0, 0.5, 1.0])
        tr = pocs(B, C, x0, 200)
        # squared distance to the ball, written out directly
        d2 = [max(0.0, np.linalg.norm(x) - 1.0) ** 2 for x in tr.xs]
        np.testing.assert_allclose(tr.f, d2, rtol=1e-12, atol=1e-15)
        r = np.random.default_rng(6)
        refs = []
        while len(refs) < 20:
            z = r.uniform(-1, 1, 5)
            if np.linalg.norm(z) <= 1.0 and z[0] >= 0.5:
                refs.append(z)
        ok = 0
        for x in refs:
            cert = rate_certificate(tr, "pocs_sublinear", x)
            direct = all(d2[n] <= np.sum((x - x0) ** 2) / n * (1 + 1e-9) for n in range(1, 201))
            ok += cert.overall and direct
        c.note(f"{ok}/20 reference points")
        assert ok == 20


# ---------------------------------------------------------------- 7

def _newton_condition(f, lo, hi, d, seed, lam=0.0):
    """Worst violation of 0 <= D3f(H^-1 g, xi, xi) <= (1 - lam) D2f(xi, xi), third by differences."""
    r = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        x = r.uniform(lo, hi, d)
        xi = r.normal(size=d)
        v = np.linalg.solve(f.hess(x), f.gradient(x))
        D3 = fd_jacobian(lambda z: f.hess(z) @ v, x)
        t = float(xi @ D3 @ xi)
        h2 = float(xi @ f.hess(x) @ xi)
        worst = max(worst, -t / h2, (t - (1 - lam) * h2) / h2)
    return worst


def test_criterion_07_newton_global_rate(criterion):
    with criterion(7, "Newton global rate on sum exp") as c:
        d = 3
        x0 = np.array([2.0, -1.5, 0.5])
        es = Objective(lambda x: float(np.sum(np.exp(x))), np.exp, lambda x: np.diag(np.exp(x)))
        cost = reverse_bregman_cost(potential_from_objective(es, d))
        box = SearchConfig(box=(-4.0, 2.0), seed=7)
        assert check_c_concavity(es, cost, 100, box).passed
        assert check_cross_convexity(es, cost, lam=0.0, samples=100, cfg=box).passed
        w = _newton_condition(es, -4.0, 2.0, d, 7)
        assert w <= 1e-6
        tr = newton(es, x0, 100)
        f_star = d * np.exp(-120.0)  # infimum over the box [-120, inf)^3
        assert np.min(tr.xs[-1]) >= -120.0
        cert = rate_certificate(tr, "newton_sublinear", None, {"f_star": f_star})
        c.note(f"condition worst violation {w:.1e}")
        assert cert.overall

        eps = 0.1
        co = Objective(lambda x: float(np.sum(np.exp(x)) + 0.5 * eps * x @ x),
                       lambda x: np.exp(x) + eps * x, lambda x: np.diag(np.exp(x) + eps))
        t_star = -float(lambertw(1.0 / eps).real)
        f_star = d * (np.exp(t_star) + 0.5 * eps * t_star ** 2)
        # the condition holds on [t_star, 2]^3; Newton from the right never leaves it
        ccost = reverse_bregman_cost(potential_from_objective(co, d))
        cbox = SearchConfig(box=(t_star, 2.0), seed=7)
        assert check_c_concavity(co, ccost, 100, cbox).passed
        assert check_cross_convexity(co, ccost, lam=0.0, samples=100, cfg=cbox).passed
        wc = _newton_condition(co, t_star, 2.0, d, 8)
        assert wc <= 1e-6
        trc = newton(co, x0, 100)
        assert all(np.all(x >= t_star - 1e-12) and np.all(x <= 2.0) for x in trc.xs)
        certc = rate_certificate(trc, "newton_sublinear", None, {"f_star": f_star})
        c.note(f"coercive worst violation {wc:.1e}")
        assert certc.overall


# ---------------------------------------------------------------- 8

def test_criterion_08_five_point_chain(criterion):
    with criterion(8, "c-concavity and cross-convexity imply the five-point property") as c:
        passed = 0
        for seed in range(10):
            r = np.random.default_rng(800 + seed)
            d = 1 + seed % 3
            a, s = r.uniform(0.2, 0.9), r.normal(scale=0.5, size=d)
            f = entropy_linear(a, s)
            cb = bregman_cost(negative_entropy(d))
            cfg = SearchConfig(box=(0.1, 3.0), restarts=1, seed=seed)
            cc = check_c_concavity(f, cb, 50, cfg).passed
            cx = check_cross_convexity(f, cb, samples=50, cfg=cfg).passed
            phi = Surrogate(cb, h=entropy_linear_fc(a, s), f=f, cfg=cfg)
            fp = check_five_point(phi, samples=20, cfg=cfg).passed
            assert cc and cx, seed
            passed += fp
        c.note(f"{passed}/10 Bregman instances")
        assert passed == 10

        seed = 3
        rep = check_five_point(
            surrogate_from_ctransform(SIN, quadratic_cost(1.0, 1),
                                      SearchConfig(box=(-4.0, 4.0), restarts=1, seed=seed)),
            samples=40, stop_after=1)
        assert not rep.passed
        w = rep.first_violation()
        again = check_five_point(
            surrogate_from_ctransform(SIN, quadratic_cost(1.0, 1),
                                      SearchConfig(box=(-4.0, 4.0), restarts=1,
                                                   seed=rep.seed)),
            samples=40, stop_after=1).first_violation()
        assert again["index"] == w["index"]
        np.testing.assert_array_equal(again["x"], w["x"])
        np.testing.assert_array_equal(again["y0"], w["y0"])
        # re-evaluate the witness on an independently built surrogate
        phi = surrogate_from_ctransform(SIN, quadratic_cost(1.0, 1),
                                        SearchConfig(box=(-4.0, 4.0), restarts=3, seed=99))
        lhs = phi(w["x"], w["y1"]) + phi(w["x0"], w["y0"])
        rhs = phi(w["x"], w["y"]) + phi(w["x"], w["y0"])
        c.note(f"sin witness margin {lhs - rhs:.1e} (seed {rep.seed})")
        assert lhs - rhs > 1e-6


# ---------------------------------------------------------------- 9

def _derivative_costs():
    r = np.random.default_rng(9)
    bx, by = r.normal(size=3), r.normal(size=3)
    flat = _flat_costs()
    return {
        "quadratic": (flat["quadratic"][0], ("u", -2, 2), ("u", -2, 2)),
        "mapped_quadratic": (flat["mapped_quadratic"][0], ("u", -1, 1), ("u", -1, 1)),
        "bregman_entropy": (flat["bregman_entropy"][0], ("u", 0.2, 3), ("u", 0.2, 3)),
        "bregman_exp_sum": (bregman_cost(exp_sum(2)), ("u", -1.5, 1.5), ("u", -1.5, 1.5)),
        "bregman_log_sum_exp": (flat["bregman_log_sum_exp"][0], ("u", -1.5, 1.5),
                                ("u", -1.5, 1.5)),
        "reverse_bregman": (reverse_bregman_cost(negative_entropy(2)), ("u", 0.2, 3),
                            ("u", 0.2, 3)),
        "fenchel_young": (fenchel_young_cost(negative_entropy(2)), ("u", 0.2, 3),
                          ("u", -1.5, 1.5)),
        "log_divergence": (log_divergence_cost(quadratic_potential(1.0, dim=2), 0.3),
                           ("u", -0.8, 0.8), ("u", -0.8, 0.8)),
        "exponential_kernel": (flat["exponential_kernel"][0], ("u", -1, 1), ("u", -1, 1)),
        "sphere_chart": (sphere_chart_cost(1.0, bx, by), ("u", -0.3, 0.3), ("u", -0.3, 0.3)),
        "tensor_product": (flat["tensor_of_flats"][0], ("u", 0.2, 2), ("u", 0.2, 2)),
    }


def _rel_err(analytic, fd):
    analytic = np.atleast_1d(np.asarray(analytic, float))
    return float(np.max(np.abs(analytic - fd)) / max(1.0, np.max(np.abs(analytic))))


def test_criterion_09_derivative_and_envelope_hygiene(criterion):
    with criterion(9, "analytic derivatives and envelope gradients") as c:
        worst, slots = 0.0, 0
        for name, (cost, (_, xl, xh), (_, yl, yh)) in _derivative_costs().items():
            r = np.random.default_rng(900)
            checks = {
                "grad_x": lambda x, y: fd_gradient(lambda z: cost(z, y), x),
                "grad_y": lambda x, y: fd_gradient(lambda z: cost(x, z), y),
                "hess_xx": lambda x, y: fd_jacobian(lambda z: cost.grad_x(z, y), x),
                "hess_xy": lambda x, y: fd_jacobian(lambda z: cost.grad_x(x, z), y),
                "hess_yy": lambda x, y: fd_jacobian(lambda z: cost.grad_y(x, z), y),
            }
            present = [k for k in checks if getattr(cost, k + "_fn") is not None]
            slots += len(present)
            for _ in range(200):
                x, y = r.uniform(xl, xh, cost.dim_x), r.uniform(yl, yh, cost.dim_y)
                for k in present:
                    e = _rel_err(getattr(cost, k)(x, y), checks[k](x, y))
                    worst = max(worst, e)
                    assert e <= 1e-5, (name, k, x, y)
        pots = {"negative_entropy": (negative_entropy(3), 0.2, 3.0),
                "exp_sum": (exp_sum(3), -1.5, 1.5), "log_sum_exp": (log_sum_exp(3), -1.5, 1.5),
                "quadratic": (quadratic_potential(2.0, dim=3), -2.0, 2.0)}
        for name, (u, lo, hi) in pots.items():
            r = np.random.default_rng(901)
            for _ in range(200):
                x, v = r.uniform(lo, hi, 3), r.normal(size=3)
                e = max(_rel_err(u.grad(x), fd_gradient(u, x)),
                        _rel_err(u.hess(x), fd_jacobian(u.grad, x)),
                        _rel_err(u.third(x, v), fd_jacobian(lambda z: u.hess(z) @ v, x)))
                worst = max(worst, e)
                assert e <= 1e-5, (name, x)
        c.note(f"{slots} cost slots + 4 potentials, worst {worst:.1e}")

        env = []
        sin_s = surrogate_from_ctransform(SIN, quadratic_cost(1.0, 1),
                                          SearchConfig(box=(-4.0, 4.0), restarts=2))
        env += [check_envelope(sin_s, [x]).deviation for x in (-2.0, 0.7, 2.5)]
        f_ent = entropy_linear(0.5, [0.3, -0.4])
        ent_s = surrogate_from_ctransform(f_ent, bregman_cost(negative_entropy(2)),
                                          SearchConfig(box=(0.02, 5.0), restarts=2))
        env += [check_envelope(ent_s, x).deviation for x in ([0.5, 1.2], [1.5, 0.3])]
        Q = np.array([[1.2, 0.3], [0.3, 0.6]])
        q_s = surrogate_from_ctransform(quadratic_objective(Q, [0.2, -0.1]),
                                        quadratic_cost(2.0, 2),
                                        SearchConfig(box=(-5.0, 5.0), restarts=2))
        env += [check_envelope(q_s, x).deviation for x in ([0.4, -1.0], [-1.5, 0.2])]
        c.note(f"envelope max {max(env):.1e}")
        assert max(env) <= 1e-5


# ---------------------------------------------------------------- 10

def test_criterion_10_determinism(criterion, tmp_path):
    with criterion(10, "builtin manifest is byte-identical across runs") as c:
        cfgs = [ex.builtin_config(n, 0) for n, _, _ in ex.list_experiments()]
        first = ex.run_manifest(cfgs, str(tmp_path / "a"), workers=1)
        ex.run_manifest(cfgs, str(tmp_path / "b"), workers=4)
        same = 0
        for cfg in cfgs:
            a, b = tmp_path / "a" / cfg.name, tmp_path / "b" / cfg.name
            same += all((a / f).read_bytes() == (b / f).read_bytes()
                        for f in ("trace.csv", "report.json"))
        c.note(f"{same}/{len(cfgs)} experiments identical, "
               f"{sum(r.passed for r in first)} passing")
        assert same == len(cfgs)
