"""Numerical self-checks run by ``biasedcox fit --verify`` on user data."""
from __future__ import annotations

import numpy as np
from scipy import integrate

from .cox import CachedTerms, FailureGrid, wee_matrix
from .data import Dataset
from .estimators import sample_adjusted_risk_sets
from .inference import martingale_residuals
from .rng import stream
from .weights import CensoringWeights


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def fd_jacobian(score, beta, h=1e-5):
    beta = np.asarray(beta, dtype=float)
    cols = []
    for k in range(beta.size):
        e = np.zeros_like(beta)
        e[k] = h
        cols.append((score(beta + e) - score(beta - e)) / (2 * h))
    return np.column_stack(cols)


def _quad_step(fn, lo, hi, knots):
    pts = [lo, *[k for k in knots if lo < k < hi], hi]
    return sum(integrate.quad(fn, pts[i], pts[i + 1], epsabs=0, epsrel=1e-13, limit=200)[0] for i in range(len(pts) - 1))


def run_checks(d: Dataset, w: CensoringWeights, beta_hat, seed=0, n_points=20, scale=0.5) -> dict:
    rng = stream(seed, 9_999)
    grid = FailureGrid.of(d)
    out = {}

    wee = CachedTerms(wee_matrix(d, w, grid), d.z, grid, d.n)
    draw = sample_adjusted_risk_sets(d, w, stream(seed, 9_998), grid)
    ppl = CachedTerms(draw.membership.astype(float), d.z, grid, d.n)
    worst = {"wee": 0.0, "ppl": 0.0}
    for _ in range(n_points):
        b = np.asarray(beta_hat) + scale * rng.standard_normal(d.p)
        for name, t in (("wee", wee), ("ppl", ppl)):
            J = t.jacobian(b)
            if np.max(np.abs(J)) > 0:
                worst[name] = max(worst[name], _rel(fd_jacobian(t.score, b), J))
    out["jacobian_fd"] = {"max_rel_err": worst, "tol": 1e-4, "pass": max(worst.values()) < 1e-4}

    knots = w.survival.jump_times
    ys = np.quantile(d.y, [0.1, 0.5, 0.9])
    S, g = w.survival, w.truncation
    if w.kernel == "density" or w.censoring_free:
        quad = [_quad_step(lambda t: S(t) * g.pdf(t), 0.0, y, knots) for y in ys]
    else:
        quad = [_quad_step(lambda t, y=y: S(t) * g.pdf(y - t), 0.0, y, knots) for y in ys]
    err = max(_rel(w.omega(y), q) for y, q in zip(ys, quad) if q > 0) if any(q > 0 for q in quad) else 0.0
    out["omega_quadrature"] = {"max_rel_err": err, "tol": 1e-10, "pass": err < 1e-10}

    u = np.quantile(d.v, 0.25)
    hk = w.tail_kernel([u], ys, density=False)[0]
    qk = [_quad_step(S, u, y, knots) if u <= y else 0.0 for y in ys]
    err = max((_rel(h, q) for h, q in zip(hk, qk) if q > 0), default=0.0)
    out["tail_kernel_quadrature"] = {"max_rel_err": err, "tol": 1e-10, "pass": err < 1e-10}

    res = martingale_residuals(d, w, beta_hat)
    m, mc = res.at_tau()
    bal = max(abs(float(m.sum())), abs(float(mc.sum())))
    out["martingale_balance"] = {"abs_sum": bal, "tol": 1e-8 * d.n, "pass": bal < 1e-8 * d.n}
    out["pass"] = all(v["pass"] for v in out.values() if isinstance(v, dict))
    return out
