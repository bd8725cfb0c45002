import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import integrate

from biasedcox.data import Dataset
from biasedcox.errors import DegenerateInformation
from biasedcox.estimators import FitResult, fit_wee, sample_adjusted_risk_sets, wee_jacobian, ppl_loglik_hessian
from biasedcox.inference import (
    ase_report,
    breslow_baseline,
    gamma_hat,
    martingale_residuals,
    sandwich_parts,
)
from biasedcox.rng import stream
from biasedcox.truncation import Exponential, Uniform
from biasedcox.weights import CensoringWeights

from conftest import datasets, simulated

# three subjects, one residual censoring at v = 1.45
A = [0.1, 0.2, 0.05]
Y = [1.0, 2.0, 1.5]
DELTA = [1, 1, 0]
Z = [0.3, -0.5, 1.0]
BETA = 0.2


@pytest.fixture(scope="module")
def tiny():
    d = Dataset(A, Y, DELTA, np.array(Z)[:, None])
    return d, CensoringWeights.fit(d, Exponential(1.0))


def s_c(t):
    # KM of residual censoring: two subjects have v >= 1.45, one is censored there
    return 1.0 if t < 1.45 else 0.5


def quad(f, lo, hi):
    pts = [p for p in (1.45,) if lo < p < hi]
    return integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-13)[0]


def omega(y):
    return quad(lambda t: s_c(t) * math.exp(-t), 0.0, y)


def transcribe(variant):
    """Sandwich variance for the tiny instance, written out with loops and quadrature."""
    n = 3
    fail = [1.0, 2.0]
    e = [math.exp(BETA * z) for z in Z]
    w = [1.0 / omega(y) for y in Y]

    def zeta(j, t):
        return DELTA[j] == 1 and Y[j] >= t

    s0 = [sum(w[j] * e[j] for j in range(n) if zeta(j, t)) for t in fail]
    ebar = [sum(w[j] * e[j] * Z[j] for j in range(n) if zeta(j, t)) / s for t, s in zip(fail, s0)]
    e2 = [sum(w[j] * e[j] * Z[j] ** 2 for j in range(n) if zeta(j, t)) / s for t, s in zip(fail, s0)]
    gamma = sum(e2[k] - ebar[k] ** 2 for k in range(2)) / n

    term1 = []
    for i in range(n):
        v = 0.0
        if DELTA[i]:
            v += Z[i] - ebar[fail.index(Y[i])]
        for k, t in enumerate(fail):
            if zeta(i, t):
                v -= w[i] * e[i] * (Z[i] - ebar[k]) / s0[k]
        term1.append(v)

    u = 1.45
    dmc = [0.0, -0.5, 0.5]
    if variant == "derived":
        c = [w[k] ** 2 * e[k] * sum((Z[k] - ebar[m]) / s0[m] for m, t in enumerate(fail) if zeta(k, t)) for k in range(n)]
        h = [quad(lambda t: s_c(t) * math.exp(-t), u, Y[k]) if u <= Y[k] else 0.0 for k in range(n)]
        ybar = sum(Y[i] - A[i] >= u for i in range(n)) / n
        sign = -1.0
    else:
        c = [w[k] ** 2 * e[k] * Z[k] * sum(1.0 / s0[m] for m, t in enumerate(fail) if zeta(k, t)) for k in range(n)]
        h = [quad(s_c, u, Y[k]) if u <= Y[k] else 0.0 for k in range(n)]
        ybar = sum(Y[i] - A[i] > u for i in range(n)) / n
        sign = 1.0
    G = sum(h[k] * c[k] for k in range(n)) / n
    infl = [term1[i] + sign * dmc[i] * G / ybar for i in range(n)]
    sigma = sum(x * x for x in infl) / n
    return infl, sigma, gamma, sigma / gamma**2


def test_tiny_weights_match_hand_values(tiny):
    d, w = tiny
    np.testing.assert_allclose(w.cache, [omega(y) for y in Y], rtol=1e-12)
    assert w.survival(1.44) == 1.0 and w.survival(1.45) == 0.5


@pytest.mark.parametrize("variant", ["derived", "literal"])
def test_sandwich_transcription(tiny, variant):
    d, w = tiny
    parts = sandwich_parts(d, w, [BETA], variant=variant)
    infl, sigma, gamma, psi = transcribe(variant)
    np.testing.assert_allclose(parts.influence[:, 0], infl, rtol=1e-10, atol=1e-12)
    assert parts.sigma[0, 0] == pytest.approx(sigma, rel=1e-10)
    assert parts.gamma[0, 0] == pytest.approx(gamma, rel=1e-10)
    assert parts.psi[0, 0] == pytest.approx(psi, rel=1e-10)


def test_variants_differ_only_in_censoring_term(tiny):
    d, w = tiny
    a = sandwich_parts(d, w, [BETA], variant="derived")
    b = sandwich_parts(d, w, [BETA], variant="literal")
    np.testing.assert_array_equal(a.term1, b.term1)
    assert not np.allclose(a.term2, b.term2)


def test_unknown_variant(tiny):
    d, w = tiny
    with pytest.raises(ValueError):
        sandwich_parts(d, w, [BETA], variant="nope")


def test_no_censoring_drops_second_term(small_uncensored):
    d, w = small_uncensored
    for variant in ("derived", "literal"):
        parts = sandwich_parts(d, w, [0.5, 1.0], variant=variant)
        np.testing.assert_array_equal(parts.term2, 0.0)
        np.testing.assert_array_equal(parts.influence, parts.term1)


def test_influence_sums_to_score(small_censored):
    # the censoring residuals balance at every jump, so only n * U(beta) is left
    d, w = small_censored
    fit = fit_wee(d, w, variance=None)
    parts = sandwich_parts(d, w, fit.beta_hat)
    assert np.max(np.abs(parts.influence.sum(axis=0))) < 1e-8 * d.n
    assert np.max(np.abs(parts.term2.sum(axis=0))) < 1e-10 * d.n


@settings(max_examples=40, deadline=None)
@given(datasets(min_n=8))
def test_psi_positive_semidefinite(d):
    w = CensoringWeights.fit(d, Exponential(0.5))
    for variant in ("derived", "literal"):
        try:
            psi = sandwich_parts(d, w, np.zeros(d.p), variant=variant).psi
        except DegenerateInformation:
            continue
        np.testing.assert_allclose(psi, psi.T, atol=1e-12)
        ev = np.linalg.eigvalsh(psi)
        assert ev.min() >= -1e-9 * max(1.0, ev.max())


# --- Breslow baseline ---------------------------------------------------------------


def test_breslow_lone_failure():
    # the censored subject leaves before the only failure
    d = Dataset([0.0, 0.0], [1.0, 0.5], [1, 0], [[0.7], [0.1]])
    w = CensoringWeights.fit(d, Exponential(1.0))
    h = breslow_baseline(d, w, [0.0])
    np.testing.assert_allclose(h.increments, [1.0])


def test_breslow_unit_weights_is_nelson_aalen(small_censored):
    d, _ = small_censored
    w = CensoringWeights.fit(d, Uniform(1e-9))
    h = breslow_baseline(d, w, np.zeros(2))
    times = np.unique(d.y[d.delta == 1])
    na = [np.sum((d.y == t) & (d.delta == 1)) / np.sum(d.y >= t) for t in times]
    np.testing.assert_allclose(h.times, times)
    np.testing.assert_allclose(h.increments, na, rtol=1e-13)


def test_breslow_tiny_by_hand(tiny):
    d, w = tiny
    e = [math.exp(BETA * z) for z in Z]
    for at_risk, keep in (("all", [1, 1, 1]), ("uncensored", DELTA)):
        h = breslow_baseline(d, w, [BETA], at_risk=at_risk)
        ref = [
            1.0 / sum(omega(t) / omega(Y[j]) * e[j] for j in range(3) if Y[j] >= t and keep[j])
            for t in (1.0, 2.0)
        ]
        np.testing.assert_allclose(h.increments, ref, rtol=1e-11)


def test_breslow_cumulative_left_limit(tiny):
    d, w = tiny
    h = breslow_baseline(d, w, [BETA])
    assert h.cumulative(1.0) == 0.0
    assert h.cumulative(1.0, strict=False) == h.increments[0]
    assert h.cumulative(5.0) == pytest.approx(h.increments.sum())
    grid = np.linspace(0, 3, 50)
    assert np.all(np.diff(h.cumulative(grid)) >= 0)


def test_breslow_rejects_bad_option(tiny):
    d, w = tiny
    with pytest.raises(ValueError):
        breslow_baseline(d, w, [BETA], at_risk="some")


# --- martingale residuals -----------------------------------------------------------


@pytest.mark.parametrize("censoring", [0.0, 0.2, 0.4])
def test_martingale_balance(censoring):
    d, w = simulated(150, censoring, seed=4)
    fit = fit_wee(d, w, variance=None)
    res = martingale_residuals(d, w, fit.beta_hat)
    m, mc = res.at_tau()
    assert abs(m.sum()) < 1e-8 * d.n
    assert abs(mc.sum()) < 1e-8 * d.n
    # every failure-time column balances, not only the total
    assert np.max(np.abs(res.dM.sum(axis=0))) < 1e-10 * d.n


def test_censoring_residuals_tiny(tiny):
    d, w = tiny
    res = martingale_residuals(d, w, [BETA])
    np.testing.assert_allclose(res.censoring_times, [1.45])
    np.testing.assert_allclose(res.dMC[:, 0], [0.0, -0.5, 0.5])


# --- information and standard errors ----------------------------------------------


def test_gamma_hat_matches_jacobians(small_censored):
    d, w = small_censored
    b = np.array([0.3, 0.8])
    np.testing.assert_allclose(gamma_hat(d, w, b), -wee_jacobian(b, d, w), rtol=1e-13)
    draws = [sample_adjusted_risk_sets(d, w, stream(3, r)) for r in range(3)]
    ref = -np.mean([ppl_loglik_hessian(b, r, d) for r in draws], axis=0)
    np.testing.assert_allclose(gamma_hat(d, w, b, risk_context=draws), ref, rtol=1e-13)


def test_gamma_hat_degenerate():
    d = Dataset([0, 0, 0], [1.0, 2.0, 3.0], [1, 1, 1], [[1.0], [1.0], [1.0]])
    w = CensoringWeights.fit(d, Exponential(1.0))
    with pytest.raises(DegenerateInformation):
        gamma_hat(d, w, [0.0])


def test_ase_report_scaling():
    fit = FitResult(method="wee", beta_hat=np.zeros(2), covariance=np.eye(2), n=100, iterations=1, converged=True, score_norm=0.0)
    np.testing.assert_allclose(ase_report(fit), [0.1, 0.1])
    np.testing.assert_allclose(fit.se, [0.1, 0.1])
