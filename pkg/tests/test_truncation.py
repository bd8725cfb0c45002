import math

import numpy as np
import pytest
from scipy import integrate, stats

from biasedcox.errors import DomainError, InputError
from biasedcox.rng import stream
from biasedcox.truncation import Exponential, Uniform, Weibull, parse

MODELS = [Exponential(1.0), Exponential(3.5), Uniform(2.0), Weibull(4.80, 2.04), Weibull(0.7, 1.3)]


def test_pdf_examples():
    assert Exponential(1.0).pdf(0.0) == 1.0
    assert Uniform(2.0).pdf(3.0) == 0.0
    k, lam = 4.80, 2.04
    assert Weibull(k, lam).pdf(2.04) == pytest.approx((k / lam) * math.exp(-1.0), rel=1e-12)
    assert Weibull(k, lam).pdf(2.04) == pytest.approx(0.8655987, abs=1e-7)


def test_cdf_examples():
    for m in MODELS:
        assert m.cdf(0.0) == 0.0
    assert Uniform(2.0).cdf(1.0) == 0.5
    assert Exponential(1.0).cdf(math.log(2)) == pytest.approx(0.5, rel=1e-15)


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        Exponential(1.0).pdf(-0.1)
    with pytest.raises(DomainError):
        Uniform(1.0).cdf(-1.0)


class _Fixed:
    def __init__(self, u):
        self.u = u

    def random(self, k):
        return np.full(k, self.u)


def test_inverse_cdf_sampling():
    assert Uniform(2.0).sample(_Fixed(0.25), 1)[0] == 0.5
    assert Exponential(1.0).sample(_Fixed(0.5), 1)[0] == pytest.approx(math.log(2), rel=1e-15)
    a = Weibull(4.8, 2.04).sample(stream(3, 1), 5)
    b = Weibull(4.8, 2.04).sample(stream(3, 1), 5)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("m", MODELS, ids=repr)
def test_pdf_integrates_to_cdf(m):
    q99 = m.quantile(0.99)
    val = integrate.quad(m.pdf, 0, q99, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert abs(val - m.cdf(q99)) < 1e-8


@pytest.mark.parametrize("m", MODELS, ids=repr)
def test_samples_match_cdf(m):
    x = m.sample(stream(11, 2), 100_000)
    assert stats.kstest(x, lambda t: m.cdf(np.maximum(t, 0))).statistic < 0.01


@pytest.mark.parametrize("m", MODELS, ids=repr)
def test_cdf_monotone_and_bounded(m):
    t = np.linspace(0, 20, 500)
    F = m.cdf(t)
    assert np.all(np.diff(F) >= 0) and F[0] == 0 and F[-1] <= 1
    assert np.all(m.pdf(t[1:]) >= 0)


def test_json_specs():
    assert parse('{"family":"exponential","rate":1.0}') == Exponential(1.0)
    assert parse('{"family":"uniform","upper":2.0}') == Uniform(2.0)
    assert parse('{"family":"weibull","shape":4.8,"scale":2.04}') == Weibull(4.8, 2.04)
    for bad in ('{"family":"gamma"}', '{"family":"uniform"}', "[1]", "nope", '{"family":"exponential","rate":-1}'):
        with pytest.raises(InputError):
            parse(bad)


def test_rescaled_law():
    for m in MODELS:
        t = np.linspace(0.01, 6, 50)
        np.testing.assert_allclose(m.rescaled(2.5).cdf(2.5 * t), m.cdf(t), rtol=1e-12)
