import numpy as np
import pytest
from hypothesis import strategies as st

from biasedcox.data import Dataset
from biasedcox.rng import stream
from biasedcox.simulation import ScenarioSpec, generate_dataset
from biasedcox.weights import CensoringWeights


def simulated(n=60, censoring=0.2, hazard="h1", seed=0):
    spec = ScenarioSpec(hazard=hazard, n=n, censoring_target=censoring, n_replicates=1)
    d, trunc = generate_dataset(spec, stream(seed, 0))
    return d, CensoringWeights.fit(d, trunc)


@pytest.fixture(scope="session")
def small_censored():
    return simulated(60, 0.2)


@pytest.fixture(scope="session")
def small_uncensored():
    return simulated(60, 0.0)


@st.composite
def datasets(draw, min_n=3, max_n=25, p=2):
    """Valid left-truncated datasets with at least one event and some tied times."""
    n = draw(st.integers(min_n, max_n))
    grid = st.sampled_from([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0])
    cont = st.floats(0.05, 5.0, allow_nan=False)
    y = np.array([draw(st.one_of(grid, cont)) for _ in range(n)])
    frac = np.array([draw(st.floats(0.0, 0.95)) for _ in range(n)])
    a = np.round(y * frac, 6)
    delta = np.array([draw(st.integers(0, 1)) for _ in range(n)])
    delta[draw(st.integers(0, n - 1))] = 1
    z = np.array([[draw(st.floats(-2, 2, allow_nan=False)) for _ in range(p)] for _ in range(n)])
    return Dataset(a, y, delta, z)


ACCEPTANCE_LINES = []


def record_acceptance(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
