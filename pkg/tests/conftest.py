import numpy as np
import pytest

from signorini_lab.coefficients import identity
from signorini_lab.fields import GridSpec, sample_function
from signorini_lab.geometry import library_by_lambda
from signorini_lab.solver import SolverConfig, assemble, solve_signorini


@pytest.fixture(scope="session")
def w32():
    return library_by_lambda(1.5)


@pytest.fixture(scope="session")
def w2():
    return library_by_lambda(2.0)


@pytest.fixture(scope="session")
def lib_fields():
    """Sampled library fields keyed by (lambda, n)."""
    cache = {}

    def get(lam, n=129):
        key = (lam, n)
        if key not in cache:
            w = library_by_lambda(lam)
            cache[key] = sample_function(GridSpec.uniform(2, n), w.value, even=True, name=f"w{lam}")
        return cache[key]
    return get


@pytest.fixture(scope="session")
def solved_w32_identity(w32):
    g = GridSpec.uniform(2, 129)
    mf = identity(2)
    data = sample_function(g, w32.value, even=True)
    u, rep = solve_signorini(assemble(mf, g), data, SolverConfig(omega="auto"))
    return u, rep, mf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
