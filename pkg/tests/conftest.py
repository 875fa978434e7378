import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hiddengenome.simulate import SimConfig, generate_cohort
from hiddengenome.solver import FitProblem

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_problem(rng, n=60, q=6, K=3, density=0.3, binary=True) -> FitProblem:
    """Small scaled problem with every class present."""
    if binary:
        raw = (rng.random((n, q)) < density).astype(float)
    else:
        raw = rng.poisson(1.5, size=(n, q)).astype(float)
    y = np.r_[np.arange(K), rng.integers(0, K, n - K)]
    names = [f"v{j}" for j in range(q)]
    return FitProblem.from_columns(raw, y, K, names, ["variant"] * q)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sim():
    cfg = SimConfig(n_classes=3, n_train=240, n_test=60, n_recorded=400, n_unseen=80, n_genes=12,
                    n_offroster_genes=3, mutations_per_tumor=12, seed=3)
    return generate_cohort(cfg)


# -- acceptance summary --------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
