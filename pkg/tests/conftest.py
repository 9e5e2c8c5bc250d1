import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from osassl.core import CovariateEntry, CovariateSchema, Panel
from osassl.synthgen import GeneratorSpec, generate

settings.register_profile("repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def toy_panel(T=6, A=8, seed=0, p_declared=0.7, categorical=True):
    """Small random panel with two continuous x, an optional 3-level zone and two z columns."""
    rng = np.random.default_rng(seed)
    entries = [CovariateEntry("a"), CovariateEntry("b")]
    if categorical:
        entries.append(CovariateEntry("zone", kind="categorical", levels=3))
    entries += [CovariateEntry("s1", role="z"), CovariateEntry("s2", role="z")]
    schema = CovariateSchema(entries)
    px = len(schema.x_names)
    x = rng.uniform(size=(T, A, px))
    if categorical:
        x[..., 2] = rng.integers(0, 3, size=(T, A))
    z = rng.uniform(size=(T, A, 2))
    d = rng.uniform(size=(T, A)) < p_declared
    y = np.where(d, 1 + 3 * x[..., 0] + z[..., 0] + rng.uniform(size=(T, A)), 0.0)
    return Panel(schema, np.arange(A), np.arange(1, T + 1), x, z, y, d, cost_bound=10.0)


@pytest.fixture
def panel():
    return toy_panel()


@pytest.fixture(scope="session")
def synthetic():
    return generate(GeneratorSpec(n_cities=40, n_times=10, seed=7))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
