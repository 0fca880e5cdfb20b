import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mtm_ist.lattice import gaussian_potential, make_spectral_grid, make_xgrid  # noqa: E402

ACCEPTANCE_LINES = []


def record_acceptance(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def canonical_grid():
    return make_xgrid(20.0, 4001)


@pytest.fixture(scope="session")
def canonical_potential(canonical_grid):
    return gaussian_potential(canonical_grid, 0.2, 0.1)


@pytest.fixture(scope="session")
def canonical_spectral():
    return make_spectral_grid(16.0, 512)


@pytest.fixture(scope="session")
def canonical_scattering(canonical_potential, canonical_spectral):
    from mtm_ist.direct import compute_scattering
    return compute_scattering(canonical_potential, canonical_spectral)


@pytest.fixture(scope="session")
def canonical_reflections(canonical_scattering):
    from mtm_ist.spectra import reflections_from_scattering
    return reflections_from_scattering(canonical_scattering)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
