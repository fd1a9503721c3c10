from __future__ import annotations

import numpy as np
import pytest

from biotplate.cells import ElasticityTensor, solve_cells
from biotplate.effective import compute_coefficients
from biotplate.geometry import build_cell_geometry, generate_periodic_cell_mesh


@pytest.fixture(scope="session")
def iso():
    return ElasticityTensor.isotropic(1.0, 1.0)


@pytest.fixture(scope="session")
def cavity_geom():
    return build_cell_geometry("cavity", center=(0.5, 0.0), radius=0.25)


@pytest.fixture(scope="session")
def channel_geom():
    return build_cell_geometry("channel", band=(-0.3, 0.3))


@pytest.fixture(scope="session")
def cavity_mesh(cavity_geom):
    return generate_periodic_cell_mesh(cavity_geom, 0.1)


@pytest.fixture(scope="session")
def channel_mesh(channel_geom):
    return generate_periodic_cell_mesh(channel_geom, 0.1)


@pytest.fixture(scope="session")
def cavity_cells(cavity_mesh, iso):
    return solve_cells(cavity_mesh, iso)


@pytest.fixture(scope="session")
def channel_cells(channel_mesh, iso):
    return solve_cells(channel_mesh, iso)


@pytest.fixture(scope="session")
def cavity_coeffs(cavity_cells, cavity_geom):
    return compute_coefficients(cavity_cells, cavity_geom.to_dict())


@pytest.fixture(scope="session")
def channel_coeffs(channel_cells, channel_geom):
    return compute_coefficients(channel_cells, channel_geom.to_dict())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def coarse_channel(channel_geom):
    """Channel cell at h = 0.5: a layer on (0, 0.5) at eps = 1/4 has 188 velocity dofs."""
    return generate_periodic_cell_mesh(channel_geom, 0.5)


@pytest.fixture(scope="session")
def coarse_cavity():
    geom = build_cell_geometry("cavity", center=(0.5, 0.0), radius=0.3)
    return geom, generate_periodic_cell_mesh(geom, 0.5)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict line and return whether it passed."""
    def report(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
