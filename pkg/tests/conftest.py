import numpy as np
import pytest

from conedet import fem
from conedet import mesh as meshing
from conedet.cover import CoverGeometry, example_deg2, identity_map
from conedet.metric import ConicalMetricSpec

FLAT_POINTS = (0.0, 1.0, -1.0)
FLAT_BETAS = (-2.0 / 3.0,) * 3


@pytest.fixture(scope="session")
def round_metric():
    return ConicalMetricSpec.round()


@pytest.fixture(scope="session")
def flat_metric():
    return ConicalMetricSpec.flat_conical(FLAT_POINTS, FLAT_BETAS)


@pytest.fixture(scope="session")
def sphere_geom(round_metric):
    return CoverGeometry.build(identity_map(), round_metric)


@pytest.fixture(scope="session")
def deg2_geom(round_metric):
    return CoverGeometry.build(example_deg2(0, 1), round_metric)


@pytest.fixture(scope="session")
def sphere_meshes(sphere_geom):
    """Uniform round-sphere mesh at h = 0.2 and its two refinements."""
    out = [meshing.build_mesh(sphere_geom, 0.2)]
    for _ in range(2):
        out.append(meshing.refine(out[-1]))
    return out


@pytest.fixture(scope="session")
def deg2_mesh(deg2_geom):
    return meshing.refine(meshing.build_mesh(deg2_geom, 0.2, q=8))


@pytest.fixture(scope="session")
def deg2_op(deg2_mesh, deg2_geom):
    return fem.assemble(deg2_mesh, deg2_geom)


@pytest.fixture(scope="session")
def deg2_spectrum(deg2_op):
    return fem.eigensolve(deg2_op, 30)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
