import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conedet.errors import EvaluationAtSingularity, InvalidChart, InvalidMetric
from conedet.metric import (
    ConicalMetricSpec,
    SmoothFactor,
    curvature,
    eval_rho,
    linear_factor,
    round_bump_factor,
    volume,
    volume_by_chart,
)

from .conftest import FLAT_BETAS, FLAT_POINTS


def flat_volume_oracle():
    """Volume of the flat metric with three -2/3 cones at 0, 1, -1.

    The metric is the double of an equilateral triangle whose side is the
    Schwarz-Christoffel length of [0, 1].
    """
    mpmath.mp.dps = 30
    side = mpmath.quad(lambda x: x ** (-2 / mpmath.mpf(3)) * (1 - x) ** (-2 / mpmath.mpf(3))
                       * (1 + x) ** (-2 / mpmath.mpf(3)), [0, 0.5, 1])
    return float(mpmath.sqrt(3) / 2 * side**2)


def test_round_rho_examples(round_metric):
    assert eval_rho(round_metric, 0) == pytest.approx(4.0)
    assert eval_rho(round_metric, 1) == pytest.approx(1.0)
    assert eval_rho(round_metric, 0, chart=1) == pytest.approx(4.0)


def test_rho_rejects_cone_point_and_bad_chart(flat_metric, round_metric):
    with pytest.raises(EvaluationAtSingularity):
        eval_rho(flat_metric, 1.0)
    with pytest.raises(InvalidChart):
        eval_rho(round_metric, 0.5, chart=2)


@pytest.mark.parametrize("betas", [(-2 / 3, -2 / 3, -1 / 3), (-1.0, -0.5, -0.5), (0.0, -1.0, -1.0)])
def test_invalid_flat_metrics(betas):
    with pytest.raises(InvalidMetric):
        ConicalMetricSpec.flat_conical(FLAT_POINTS, betas)


def test_round_volume():
    vol, err = volume(ConicalMetricSpec.round(), return_error=True)
    assert vol == pytest.approx(4 * np.pi, abs=1e-6)
    assert err < 1e-6


def test_round_volume_levels_agree():
    spec = ConicalMetricSpec.round()
    v2, e2 = volume(spec, quad_level=2, return_error=True)
    v3 = volume(spec, quad_level=3)
    assert abs(v3 - v2) <= max(e2, 1e-12) * 10


def test_round_hemispheres():
    v0, v1 = volume_by_chart(ConicalMetricSpec.round())
    assert v0 == pytest.approx(2 * np.pi, rel=1e-6)
    assert v1 == pytest.approx(2 * np.pi, rel=1e-6)


def test_flat_volume_against_triangle_oracle(flat_metric):
    assert volume(flat_metric) == pytest.approx(flat_volume_oracle(), rel=1e-4)


def test_curvature(round_metric, flat_metric):
    assert curvature(round_metric, 0.3 + 0.1j) == 1.0
    assert curvature(flat_metric, 0.3 + 0.4j) == 0.0
    assert curvature(ConicalMetricSpec.custom(linear_factor(0.5)), 0.2 + 0.1j) == 0.0
    # finite-difference path: a non-flagged harmonic factor and a round factor
    harmonic = SmoothFactor(lambda z: 0.5 * np.asarray(z).real)
    assert abs(curvature(ConicalMetricSpec.custom(harmonic), 0.2 + 0.1j)) < 1e-5
    assert curvature(ConicalMetricSpec.custom(round_bump_factor(0.0)), 0.4 - 0.2j) == pytest.approx(1.0, abs=1e-4)


def _metrics():
    return [
        ConicalMetricSpec.round(),
        ConicalMetricSpec.flat_conical(FLAT_POINTS, FLAT_BETAS),
        ConicalMetricSpec.custom(round_bump_factor(0.3)),
    ]


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.2, 5.0), th=st.floats(0, 2 * np.pi), which=st.integers(0, 2))
def test_chart_transition(r, th, which):
    # rho_1(v) |dv|^2 = rho_0(z) |dz|^2 with v = 1/z, |dv| = |dz| / |z|^2
    spec = _metrics()[which]
    z = r * np.exp(1j * th)
    if min(abs(z - p) for p in FLAT_POINTS) < 1e-3:
        return
    lhs = eval_rho(spec, 1 / z, chart=1) / abs(z) ** 4
    assert lhs == pytest.approx(eval_rho(spec, z), rel=1e-9)
