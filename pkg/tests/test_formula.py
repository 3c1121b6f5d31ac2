import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conedet.errors import DegenerateModuli
from conedet.formula import DEG2, TauProvider, log_C, log_rhs_genus0, rhs_genus0, tau_deg2
from conedet.metric import ConicalMetricSpec, SmoothFactor

moduli = st.complex_numbers(max_magnitude=10.0, allow_nan=False, allow_infinity=False)


def scaled_round(c):
    return ConicalMetricSpec.custom(
        SmoothFactor(lambda z: np.log(2.0) - np.log1p(np.abs(z) ** 2) + 0.5 * np.log(c)))


def test_tau_examples():
    assert abs(tau_deg2(0, 1)) ** 2 == pytest.approx(1.0)
    assert abs(tau_deg2(0, 16)) ** 2 == pytest.approx(4.0)
    with pytest.raises(DegenerateModuli):
        tau_deg2(2.0, 2.0)
    with pytest.raises(DegenerateModuli):
        TauProvider(lambda a, b: 0.0)((0, 1))


def test_rhs_examples(round_metric):
    assert rhs_genus0(DEG2, round_metric, (0, 1)) == pytest.approx(2 ** 0.25)
    assert rhs_genus0(DEG2, round_metric, (0, 2)) == pytest.approx(np.sqrt(2) * (16 / 25) ** 0.125)
    # a precomputed tau gives the same value
    assert rhs_genus0(tau_deg2(0, 2), round_metric, (0, 2)) == pytest.approx(
        rhs_genus0(DEG2, round_metric, (0, 2)))


def test_log_C():
    assert log_C(np.log(3.0), 3.0) == pytest.approx(0.0)
    assert log_C(1.5 + 0.25, 2.0) == pytest.approx(log_C(1.5, 2.0) + 0.25)
    with pytest.raises(ValueError):
        log_C(1.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(z1=moduli, z2=moduli)
def test_tau_symmetry(z1, z2):
    if abs(z1 - z2) < 1e-6:
        return
    assert abs(tau_deg2(z1, z2)) ** 2 == pytest.approx(abs(tau_deg2(z2, z1)) ** 2, rel=1e-12)
    assert abs(tau_deg2(z1, z2)) ** 4 == pytest.approx(abs(z1 - z2), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(z1=moduli, z2=moduli, c=st.floats(0.1, 10.0))
def test_rhs_homogeneity(z1, z2, c):
    if abs(z1 - z2) < 1e-6:
        return
    base = rhs_genus0(DEG2, ConicalMetricSpec.round(), (z1, z2))
    # two critical values: rho -> c rho scales the product by c^(2/8)
    assert rhs_genus0(DEG2, scaled_round(c), (z1, z2)) == pytest.approx(base * c**0.25, rel=1e-9)
    assert log_rhs_genus0(DEG2, ConicalMetricSpec.round(), (z1, z2)) == pytest.approx(np.log(base), abs=1e-12)
