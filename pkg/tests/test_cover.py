import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conedet import series
from conedet.cover import (
    CoverGeometry,
    RationalMap,
    critical_data,
    distinguished_param,
    example_deg2,
    identity_map,
    pullback_factor,
)
from conedet.cover import _local_parameter
from conedet.errors import (
    CriticalValueAtConePoint,
    CriticalValueAtInfinity,
    DegenerateModuli,
    EvaluationAtConePoint,
    InvalidRationalMap,
    NonSimpleCriticalPoint,
)
from conedet.metric import ConicalMetricSpec, eval_rho

moduli = st.complex_numbers(max_magnitude=4.0, allow_nan=False, allow_infinity=False)


def test_deg2_values():
    f = example_deg2(0, 1)
    assert f(0) == 0
    assert f.value_at(1, 0) == 1
    assert f(1) == pytest.approx(0.5)
    assert example_deg2(1j, 2 + 1j)(0) == 1j


def test_deg2_critical_data():
    pts, vals = critical_data(example_deg2(0, 1))
    assert sorted(p[0] for p in pts) == [0, 1]
    assert all(abs(w) < 1e-14 for _, w in pts)
    assert sorted(v.real for v in vals) == pytest.approx([0.0, 1.0])


def test_degenerate_moduli():
    with pytest.raises(DegenerateModuli):
        example_deg2(1, 1)


@pytest.mark.parametrize("num, den", [((0, 0, 1), (1,)), ((3, 0, 1), (1,))])
def test_critical_value_at_infinity(num, den):
    with pytest.raises(CriticalValueAtInfinity):
        critical_data(RationalMap(num, den))


def test_invalid_maps():
    with pytest.raises(InvalidRationalMap):
        RationalMap((1, 1), (1, 1))
    with pytest.raises(InvalidRationalMap):
        RationalMap((2,), (1,))
    with pytest.raises(NonSimpleCriticalPoint):
        critical_data(RationalMap((0, 0, 0, 1), (1, 0, 0, 0.5)))


def test_critical_value_on_metric_cone(flat_metric):
    with pytest.raises(CriticalValueAtConePoint):
        CoverGeometry.build(example_deg2(0, 0.5j), flat_metric)


def test_pullback_examples(deg2_geom, sphere_geom, round_metric):
    assert pullback_factor(deg2_geom, 1.0) == pytest.approx(0.64)
    assert pullback_factor(sphere_geom, 0.3 + 0.2j) == pytest.approx(eval_rho(round_metric, 0.3 + 0.2j))
    with pytest.raises(EvaluationAtConePoint):
        pullback_factor(deg2_geom, 0.0)


def test_pullback_vanishes_quadratically(deg2_geom):
    # f = w^2/(w^2+1): f*rho ~ rho(0) |2w|^2 = 16 |w|^2
    ratios = []
    for r in (1e-2, 5e-3, 2.5e-3):
        w = r * np.exp(2j * np.pi * np.arange(8) / 8)
        ratios.append(np.mean(deg2_geom.density(w, 0)) / r**2)
    assert abs(ratios[2] - ratios[1]) < 0.5 * abs(ratios[1] - ratios[0]) + 1e-12
    assert ratios[-1] == pytest.approx(16.0, rel=1e-3)


def test_distinguished_parameter_deg2(deg2_geom):
    x, w = distinguished_param(deg2_geom, 0, order=8)
    assert x[:6] == pytest.approx([0, 1, 0, -0.5, 0, 0.375], abs=1e-12)
    lp = deg2_geom.local_parameter(0)
    assert lp.alpha == pytest.approx(1.0)


def test_distinguished_parameter_trivial():
    # f(w) = w^2 + z_k has x(w) = w exactly
    lp = _local_parameter(RationalMap((0.3, 0, 1), (1,)), 0, 0j, 0.3, 10, 1.0)
    assert lp.x_series == pytest.approx(series.trunc([0, 1], 10), abs=1e-15)
    assert lp.alpha == 1


def test_inverse_series_composition(deg2_geom):
    order = 12
    x, w = distinguished_param(deg2_geom, 1, order=order)
    ident = series.compose(x, w, order)
    assert ident[:order] == pytest.approx(series.trunc([0, 1], order), abs=1e-10)


def test_inverse_parameter(deg2_geom):
    lp = deg2_geom.local_parameter(0)
    x = 0.05 * np.exp(1j * np.linspace(0, 2 * np.pi, 7))
    assert lp.x_of(lp.w_of(x)) == pytest.approx(x, abs=1e-13)
    # x^2 = f - z_k on the nose
    w = lp.w_of(x)
    assert x**2 == pytest.approx(deg2_geom.map(w) - lp.z_k, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(z1=moduli, z2=moduli)
def test_riemann_hurwitz(z1, z2):
    if abs(z1 - z2) < 1e-3:
        return
    f = example_deg2(z1, z2)
    pts, vals = critical_data(f)
    # genus 0: M = 2N - 2
    assert len(pts) == 2 * f.degree - 2
    assert sorted(vals, key=lambda v: abs(v - z1))[0] == pytest.approx(z1, abs=1e-9 * (1 + abs(z1)))
    assert len(f.preimages(0.5 * (z1 + z2) + 0.1)) == f.degree


def test_identity_cover_has_no_cones(sphere_geom):
    assert sphere_geom.n_critical == 0
    assert sphere_geom.degree == 1
    assert identity_map().degree == 1
