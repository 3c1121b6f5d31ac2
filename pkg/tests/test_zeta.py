import mpmath
import numpy as np
import pytest

from conedet import fem, zeta
from conedet import mesh as meshing
from conedet.errors import TailDominatedError


def round_log_det_oracle():
    """``1/2 - 4 zeta_R'(-1)`` with ``zeta_R'(-1) = 1/12 - ln A`` (Glaisher's A)."""
    mpmath.mp.dps = 30
    zp = mpmath.mpf(1) / 12 - mpmath.log(mpmath.glaisher)
    assert abs(zp - mpmath.zeta(-1, derivative=1)) < 1e-25
    return float(mpmath.mpf(1) / 2 - 4 * zp)


@pytest.fixture(scope="module")
def round_exact():
    return zeta.round_sphere_spectrum(200)


@pytest.fixture(scope="module")
def deg2_fem_spectrum(deg2_geom):
    m = meshing.refine(meshing.refine(meshing.build_mesh(deg2_geom, 0.2, q=8)))
    op = fem.assemble(m, deg2_geom)
    return fem.eigensolve(op, 150, v0=np.ones(op.n)).eigenvalues


def test_oracle_value():
    assert round_log_det_oracle() == pytest.approx(1.1616846, abs=1e-7)


def test_heat_trace_basics():
    assert zeta.heat_trace([0.0, 1.0], 1.0) == pytest.approx(np.exp(-1))
    vals = zeta.heat_trace([0.0, 1.0, 3.0, 3.0], np.array([0.1, 1.0, 10.0, 100.0]))
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-40
    _, stale = zeta.heat_trace([0.0, 1.0, 100.0], 0.01, return_flag=True)
    assert stale
    with pytest.raises(ValueError):
        zeta.heat_trace([0.0, 1.0], 0.0)


def test_round_heat_trace_expansion(round_exact):
    t = 0.05
    assert zeta.heat_trace(round_exact, t) + 1 == pytest.approx(1 / t + 1 / 3 + t / 15, abs=1e-4)


def test_round_fit_coefficients(round_exact):
    fit = zeta.fit_short_time(round_exact)
    assert fit.coeffs[-1.0] == pytest.approx(1.0, abs=1e-6)
    assert fit.coeffs[0.0] == pytest.approx(-2 / 3, abs=1e-4)
    assert abs(fit.c_log) < 1e-3
    for p in (-0.5, 0.5):
        assert abs(fit.coeffs[p]) < 1e-4


def test_half_integer_recovery():
    t = np.geomspace(0.01, 0.1, 40)
    coeffs, _, res = zeta._lstsq(t, t**-1 + 0.5 * t**-0.5, zeta.BASIS, False, {})
    assert coeffs[-1.0] == pytest.approx(1.0, abs=1e-9)
    assert coeffs[-0.5] == pytest.approx(0.5, abs=1e-9)
    assert all(abs(coeffs[p]) < 1e-8 for p in (0.0, 0.5, 1.0))
    assert res < 1e-10


def test_single_eigenvalue_exact():
    r = zeta.zeta_det([0.0, 7.5], exact=True)
    assert r.log_det == pytest.approx(np.log(7.5))
    assert r.zeta0 == 1.0


def test_round_log_det(round_exact):
    r = zeta.zeta_det(round_exact)
    assert abs(r.log_det - round_log_det_oracle()) < 1e-3
    assert abs(r.log_det - round_log_det_oracle()) < 3 * r.error_estimate + 1e-5
    assert r.zeta0 == pytest.approx(-2 / 3, abs=1e-4)


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_scaling_law(round_exact, c):
    base = zeta.zeta_det(round_exact)
    scaled = zeta.zeta_det(c * round_exact)
    expected = base.zeta_prime0 - np.log(c) * base.zeta0
    assert abs(scaled.zeta_prime0 - expected) <= max(2 * base.error_estimate, 1e-3)


def test_truncation_stability():
    small = zeta.zeta_det(zeta.round_sphere_spectrum(100))
    large = zeta.zeta_det(zeta.round_sphere_spectrum(200))
    assert abs(large.log_det - small.log_det) < small.error_estimate


def test_window_checks(round_exact):
    tm = zeta.t_min(round_exact)
    assert tm == pytest.approx(8 / 200 / 201)
    with pytest.raises(TailDominatedError):
        zeta.fit_short_time(round_exact, t_window=(0.5 * tm, 0.1))
    with pytest.raises(TailDominatedError):
        zeta.fit_short_time(round_exact, t_window=(0.1, 0.05))


def test_fem_weyl_and_log_term(deg2_fem_spectrum):
    fit = zeta.fit_short_time(deg2_fem_spectrum, powers=zeta.FEM_BASIS)
    # degree-2 cover of the unit sphere: Vol / 4 pi = 2
    assert fit.coeffs[-1.0] == pytest.approx(2.0, rel=0.02)
    assert abs(fit.c_log) < 3 * fit.c_log_err
    pinned = {-1.0: 2.0, 0.0: zeta.cone_zeta0([4 * np.pi] * 2)}
    fit = zeta.fit_short_time(deg2_fem_spectrum, powers=zeta.FEM_BASIS, pinned=pinned)
    assert abs(fit.c_log) < 3 * fit.c_log_err
    # the free t^0 coefficient is consistent with the cone formula
    free = zeta.fit_short_time(deg2_fem_spectrum, powers=zeta.FEM_BASIS)
    assert abs(free.coeffs[0.0] - pinned[0.0]) < 3 * free.errors[0.0]


def test_nuisance_has_no_continuation_constant(round_exact):
    full = zeta.zeta_det(round_exact, powers=zeta.FEM_BASIS)
    nuis = zeta.zeta_det(round_exact, powers=zeta.FEM_BASIS, nuisance=zeta.FEM_NUISANCE)
    a = full.coeffs[-2.0]
    assert nuis.log_det - full.log_det == pytest.approx(a / -2.0, abs=1e-12)
    assert abs(nuis.log_det - round_log_det_oracle()) < 1e-2


def test_cone_zeta0():
    assert zeta.cone_zeta0([]) == pytest.approx(-2 / 3)
    # deg2 over the round sphere: two 4 pi cones
    assert zeta.cone_zeta0([4 * np.pi] * 2) == pytest.approx(-7 / 12)
    # deg2 over the flat metric: also six preimages of the 2 pi / 3 cones
    assert zeta.cone_zeta0([4 * np.pi] * 2 + [2 * np.pi / 3] * 6) == pytest.approx(1 / 12)
    # a 2 pi cone is no cone
    assert zeta.cone_zeta0([2 * np.pi]) == pytest.approx(-2 / 3)
    with pytest.raises(ValueError):
        zeta.cone_zeta0([0.0])


def test_result_json(round_exact):
    import json
    d = json.loads(zeta.zeta_det(round_exact).to_json(label="x"))
    assert d["label"] == "x" and "-1.0" in d["coeffs"]
