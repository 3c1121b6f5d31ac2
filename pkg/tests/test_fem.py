import numpy as np
import pytest

from conedet import fem
from conedet import mesh as meshing
from conedet.harness import lambda_groups


def test_sphere_first_eigenvalue(sphere_meshes, sphere_geom):
    errs = []
    for m in sphere_meshes:
        sp = fem.eigensolve(fem.assemble(m, sphere_geom), 3)
        errs.append(abs(sp.eigenvalues[1:4] - 2.0).max() / 2.0)
    assert errs[-1] < 0.005
    # P1 eigenvalues converge at O(h^2)
    for a, b in zip(errs, errs[1:]):
        assert 3.0 < a / b < 5.0


def test_sphere_multiplicities(sphere_meshes, sphere_geom):
    sp = fem.eigensolve(fem.assemble(sphere_meshes[2], sphere_geom), 24)
    groups = lambda_groups(sp.eigenvalues, rel_gap=0.01)
    assert [len(g) for g in groups] == [1, 3, 5, 7, 9]
    for ell, g in enumerate(groups):
        assert sp.eigenvalues[g] == pytest.approx(ell * (ell + 1), rel=0.02, abs=1e-9)


def test_constants_and_volume(deg2_op):
    one = np.ones(deg2_op.n)
    assert np.abs(deg2_op.K @ one).max() < 1e-12 * abs(deg2_op.K).max()
    # degree-2 cover of the unit sphere
    assert deg2_op.volume == pytest.approx(8 * np.pi, rel=0.005)


def test_spectrum_contract(deg2_op, deg2_spectrum):
    V = deg2_spectrum.eigenvectors
    gram = V.T @ (deg2_op.M @ V)
    assert np.abs(gram - np.eye(V.shape[1])).max() < 1e-8
    assert deg2_spectrum.residuals.max() < 1e-8
    assert abs(deg2_spectrum.eigenvalues[0]) < 1e-10
    assert np.all(np.diff(deg2_spectrum.eigenvalues) >= 0)


def test_sparse_and_dense_agree(deg2_op, deg2_spectrum, monkeypatch):
    monkeypatch.setattr(fem, "DENSE_LIMIT", 0)
    sp = fem.eigensolve(deg2_op, 30, v0=np.ones(deg2_op.n))
    assert sp.eigenvalues == pytest.approx(deg2_spectrum.eigenvalues, rel=1e-9, abs=1e-10)


def test_cone_eigenvalue_decreases(deg2_geom):
    m = meshing.build_mesh(deg2_geom, 0.2, q=8)
    lam1 = []
    for _ in range(3):
        lam1.append(fem.eigensolve(fem.assemble(m, deg2_geom), 1).eigenvalues[1])
        m = meshing.refine(m)
    # conforming elements approach the Friedrichs eigenvalue from above
    assert lam1[0] > lam1[1] > lam1[2] > 0.37
    assert (lam1[1] - lam1[2]) < (lam1[0] - lam1[1])


def test_solve_shifted(deg2_op, deg2_spectrum, rng):
    lam = -0.7
    assert not np.any(fem.solve_shifted(deg2_op, lam, np.zeros(deg2_op.n)))
    for j in (1, 5, 20):
        phi = deg2_spectrum.eigenvectors[:, j]
        u = fem.solve_shifted(deg2_op, lam, phi)
        assert u == pytest.approx(phi / (deg2_spectrum.eigenvalues[j] - lam), abs=1e-9)
    rhs = rng.standard_normal(deg2_op.n) + 1j * rng.standard_normal(deg2_op.n)
    u = fem.solve_shifted(deg2_op, lam, rhs)
    r = (deg2_op.K - lam * deg2_op.M) @ u - deg2_op.M @ rhs
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(deg2_op.M @ rhs)
    with pytest.raises(ValueError):
        fem.solve_shifted(deg2_op, 0.5, rhs)


def test_cutoff():
    r = np.array([0.0, 0.1, 0.15, 0.2, 0.3])
    chi, d1, _ = fem.cutoff(r, 0.1)
    assert chi == pytest.approx([1, 1, 0.5, 0, 0])
    assert d1[0] == 0 and d1[-1] == 0


def test_Y_singular_part_is_local(deg2_op, deg2_geom):
    Y = fem.build_Y(deg2_op, deg2_geom, 0, -1.0)
    assert Y.mu == 0.0
    lp = deg2_geom.local_parameter(0)
    far = lp.w_of(np.array([2.5 * Y.delta]))
    assert Y.singular(far, lp.chart) == pytest.approx(0.0, abs=1e-15)
    near = lp.w_of(np.array([0.3 * Y.delta]))
    assert Y.singular(near, lp.chart) * 0.3 * Y.delta == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ValueError):
        fem.build_Y(deg2_op, deg2_geom, 0, 1.0)
    with pytest.raises(ValueError):
        fem.build_Y(deg2_op, deg2_geom, 0, -1.0, ansatz="other")
