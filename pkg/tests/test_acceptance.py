"""Acceptance suite: one PASS/FAIL line per criterion.

The long experiments run from the shipped configs in ``configs/`` so that the
numbers here are the ones the CLI reproduces.  Lines are printed in the
terminal summary; run ``pytest tests/test_acceptance.py -v``.
"""
from pathlib import Path

import mpmath
import numpy as np
import pytest

from conedet import asymptotics, fem, harness, zeta
from conedet import mesh as meshing
from conedet.cover import CoverGeometry, example_deg2, identity_map
from conedet.metric import ConicalMetricSpec

from .conftest import ACCEPTANCE_LINES

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

pytestmark = pytest.mark.slow


def report(n, ok, detail):
    ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[n])
    return ok


def run(name, fn):
    return fn(harness.load_config(path=str(CONFIGS / name)))


@pytest.fixture(scope="module")
def constancy():
    return {"round": run("constancy_round.ini", harness.run_constancy),
            "flat": run("constancy_flat.ini", harness.run_constancy)}


@pytest.fixture(scope="module")
def binfty():
    return run("binfty_round.ini", harness.run_binfty)


def test_criterion_1_round_oracle():
    mpmath.mp.dps = 30
    ref = float(mpmath.mpf(1) / 2 - 4 * (mpmath.mpf(1) / 12 - mpmath.log(mpmath.glaisher)))
    res = zeta.zeta_det(zeta.round_sphere_spectrum(200))
    err = abs(res.log_det - ref)
    assert report(1, err <= 1e-3, f"log Det' = {res.log_det:.7f}, reference {ref:.7f}, |err| = {err:.2e} (tol 1e-3)")


def test_criterion_2_fem_oracle():
    geom = CoverGeometry.build(identity_map(), ConicalMetricSpec.round())
    m = meshing.build_mesh(geom, 0.2)
    errs = []
    for level in range(3):
        lam = fem.eigensolve(fem.assemble(m, geom), 4).eigenvalues
        errs.append(float(np.max(np.abs(lam[1:4] - 2.0)) / 2.0))
        mult_ok = abs(lam[4] - 2.0) > 1.0
        m = meshing.refine(m)
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = errs[-1] <= 0.005 and mult_ok and all(3.0 <= r <= 5.0 for r in ratios)
    assert report(2, ok, f"lambda_1 rel err {errs[-1]:.2e} after two refinements (tol 5e-3), "
                         f"contraction {', '.join(f'{r:.2f}' for r in ratios)}, multiplicity 3")


def test_criterion_3_constancy(constancy):
    parts = []
    ok = True
    for key, res in constancy.items():
        s = res.summary
        ok &= bool(s["passed"])
        parts.append(f"{key}: spread {s['spread']:.4f} over {s['n_ok']}/{s['n_points']} points")
    assert report(3, ok, "; ".join(parts) + " (tol 0.05)")


def test_criterion_4_b_infinity(binfty):
    s = binfty.summary
    ok = (abs(s["b_ref"] - 0.25) < 1e-12 and s["slope_passed"] and s["final_passed"])
    errs = ", ".join(f"{r['abs_err']:.1e}" for r in binfty.rows)
    assert report(4, ok, f"b_ref = {s['b_ref'].real:.4f}, slope {s['slope']:.3f} +- {s['slope_ci95']:.3f} "
                         f"(target -0.5 +- 0.15), final rel err {s['final_rel_err']:.1e} (tol 2e-2); "
                         f"|b - b_ref| along ladder: {errs}")


def test_criterion_5_derivative_rule(binfty):
    s = binfty.summary
    _, rows = binfty.extra["derivative"]
    detail = ", ".join(f"lambda={r['lam']:g}: {r['rel_err']:.1e}" for r in rows)
    assert report(5, len(rows) >= 3 and s["derivative_passed"], f"rel err {detail} (tol 2e-2)")


def test_criterion_6_sum_rule():
    res = run("sumrule_round.ini", harness.run_sumrule)
    s = res.summary
    assert report(6, s["passed"], f"gap at J={s['J']}: {s['gap']:.3f} (tol 0.05); "
                                  f"J^-1/2 extrapolated {s['gap_extrapolated']:.4f}; bilinear gap "
                                  f"{s['gap_bilinear']:.2f}; monotone {s['monotone']}; n_theta doubling "
                                  f"changes gap by {s['n_theta_doubling_change']:.1e}")


def test_criterion_7_perturbation():
    res = run("perturbation_round.ini", harness.run_perturbation)
    s = res.summary
    assert report(7, s["passed"], f"{s['n_groups']} coupled groups, max rel err {s['max_rel_err']:.3f} "
                                  f"(tol 0.05); {s['null_groups']} uncoupled groups with "
                                  f"|fd|/scale <= {s['null_max_abs_over_scale']:.1e}")


def test_criterion_8_log_term(constancy):
    sig = []
    for res in constancy.values():
        sig += [abs(r["c_log"]) / r["c_log_err"] for r in res.rows if r["status"] == "ok"]
    assert report(8, len(sig) >= 8 and max(sig) < 3.0,
                  f"|C_log|/sigma over {len(sig)} conical FEM spectra: max {max(sig):.2f} (tol 3)")


def test_criterion_9_structural():
    geom = CoverGeometry.build(example_deg2(0, 1), ConicalMetricSpec.round())
    m = meshing.refine(meshing.refine(meshing.build_mesh(geom, 0.2, q=8)))
    op = fem.assemble(m, geom)
    checks = {}
    checks["euler"] = m.euler_characteristic() == 2
    checks["watertight"] = m.boundary_edge_count() == 0
    checks["K1"] = float(np.abs(op.K @ np.ones(op.n)).max()) < 1e-10
    vol_err = abs(op.volume - 8 * np.pi) / (8 * np.pi)
    checks["volume"] = vol_err <= 0.005
    # scaling law: default window on the exact spectrum; on the FEM spectrum the
    # window is capped at t = 1 so it is carried along as t -> t / c
    sp = fem.eigensolve(op, 150, v0=np.ones(op.n))
    fem_kw = dict(powers=zeta.FEM_BASIS, nuisance=zeta.FEM_NUISANCE)
    scale_dev, capped_dev = 0.0, 0.0
    exact = zeta.round_sphere_spectrum(200)
    base_e, base_f = zeta.zeta_det(exact), zeta.zeta_det(sp.eigenvalues, **fem_kw)
    for c in (0.5, 2.0, 10.0):
        for base, lam, kw in ((base_e, exact, {}),
                              (base_f, sp.eigenvalues, dict(fem_kw, t_window=np.array(base_f.t_window) / c))):
            got = zeta.zeta_det(c * np.asarray(lam), **kw).zeta_prime0
            dev = abs(got - (base.zeta_prime0 - np.log(c) * base.zeta0))
            scale_dev = max(scale_dev, dev / max(2 * base.error_estimate, 1e-3))
        got = zeta.zeta_det(c * sp.eigenvalues, **fem_kw).zeta_prime0
        dev = abs(got - (base_f.zeta_prime0 - np.log(c) * base_f.zeta0))
        capped_dev = max(capped_dev, dev / (2 * base_f.error_estimate))
    checks["scaling"] = scale_dev <= 1.0
    # branch flip x -> -x: b -> -b on a real eigenfunction, b^2 unchanged
    lp = geom.local_parameter(1)
    loc = asymptotics.Locator(m)
    phi = sp.eigenvectors[:, 1]
    direct = lambda w, chart: loc.interpolate(phi, w, chart)
    flipped = lambda w, chart: loc.interpolate(phi, lp.w_of(-lp.x_of(w)), chart)
    radii = asymptotics.default_radii(m, geom, 1)
    b1 = asymptotics.extract_coeffs(m, direct, geom, 1, radii).b
    b2 = asymptotics.extract_coeffs(m, flipped, geom, 1, radii).b
    checks["branch_flip"] = abs(b1 + b2) < 1e-8 * abs(b1) and abs(b1**2 - b2**2) < 1e-8 * abs(b1) ** 2
    ok = all(checks.values())
    assert report(9, ok, f"{', '.join(k for k, v in checks.items() if v)} hold; volume rel err {vol_err:.1e}; "
                         f"scaling law within {scale_dev:.1e} x 2 sigma (FEM with capped default "
                         f"window: {capped_dev:.2f} x 2 sigma, not gated)"
                         + ("" if ok else f"; failing: {[k for k, v in checks.items() if not v]}"))
