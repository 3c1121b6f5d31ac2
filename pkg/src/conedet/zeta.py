"""Zeta-regularized determinants from finite spectra.

``theta(t) = sum_{j>=1} exp(-lambda_j t)`` (the first, zero, eigenvalue is
dropped).  Short-time coefficients ``theta ~ sum_k a_k t^k`` are fitted on a
window where the truncated spectrum is reliable, and the Mellin integral is
split at ``t = 1``::

    zeta'(0) = gamma a_0 + sum_{k != 0} a_k / k
               + int_0^1 (theta - S(t)) dt / t + sum_j E1(lambda_j)

with ``S`` the fitted terms.  The fitted model replaces ``theta`` below the
window start ``t_a``, which turns the regular (``k > 0``) terms into
``a_k t_a^k / k`` next to ``int_{t_a}^1 (theta - S_sing) dt / t``.
"""
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import exp1

from .errors import IllConditionedFit, LogTermDetected, TailDominatedError

log = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
TAIL_FACTOR = 8.0
WINDOW_START = 4.0  # in units of t_min: the tail bound exp(-8) is relative, not absolute
WINDOW_RATIO = 10.0
BASIS = (-1.0, -0.5, 0.0, 0.5, 1.0)
# for FEM spectra: integer ladder plus a t^-2 column absorbing the O(lambda^2 h^2)
# eigenvalue dispersion (treated as nuisance, see zeta_det)
FEM_BASIS = (-2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
FEM_NUISANCE = (-2.0,)


def _eigs(spectrum):
    lam = np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=float)
    lam = np.sort(lam)
    return lam[1:]


def t_min(spectrum, factor=TAIL_FACTOR):
    """Smallest reliable time ``factor / lambda_max`` of a truncated spectrum."""
    lam = _eigs(spectrum)
    return factor / lam[-1]


def heat_trace(spectrum, t, return_flag=False):
    """``sum_{j>=1} exp(-lambda_j t)``; optionally flag ``t`` below ``t_min``."""
    lam = _eigs(spectrum)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr <= 0):
        raise ValueError("t must be positive")
    val = np.exp(-np.outer(t_arr, lam)).sum(axis=1)
    val = val if np.ndim(t) else float(val[0])
    if return_flag:
        stale = t_arr < t_min(spectrum)
        return val, (stale if np.ndim(t) else bool(stale[0]))
    return val


@dataclass
class HeatTraceFit:
    t: np.ndarray
    theta: np.ndarray
    powers: tuple
    coeffs: dict
    errors: dict
    c_log: float
    c_log_err: float
    residual: float
    pinned: dict = field(default_factory=dict)

    def model(self, t, include=None):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p, a in self.coeffs.items():
            if include is None or include(p):
                out = out + a * t**p
        return out


def _lstsq(t, y, powers, with_log, pinned):
    cols, names = [], []
    y = y.copy()
    for p in powers:
        if p in pinned:
            y = y - pinned[p] * t**p
        else:
            cols.append(t**p)
            names.append(p)
    if with_log:
        cols.append(np.log(t))
        names.append("log")
    # relative weighting: theta spans orders of magnitude across the window
    wts = 1.0 / np.maximum(np.abs(y), 1.0)
    A = np.column_stack(cols) * wts[:, None]
    b = y * wts
    sc = np.linalg.norm(A, axis=0)
    As = A / sc
    sol, _, rank, sv = np.linalg.lstsq(As, b, rcond=None)
    if rank < As.shape[1] or sv[-1] / sv[0] < 1e-14:
        raise IllConditionedFit("heat-trace basis is degenerate on this window")
    sol = sol / sc
    r = b - A @ sol
    dof = max(1, len(t) - len(names))
    s2 = float(r @ r) / dof
    cov = np.linalg.inv(As.T @ As) * s2 / np.outer(sc, sc)
    err = np.sqrt(np.abs(np.diag(cov)))
    return dict(zip(names, sol)), dict(zip(names, err)), float(np.sqrt(s2))


def fit_short_time(spectrum, t_window=None, n_samples=48, powers=BASIS, pinned=None,
                   window_ratio=WINDOW_RATIO):
    """Least-squares fit of ``theta`` on a log-spaced window.

    Coefficient errors combine the least-squares standard error with the
    largest shift seen over overlapping sub-windows and over dropping the
    highest free power.  The latter two track model (truncation) error,
    which dominates noise here.
    """
    pinned = dict(pinned or {})
    tm = t_min(spectrum)
    if t_window is None:
        t0 = min(WINDOW_START * tm, 0.5)
        t_window = (t0, min(1.0, window_ratio * t0))
    t0, t1 = map(float, t_window)
    if t0 < tm * (1 - 1e-12):
        raise TailDominatedError(f"window start {t0:.3g} below t_min {tm:.3g}")
    if not t1 > t0:
        raise TailDominatedError(f"empty window [{t0:.3g}, {t1:.3g}]; t_min={tm:.3g}")
    if n_samples < 8:
        raise ValueError("at least 8 sample points are required")
    t = np.geomspace(t0, t1, n_samples)
    th = heat_trace(spectrum, t)
    coeffs, errs, res = _lstsq(t, th, powers, False, pinned)
    c_full, e_full, _ = _lstsq(t, th, powers, True, pinned)
    # systematic error: largest shift over overlapping sub-windows and over
    # dropping the highest fitted power
    m = (2 * n_samples) // 3
    subsets = [slice(0, m), slice(n_samples - m, n_samples), slice((n_samples - m) // 2, (n_samples + m) // 2)]
    free = [p for p in powers if p not in pinned]
    variants = [(sl, powers) for sl in subsets]
    if len(free) > 2:
        variants.append((slice(None), tuple(p for p in powers if p != max(free))))
    spread = {p: 0.0 for p in coeffs}
    spread["log"] = 0.0
    for sl, pw in variants:
        try:
            alt, _, _ = _lstsq(t[sl], th[sl], pw, False, pinned)
            alt_l, _, _ = _lstsq(t[sl], th[sl], pw, True, pinned)
        except IllConditionedFit:
            continue
        for p in coeffs:
            if p in alt:
                spread[p] = max(spread[p], abs(alt[p] - coeffs[p]))
        spread["log"] = max(spread["log"], abs(alt_l["log"] - c_full["log"]))
    errors = {p: float(np.hypot(errs[p], spread[p])) for p in coeffs}
    c_log_err = float(np.hypot(e_full["log"], spread["log"]))
    all_coeffs = dict(pinned)
    all_coeffs.update(coeffs)
    for p in pinned:
        errors[p] = 0.0
    return HeatTraceFit(t, th, tuple(powers), all_coeffs, errors, float(c_full["log"]),
                        c_log_err, res, pinned)


@dataclass
class ZetaResult:
    zeta0: float
    zeta_prime0: float
    log_det: float
    error_estimate: float
    n_ev: int
    t_min: float
    t_window: tuple
    coeffs: dict
    coeff_errors: dict
    c_log: float
    c_log_err: float

    def to_json(self, **extra):
        d = asdict(self)
        d["coeffs"] = {str(k): v for k, v in self.coeffs.items()}
        d["coeff_errors"] = {str(k): v for k, v in self.coeff_errors.items()}
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


def _log_integral(f, a, b, n=400):
    """``int_a^b f(t) dt / t`` by Gauss-Legendre in ``log t``."""
    x, w = np.polynomial.legendre.leggauss(n)
    la, lb = np.log(a), np.log(b)
    u = 0.5 * (lb - la) * x + 0.5 * (lb + la)
    return 0.5 * (lb - la) * float(np.sum(w * f(np.exp(u))))


def _assemble(spectrum, fit, t_a, nuisance=()):
    lam = _eigs(spectrum)
    # nuisance terms are removed from the data but carry no continuation constant
    a = {p: c for p, c in fit.coeffs.items() if p not in nuisance}
    singular = lambda p: p <= 0
    regular = lambda p: p > 0
    z0 = a.get(0.0, 0.0)
    zp = EULER_GAMMA * z0 + sum(c / p for p, c in a.items() if p < 0)
    # below t_a the truncated theta is replaced by the model, so the regular
    # terms contribute their integral over (0, t_a) only
    zp += sum(c * t_a**p / p for p, c in a.items() if p > 0)
    if t_a < 1.0:
        zp += _log_integral(lambda t: heat_trace(spectrum, t) - fit.model(t, singular), t_a, 1.0)
    zp += float(np.sum(exp1(lam)))
    return float(z0), float(zp)


def zeta_det(spectrum, t_window=None, n_samples=48, powers=BASIS, pinned=None, exact=False,
             log_sigma=3.0, window_ratio=WINDOW_RATIO, nuisance=()):
    """``log Det' = -zeta'(0)`` of a (truncated) spectrum.

    ``exact=True`` skips fitting and treats the spectrum as complete, so that
    ``zeta(s) = sum lambda_j^(-s)`` exactly.  Powers listed in ``nuisance``
    are fitted and subtracted from the data, then discarded: use this for
    discretization artefacts such as the ``t^-2`` term of FEM spectra.
    """
    lam = _eigs(spectrum)
    if np.any(lam <= 0):
        raise ValueError("non-zero eigenvalues must be positive")
    if exact:
        zp = -float(np.sum(np.log(lam)))
        return ZetaResult(float(len(lam)), zp, -zp, 1e-15 * max(1.0, abs(zp)), len(lam) + 1, 0.0,
                          (0.0, 0.0), {}, {}, 0.0, 0.0)
    fit = fit_short_time(spectrum, t_window, n_samples, powers, pinned, window_ratio)
    if abs(fit.c_log) > log_sigma * fit.c_log_err and abs(fit.c_log) > 1e-8:
        raise LogTermDetected(
            f"t^0 log t coefficient {fit.c_log:.3g} exceeds {log_sigma} sigma ({fit.c_log_err:.3g})")
    t_a = float(fit.t[0])
    z0, zp = _assemble(spectrum, fit, t_a, nuisance)
    # error: propagate coefficient errors through the (linear) assembly
    err2 = 0.0
    for p, e in fit.errors.items():
        if e == 0:
            continue
        bumped = HeatTraceFit(fit.t, fit.theta, fit.powers, dict(fit.coeffs), fit.errors,
                              fit.c_log, fit.c_log_err, fit.residual, fit.pinned)
        bumped.coeffs[p] = fit.coeffs[p] + e
        _, zp_b = _assemble(spectrum, bumped, t_a, nuisance)
        err2 += (zp_b - zp) ** 2
    err = float(np.sqrt(err2)) + 1e-12
    return ZetaResult(z0, zp, -zp, err, len(lam) + 1, t_min(spectrum),
                      (float(fit.t[0]), float(fit.t[-1])),
                      {float(k): float(v) for k, v in fit.coeffs.items()},
                      {float(k): float(v) for k, v in fit.errors.items()},
                      fit.c_log, fit.c_log_err)


def round_sphere_spectrum(l_max):
    """Exact spectrum ``l(l+1)`` with multiplicity ``2l+1``."""
    ls = np.arange(l_max + 1)
    return np.repeat(ls * (ls + 1.0), 2 * ls + 1)


def cone_zeta0(cone_angles, euler_characteristic=2):
    """``zeta(0)`` of a closed surface with a conformally conical metric.

    Combines the smooth ``t^0`` heat invariant ``(1/12 pi) int K`` (via
    Gauss-Bonnet) with the cone contribution ``(1/alpha - alpha)/12`` of each
    cone of angle ``2 pi alpha``, then subtracts the zero mode.
    """
    a0 = euler_characteristic / 6.0
    for ang in cone_angles:
        alpha = float(ang) / (2.0 * np.pi)
        if not alpha > 0:
            raise ValueError("cone angles must be positive")
        a0 += (alpha - 1.0) / 6.0 + (1.0 / alpha - alpha) / 12.0
    return a0 - 1.0
