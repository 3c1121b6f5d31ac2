"""Rational maps ``f: CP1_w -> CP1_z`` and the pullback geometry ``f* m``.

Points of the domain sphere live in one of two flat charts: chart 0 is the
coordinate ``w`` and chart 1 is ``v = 1/w``.  A point is stored in chart 0
when ``|w| <= 1`` and in chart 1 otherwise, so infinity is the regular point
``v = 0`` of chart 1.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as P

from . import series
from .errors import (
    CriticalValueAtConePoint,
    CriticalValueAtInfinity,
    DegenerateModuli,
    EvaluationAtConePoint,
    InvalidChart,
    InvalidRationalMap,
    NonSimpleCriticalPoint,
    RootFindingFailure,
)
from .metric import ConicalMetricSpec

COINCIDENCE_TOL = 1e-8
SERIES_ORDER = 16


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    scale = max(np.max(np.abs(c)), 1e-300)
    nz = np.nonzero(np.abs(c) > 1e-14 * scale)[0]
    return c[: nz[-1] + 1] if len(nz) else np.zeros(1, dtype=complex)


def _pad(c, n):
    out = np.zeros(n, dtype=complex)
    out[: len(c)] = c
    return out


def _polish_root(coef, z, steps=8):
    d = P.polyder(coef)
    for _ in range(steps):
        fz = P.polyval(z, coef)
        dz = P.polyval(z, d)
        if dz == 0:
            break
        step = fz / dz
        z = z - step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return z


def _roots_two_chart(coef, n_total):
    """Roots of a polynomial viewed as a section of O(n_total) on CP1.

    Returns ``(chart, coordinate)`` pairs; a degree deficit contributes roots
    at infinity (``v = 0`` in chart 1).
    """
    coef = _trim(coef)
    deg = len(coef) - 1
    roots = []
    if deg > 0:
        if not np.all(np.isfinite(coef)):
            raise RootFindingFailure("non-finite polynomial coefficients")
        try:
            rs = P.polyroots(coef)
        except np.linalg.LinAlgError as exc:
            raise RootFindingFailure(str(exc)) from exc
        rev = _pad(coef, n_total + 1)[::-1]
        for r in rs:
            if abs(r) <= 1.0:
                roots.append((0, _polish_root(coef, r)))
            else:
                roots.append((1, _polish_root(rev, 1.0 / r)))
    roots.extend([(1, 0j)] * (n_total - deg))
    return roots


@dataclass(frozen=True)
class RationalMap:
    """``f(w) = num(w) / den(w)``; coefficients in ascending powers."""

    num: tuple
    den: tuple
    label: str = field(default="", compare=False)

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if np.all(den == 0):
            raise InvalidRationalMap("denominator is identically zero")
        if np.all(num == 0):
            raise InvalidRationalMap("constant map")
        object.__setattr__(self, "num", tuple(num))
        object.__setattr__(self, "den", tuple(den))
        self._check_coprime()

    @property
    def degree(self):
        return max(len(self.num), len(self.den)) - 1

    def coefficients(self, chart=0):
        """Numerator/denominator coefficient arrays in the given domain chart."""
        n = self.degree + 1
        num = _pad(np.array(self.num), n)
        den = _pad(np.array(self.den), n)
        if chart == 0:
            return num, den
        if chart == 1:
            return num[::-1].copy(), den[::-1].copy()
        raise InvalidChart(f"chart must be 0 or 1, got {chart!r}")

    def _check_coprime(self):
        num, den = np.array(self.num), np.array(self.den)
        if len(den) > 1 and len(num) > 1:
            scale = np.max(np.abs(num))
            for r in P.polyroots(den):
                if abs(P.polyval(r, num)) < 1e-10 * scale * max(1.0, abs(r)) ** (len(num) - 1):
                    raise InvalidRationalMap("numerator and denominator share a root")
        if self.degree < 1:
            raise InvalidRationalMap("map must have degree >= 1")

    # -- evaluation ------------------------------------------------------
    def __call__(self, w, chart=0):
        num, den = self.coefficients(chart)
        w = np.asarray(w, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return P.polyval(w, num) / P.polyval(w, den)

    def derivative(self, w, chart=0):
        """``d f / d(chart coordinate)``."""
        num, den = self.coefficients(chart)
        w = np.asarray(w, dtype=complex)
        pv, qv = P.polyval(w, num), P.polyval(w, den)
        dp, dq = P.polyval(w, P.polyder(num)), P.polyval(w, P.polyder(den))
        with np.errstate(divide="ignore", invalid="ignore"):
            return (dp * qv - pv * dq) / qv**2

    def value_at(self, chart, coord):
        """``f`` at a chart point, returning ``inf`` at poles."""
        num, den = self.coefficients(chart)
        p = P.polyval(coord, num)
        q = P.polyval(coord, den)
        if abs(q) <= 1e-13 * max(abs(p), 1e-300):
            return complex(np.inf)
        return complex(p / q)

    def wronskian(self):
        num, den = self.coefficients(0)
        return P.polysub(P.polymul(P.polyder(num), den), P.polymul(num, P.polyder(den)))

    def preimages(self, z):
        """All ``N`` preimages of a finite value ``z`` as chart points."""
        num, den = self.coefficients(0)
        return _roots_two_chart(P.polysub(num, z * den), self.degree)

    def poles(self):
        _, den = self.coefficients(0)
        return _roots_two_chart(den, self.degree)


def example_deg2(z1, z2):
    """Degree-2 map with critical points ``w = 0, infinity`` and values ``z1, z2``."""
    z1, z2 = complex(z1), complex(z2)
    if not (np.isfinite(z1) and np.isfinite(z2)):
        raise DegenerateModuli("critical values must be finite")
    if abs(z1 - z2) <= COINCIDENCE_TOL * max(1.0, abs(z1), abs(z2)):
        raise DegenerateModuli("z1 and z2 must differ")
    d = z2 - z1
    return RationalMap((z1 * d, 0.0, z2), (d, 0.0, 1.0), label=f"deg2({z1}, {z2})")


def identity_map():
    return RationalMap((0.0, 1.0), (1.0,), label="identity")


def critical_data(fmap):
    """Critical points (chart points) and their finite critical values."""
    N = fmap.degree
    if N == 1:
        return [], []
    pts = _roots_two_chart(fmap.wronskian(), 2 * N - 2)
    # cluster check: a repeated root means a non-simple critical point
    for i, (ci, wi) in enumerate(pts):
        for cj, wj in pts[:i]:
            a = wi if ci == 0 else (1.0 / wi if wi != 0 else np.inf)
            b = wj if cj == 0 else (1.0 / wj if wj != 0 else np.inf)
            if (np.isinf(a) and np.isinf(b)) or abs(a - b) < 1e-6 * max(1.0, abs(a)):
                raise NonSimpleCriticalPoint(f"critical point {a} is not simple")
    values = []
    for chart, w in pts:
        z = fmap.value_at(chart, w)
        if not np.isfinite(z):
            raise CriticalValueAtInfinity(f"critical point ({chart}, {w}) maps to infinity")
        values.append(z)
    for (chart, w), z in zip(pts, values):
        # f'' != 0 in the chart coordinate
        num, den = fmap.coefficients(chart)
        shifted_num = _shift(P.polysub(num, z * den), w)
        scale = max(np.max(np.abs(shifted_num)), 1e-300)
        if abs(shifted_num[2] if len(shifted_num) > 2 else 0.0) < 1e-9 * scale:
            raise NonSimpleCriticalPoint(f"critical point ({chart}, {w}) is degenerate")
    return pts, values


def _shift(coef, w0):
    """Coefficients of ``p(w0 + t)`` in ascending powers of ``t``."""
    coef = np.asarray(coef, dtype=complex)
    out = np.zeros(len(coef), dtype=complex)
    basis = np.array([1.0 + 0j])
    for c in coef:
        out[: len(basis)] += c * basis
        basis = P.polymul(basis, [w0, 1.0])
    return out


class ConeOrigin(str, Enum):
    CRITICAL = "critical"
    PREIMAGE = "preimage"


@dataclass(frozen=True)
class ConePoint:
    chart: int
    coord: complex
    angle: float
    origin: ConeOrigin
    index: int

    @property
    def beta(self):
        return self.angle / (2.0 * np.pi) - 1.0

    @property
    def w(self):
        if self.chart == 0:
            return self.coord
        return complex(np.inf) if self.coord == 0 else 1.0 / self.coord

    def in_chart(self, chart):
        """Coordinate of this point in the requested chart (``None`` at the chart's infinity)."""
        if chart == self.chart:
            return self.coord
        if self.coord == 0:
            return None
        return 1.0 / self.coord


@dataclass(frozen=True)
class LocalParameter:
    """Distinguished parameter ``x = sqrt(f - z_k)`` about a critical point."""

    chart: int
    center: complex
    z_k: complex
    alpha: complex
    x_series: np.ndarray
    w_series: np.ndarray
    deflated: np.ndarray
    den_shift: np.ndarray
    radius_w: float
    radius_x: float

    def x_of(self, w):
        """Exact ``x`` at chart points ``w`` (same chart as the critical point)."""
        t = np.asarray(w, dtype=complex) - self.center
        s = P.polyval(t, self.deflated) / P.polyval(t, self.den_shift)
        r = np.sqrt(s)
        r = np.where((r * np.conj(self.alpha)).real < 0, -r, r)
        return t * r

    def dx_dw(self, w):
        t = np.asarray(w, dtype=complex) - self.center
        num = self.deflated
        den = self.den_shift
        s = P.polyval(t, num) / P.polyval(t, den)
        ds = (P.polyval(t, P.polyder(num)) * P.polyval(t, den)
              - P.polyval(t, num) * P.polyval(t, P.polyder(den))) / P.polyval(t, den) ** 2
        r = np.sqrt(s)
        r = np.where((r * np.conj(self.alpha)).real < 0, -r, r)
        return r + t * ds / (2.0 * r)

    def w_of(self, x, newton=3):
        """Inverse ``w(x)`` via the inverse series, polished by Newton steps on ``x(w) = x``."""
        x = np.asarray(x, dtype=complex)
        w = self.center + series.evaluate(self.w_series, x)
        for _ in range(newton):
            w = w - (self.x_of(w) - x) / self.dx_dw(w)
        return w


def _local_parameter(fmap, chart, w0, z0, order, fixed_radius_x):
    num, den = fmap.coefficients(chart)
    shifted = _shift(P.polysub(num, z0 * den), w0)
    den_s = _shift(den, w0)
    deflated = shifted[2:].copy()
    if len(deflated) == 0 or deflated[0] == 0:
        raise NonSimpleCriticalPoint("degenerate critical point")
    a2 = deflated[0] / den_s[0]
    alpha = np.sqrt(a2)
    if alpha.real < 0 or (alpha.real == 0 and alpha.imag < 0):
        alpha = -alpha
    s_ser = series.div(deflated, den_s, order)
    x_ser = np.concatenate([[0.0], series.sqrt(s_ser, order - 1, root0=alpha)])
    w_ser = series.reversion(x_ser, order)
    # singularities of x(t): other zeros of f - z0 and poles, in this chart's coordinate
    sing = []
    for poly, skip_center in ((P.polysub(num, z0 * den), True), (den, False)):
        poly = _trim(poly)
        if len(poly) < 2:
            continue
        for r in P.polyroots(poly):
            if skip_center and abs(r - w0) < 1e-6 * max(1.0, abs(w0)):
                continue
            sing.append(abs(r - w0))
    radius_w = min(sing) if sing else np.inf
    return LocalParameter(chart, complex(w0), complex(z0), complex(alpha), x_ser, w_ser,
                          deflated, den_s, float(radius_w), float(fixed_radius_x))


@dataclass(frozen=True)
class CoverGeometry:
    """Pullback ``f* m`` of a conical metric by a genus-0 rational map."""

    map: RationalMap
    metric: ConicalMetricSpec
    critical_points: tuple
    critical_values: tuple
    cone_points: tuple
    params: tuple
    genus: int = 0

    @classmethod
    def build(cls, fmap, metric, order=SERIES_ORDER):
        pts, vals = critical_data(fmap)
        N = fmap.degree
        scale = max([1.0] + [abs(z) for z in vals])
        for z in vals:
            for p in metric.points:
                if abs(z - p) < COINCIDENCE_TOL * scale:
                    raise CriticalValueAtConePoint(f"critical value {z} coincides with cone point {p}")
        cones = []
        for k, (chart, w) in enumerate(pts):
            cones.append(ConePoint(chart, complex(w), 4.0 * np.pi, ConeOrigin.CRITICAL, k))
        for j, (p, b) in enumerate(metric.singularities):
            pre = fmap.preimages(p)
            if len(pre) != N:
                raise RootFindingFailure(f"found {len(pre)} preimages of {p}, expected {N}")
            for chart, w in pre:
                cones.append(ConePoint(chart, complex(w), 2.0 * np.pi * (b + 1.0), ConeOrigin.PREIMAGE, j))
        params = []
        for k, ((chart, w), z) in enumerate(zip(pts, vals)):
            others = [abs(zj - z) for j, zj in enumerate(vals) if j != k]
            # the chart's point at infinity is where w(x) leaves the chart
            inf_val = fmap.value_at(1 - chart, 0j)
            if np.isfinite(inf_val):
                others.append(abs(inf_val - z))
            rx = float(np.sqrt(min(others))) if others else np.inf
            params.append(_local_parameter(fmap, chart, w, z, order, rx))
        return cls(fmap, metric, tuple(pts), tuple(vals), tuple(cones), tuple(params))

    @property
    def degree(self):
        return self.map.degree

    @property
    def n_critical(self):
        return len(self.critical_points)

    def density(self, w, chart=0):
        """Vectorised conformal factor of ``f* m`` w.r.t. the chart coordinate.

        Uses the target chart 1 (``zeta = 1/z``) where ``|f| > 1`` so that poles
        of ``f`` are regular points.
        """
        w = np.asarray(w, dtype=complex)
        num, den = self.map.coefficients(chart)
        pv, qv = P.polyval(w, num), P.polyval(w, den)
        dp, dq = P.polyval(w, P.polyder(num)), P.polyval(w, P.polyder(den))
        wr = dp * qv - pv * dq
        use0 = np.abs(pv) <= np.abs(qv)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            z0 = np.where(use0, pv / qv, 0.0)
            z1 = np.where(use0, 0.0, qv / pv)
            d0 = self.metric.rho(z0, 0) * np.abs(wr / qv**2) ** 2
            d1 = self.metric.rho(z1, 1) * np.abs(wr / pv**2) ** 2
        return np.where(use0, d0, d1)

    def local_parameter(self, k):
        return self.params[k]


def pullback_factor(geom, point, chart=0):
    """Conformal factor of ``f* m`` at a non-cone chart point."""
    if chart not in (0, 1):
        raise InvalidChart(f"chart must be 0 or 1, got {chart!r}")
    point = complex(point)
    for c in geom.cone_points:
        loc = c.in_chart(chart)
        if loc is not None and abs(loc - point) < 1e-14 * max(1.0, abs(loc)):
            raise EvaluationAtConePoint(f"{point} is a cone point of the pullback metric")
    return float(geom.density(point, chart))


def distinguished_param(geom, k, order=SERIES_ORDER):
    """Taylor series of ``x(w)`` about critical point ``k`` and of its inverse."""
    if order < 3:
        raise ValueError("order must be >= 3")
    chart, w = geom.critical_points[k]
    lp = _local_parameter(geom.map, chart, w, geom.critical_values[k], order + 1,
                          geom.params[k].radius_x)
    return lp.x_series, lp.w_series
