"""Conical metrics ``rho |dz|^2`` on the Riemann sphere.

A metric is stored through its chart-0 conformal factor

    rho(z) = exp(2 u(z)) * prod_j |z - p_j|^(2 beta_j)

and evaluated in chart 1 (``v = 1/z``) through the pullback rule
``rho1(v) = rho(1/v) |v|^-4``.  Writing ``rho1(v) = exp(2 u1(v)) prod_j
|1 - p_j v|^(2 beta_j)`` defines the chart-1 smooth part
``u1(v) = u(1/v) - (2 + sum beta) log|v|``, which must be regular at ``v = 0``
(no cone point at infinity).
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .errors import (
    EvaluationAtSingularity,
    InvalidChart,
    InvalidMetric,
    NonConvergentQuadrature,
)

SINGULAR_TOL = 1e-14


class MetricKind(str, Enum):
    ROUND = "round"
    FLAT_CONICAL = "flat_conical"
    CUSTOM_SMOOTH = "custom_smooth"


@dataclass(frozen=True)
class SmoothFactor:
    """Smooth part ``u`` of a conformal factor, with optional chart-1 form.

    ``u0(z)`` is ``u`` in chart 0.  ``u1(v)`` is the regular chart-1 part
    ``u(1/v) - (2 + sum beta) log|v|``; when omitted it is derived from ``u0``
    (and the value at ``v = 0`` is taken as a limit).
    """

    u0: Callable
    u1: Optional[Callable] = None
    name: str = "custom"
    harmonic: bool = False


def _round_u0(z):
    return np.log(2.0) - np.log1p(np.abs(z) ** 2)


def _round_u1(v):
    return np.log(2.0) - np.log1p(np.abs(v) ** 2)


def round_bump_factor(a=0.3):
    """Round sphere factor deformed by ``a Re z / (1 + |z|^2)`` (smooth on CP1)."""

    def u0(z):
        z = np.asarray(z, dtype=complex)
        return _round_u0(z) + a * z.real / (1.0 + np.abs(z) ** 2)

    def u1(v):
        v = np.asarray(v, dtype=complex)
        # Re(1/v) / (1 + 1/|v|^2) = Re(conj v) / (|v|^2 + 1)
        return _round_u1(v) + a * v.real / (1.0 + np.abs(v) ** 2)

    return SmoothFactor(u0, u1, name=f"round_bump:{a}")


def linear_factor(c=0.5):
    """``u = c Re z`` (harmonic; only meaningful on a chart patch)."""

    def u0(z):
        return c * np.asarray(z, dtype=complex).real

    return SmoothFactor(u0, None, name=f"linear:{c}", harmonic=True)


SMOOTH_PRESETS = {
    "round": lambda: SmoothFactor(_round_u0, _round_u1, name="round"),
    "round_bump": round_bump_factor,
    "linear": linear_factor,
}


def smooth_preset(name, *args):
    try:
        return SMOOTH_PRESETS[name](*args)
    except KeyError:
        raise InvalidMetric(f"unknown smooth-factor preset {name!r}") from None


@dataclass(frozen=True)
class ConicalMetricSpec:
    kind: MetricKind
    singularities: tuple = ()
    smooth_factor: Optional[SmoothFactor] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        sing = tuple((complex(p), float(b)) for p, b in self.singularities)
        object.__setattr__(self, "singularities", sing)
        ps = [p for p, _ in sing]
        for p, b in sing:
            if not np.isfinite(p):
                raise InvalidMetric("cone points must be finite")
            if not b > -1.0 or b == 0.0:
                raise InvalidMetric(f"cone exponent beta={b} must satisfy beta > -1, beta != 0")
        for i in range(len(ps)):
            for j in range(i):
                if abs(ps[i] - ps[j]) < 1e-12:
                    raise InvalidMetric("cone points must be distinct")
        if self.kind is MetricKind.ROUND and sing:
            raise InvalidMetric("the round metric has no cone points")
        if self.kind is MetricKind.FLAT_CONICAL and abs(sum(b for _, b in sing) + 2.0) > 1e-12:
            raise InvalidMetric("flat conical metric requires sum(beta) == -2")
        if self.kind is MetricKind.CUSTOM_SMOOTH and self.smooth_factor is None:
            raise InvalidMetric("custom metric needs a smooth factor")

    # -- constructors ---------------------------------------------------
    @classmethod
    def round(cls):
        return cls(MetricKind.ROUND)

    @classmethod
    def flat_conical(cls, points, betas):
        return cls(MetricKind.FLAT_CONICAL, tuple(zip(points, betas)))

    @classmethod
    def custom(cls, factor, points=(), betas=()):
        return cls(MetricKind.CUSTOM_SMOOTH, tuple(zip(points, betas)), factor)

    # -- properties -----------------------------------------------------
    @property
    def points(self):
        return np.array([p for p, _ in self.singularities], dtype=complex)

    @property
    def betas(self):
        return np.array([b for _, b in self.singularities], dtype=float)

    @property
    def beta_sum(self):
        return float(self.betas.sum()) if self.singularities else 0.0

    def singular_points(self, chart):
        """Cone points expressed in the given chart (those not at the chart's infinity)."""
        ps = self.points
        if chart == 0:
            return ps
        if chart == 1:
            ps = ps[ps != 0]
            return 1.0 / ps
        raise InvalidChart(f"chart must be 0 or 1, got {chart!r}")

    # -- evaluation -------------------------------------------------------
    def u(self, z, chart=0):
        """Smooth part of ``log rho / 2`` in the given chart (vectorised)."""
        z = np.asarray(z, dtype=complex)
        if self.kind is MetricKind.ROUND:
            return _round_u0(z)
        if self.kind is MetricKind.FLAT_CONICAL:
            return np.zeros(z.shape)
        sf = self.smooth_factor
        if chart == 0:
            return np.asarray(sf.u0(z), dtype=float)
        if sf.u1 is not None:
            return np.asarray(sf.u1(z), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(sf.u0(1.0 / z), dtype=float) - (2.0 + self.beta_sum) * np.log(np.abs(z))
        small = np.abs(z) < 1e-10
        if np.any(small):
            ring = 1e-6 * np.exp(2j * np.pi * np.arange(8) / 8)
            lim = np.mean(sf.u0(1.0 / ring)) - (2.0 + self.beta_sum) * np.log(1e-6)
            out = np.where(small, lim, out)
        return out

    def log_rho(self, z, chart=0):
        """``log rho`` in the chart; ``-inf``/``+inf`` exactly at cone points."""
        z = np.asarray(z, dtype=complex)
        if chart not in (0, 1):
            raise InvalidChart(f"chart must be 0 or 1, got {chart!r}")
        if self.kind is MetricKind.ROUND:
            return np.log(4.0) - 2.0 * np.log1p(np.abs(z) ** 2)
        out = 2.0 * self.u(z, chart)
        with np.errstate(divide="ignore"):
            for p, b in self.singularities:
                if chart == 0:
                    out = out + 2.0 * b * np.log(np.abs(z - p))
                else:
                    out = out + 2.0 * b * np.log(np.abs(1.0 - p * z))
        return out

    def rho(self, z, chart=0):
        """Vectorised conformal factor, no singularity check."""
        return np.exp(self.log_rho(z, chart))

    def dlog_rho_dz(self, z, h=1e-5):
        """Wirtinger derivative ``d/dz log rho`` in chart 0."""
        z = complex(z)
        if self.kind is MetricKind.ROUND:
            return -2.0 * np.conj(z) / (1.0 + abs(z) ** 2)
        out = 0j
        for p, b in self.singularities:
            out += b / (z - p)
        if self.kind is MetricKind.CUSTOM_SMOOTH:
            ux = (self.u(z + h) - self.u(z - h)) / (2 * h)
            uy = (self.u(z + 1j * h) - self.u(z - 1j * h)) / (2 * h)
            out += 2.0 * 0.5 * (ux - 1j * uy)
        return complex(out)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def _check_chart(chart):
    if chart not in (0, 1):
        raise InvalidChart(f"chart must be 0 or 1, got {chart!r}")


def _check_regular(spec, point, chart):
    for q in spec.singular_points(chart):
        if abs(point - q) <= SINGULAR_TOL * max(1.0, abs(q)):
            raise EvaluationAtSingularity(f"point {point} is a cone point of the metric")


def eval_rho(spec, point, chart=0):
    """Conformal factor of ``spec`` at ``point`` w.r.t. the flat chart coordinate."""
    _check_chart(chart)
    point = complex(point)
    _check_regular(spec, point, chart)
    return float(spec.rho(point, chart))


def curvature(spec, point, chart=0, h=1e-4):
    """Gaussian curvature ``-(4/rho) d_z d_zbar u`` at a regular point."""
    _check_chart(chart)
    point = complex(point)
    _check_regular(spec, point, chart)
    if spec.kind is MetricKind.ROUND:
        return 1.0
    if spec.kind is MetricKind.FLAT_CONICAL:
        return 0.0
    if spec.smooth_factor.harmonic:
        return 0.0
    u = lambda z: float(spec.u(z, chart))
    lap = (u(point + h) + u(point - h) + u(point + 1j * h) + u(point - 1j * h) - 4 * u(point)) / h**2
    # 4 d d-bar = flat Laplacian
    return -lap / float(spec.rho(point, chart))


# -- volume -------------------------------------------------------------------

def _ball_layout(spec):
    """Local disks around each cone point: (chart, centre in chart, radius, beta)."""
    balls = []
    for p, b in spec.singularities:
        chart, c = (0, p) if abs(p) <= 1.0 else (1, 1.0 / p)
        balls.append([chart, c, b])
    out = []
    for i, (chart, c, b) in enumerate(balls):
        d = 0.5
        for j, (chart2, c2, _) in enumerate(balls):
            if i == j:
                continue
            other = c2 if chart2 == chart else (1.0 / c2 if c2 != 0 else np.inf)
            d = min(d, 0.4 * abs(c - other))
        out.append((chart, c, d, b))
    return out


def _to_chart(z, src, dst):
    if src == dst:
        return z
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 / z


def _volume_parts(spec, level):
    """Per-chart volume contributions at a given quadrature level."""
    n_r = 8 * 2 ** level
    n_t = 16 * 2 ** level
    balls = _ball_layout(spec)

    def bumps(pts, chart):
        total = np.zeros(pts.shape)
        for bchart, c, rad, _ in balls:
            loc = _to_chart(pts, chart, bchart)
            total += disk_bump_safe(np.abs(loc - c), rad)
        return total

    parts = [0.0, 0.0]
    for chart in (0, 1):
        pts, w = quadrature.polar_disk_rule(1.0, n_r, n_t)
        vals = spec.rho(pts, chart) * (1.0 - bumps(pts, chart))
        vals = np.where(np.isfinite(vals), vals, 0.0)
        parts[chart] += float(np.sum(vals * w))
    for bchart, c, rad, b in balls:
        off, w = quadrature.polar_disk_rule(rad, n_r, n_t, gamma=2.0 * b + 1.0)
        pts = c + off
        vals = spec.rho(pts, bchart) * quadrature.disk_bump(np.abs(off), rad)
        # split the ball's mass between the two charts it may straddle
        in_own = np.abs(pts) <= 1.0
        parts[bchart] += float(np.sum((vals * w)[in_own]))
        parts[1 - bchart] += float(np.sum((vals * w)[~in_own]))
    return parts


def disk_bump_safe(r, radius):
    r = np.where(np.isfinite(r), r, np.inf)
    return quadrature.disk_bump(r, radius)


def volume_by_chart(spec, quad_level=3):
    """Volumes of the two chart hemispheres ``|z| <= 1`` and ``|z| >= 1``."""
    return tuple(_volume_parts(spec, quad_level))


def volume(spec, quad_level=3, rtol=1e-8, return_error=False):
    """Total volume of ``(CP1, m)``.

    The integrand is split by smooth bumps: a global polar rule per chart for
    the regular part and a radial Gauss-Jacobi rule (weight ``r^(2 beta+1)``)
    on a disk around each cone point.  The error estimate is the change from
    the previous level.
    """
    if quad_level < 1:
        raise ValueError("quad_level must be >= 1")
    fine = sum(_volume_parts(spec, quad_level))
    coarse = sum(_volume_parts(spec, quad_level - 1))
    err = abs(fine - coarse)
    if not np.isfinite(fine) or err > max(rtol * abs(fine), 1e-12) * 1e4:
        raise NonConvergentQuadrature(
            f"volume quadrature not converged: levels differ by {err:.3e}"
        )
    if return_error:
        return fine, max(err, np.finfo(float).eps * abs(fine))
    return fine
