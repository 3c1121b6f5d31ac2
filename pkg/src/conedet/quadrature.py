"""Quadrature rules on the reference triangle and on disks.

Reference triangle rules return local coordinates ``(s, t)`` and weights for
the triangle ``{s, t >= 0, s + t <= 1}`` (weights sum to 1/2).  A physical
triangle ``P0 + s (P1 - P0) + t (P2 - P0)`` of area ``A`` is integrated as
``2 A * sum(w * f)``.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_jacobi_01(n, gamma):
    """Nodes/weights on [0, 1] for the weight ``u**gamma`` (gamma > -1)."""
    x, w = roots_jacobi(n, 0.0, gamma)
    u = 0.5 * (1.0 + x)
    return u, w / 2.0 ** (gamma + 1.0)


@lru_cache(maxsize=None)
def gauss_legendre_01(n):
    x, w = roots_legendre(n)
    return 0.5 * (1.0 + x), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n=4):
    """Collapsed (Stroud conical) product rule, exact to degree ``2n - 1``."""
    u, wu = gauss_jacobi_01(n, 1.0)
    v, wv = gauss_legendre_01(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv)
    s = uu * (1.0 - vv)
    t = uu * vv
    return s.ravel(), t.ravel(), ww.ravel()


@lru_cache(maxsize=None)
def vertex_singular_rule(n_r, n_t, beta):
    """Rule for integrands behaving like ``r**(2 beta) * smooth`` near vertex P0.

    The collapsed coordinate ``u`` is exactly the radial fraction, so the
    radial factor uses Gauss-Jacobi with weight ``u**(2 beta + 1)`` (the extra
    power is the polar Jacobian).  Weights already carry ``u**(-2 beta)`` so
    callers evaluate the full singular integrand at the nodes.
    """
    gamma = 2.0 * beta + 1.0
    u, wu = gauss_jacobi_01(n_r, gamma)
    v, wv = gauss_legendre_01(n_t)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu / u ** (2.0 * beta), wv)
    s = uu * (1.0 - vv)
    t = uu * vv
    return s.ravel(), t.ravel(), ww.ravel()


def map_rule(p0, p1, p2, rule):
    """Physical nodes and weights for triangles given as complex vertex arrays.

    ``p0, p1, p2`` have shape ``(T,)``; returned nodes/weights have shape
    ``(T, Q)`` and weights include the area factor.
    """
    s, t, w = rule
    e1 = (p1 - p0)[:, None]
    e2 = (p2 - p0)[:, None]
    nodes = p0[:, None] + s[None, :] * e1 + t[None, :] * e2
    jac = np.abs((np.conj(e1) * e2).imag)
    return nodes, jac * w[None, :]


def smooth_step(x):
    """C-infinity step: 1 for x <= 0, 0 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a = np.where(x < 1.0, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
    b = np.where(x > 0.0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    return a / (a + b)


def disk_bump(r, radius):
    """Radial bump equal to 1 on ``r <= radius/2`` and 0 beyond ``radius``."""
    return smooth_step(2.0 * np.asarray(r) / radius - 1.0)


def polar_disk_rule(radius, n_r, n_theta, gamma=1.0):
    """Tensor rule on a disk of the given radius about the origin.

    The radial weight is ``r**gamma`` (``gamma = 1`` is the plain polar
    Jacobian); the angular rule is the periodic trapezoid rule.  Returns
    complex offsets and weights.
    """
    u, wu = gauss_jacobi_01(n_r, gamma)
    r = radius * u
    wr = wu * radius ** (gamma + 1.0)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    pts = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    w = (wr[:, None] * np.full(n_theta, 2.0 * np.pi / n_theta)[None, :]).ravel()
    # undo the r**(gamma - 1) factor beyond the polar Jacobian
    w = w / np.repeat(r ** (gamma - 1.0), n_theta)
    return pts, w
