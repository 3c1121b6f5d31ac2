"""Truncated complex power series (ascending coefficient arrays)."""
import numpy as np

from .errors import SeriesInversionFailure


def trunc(a, n):
    out = np.zeros(n, dtype=complex)
    a = np.asarray(a, dtype=complex)[:n]
    out[: len(a)] = a
    return out


def mul(a, b, n):
    return trunc(np.convolve(trunc(a, n), trunc(b, n)), n)


def div(a, b, n):
    a = trunc(a, n)
    b = trunc(b, n)
    if b[0] == 0:
        raise ZeroDivisionError("series division by a series with zero constant term")
    q = np.zeros(n, dtype=complex)
    for k in range(n):
        q[k] = (a[k] - np.dot(q[:k], b[k:0:-1])) / b[0]
    return q


def sqrt(a, n, root0=None):
    """Square root with a prescribed constant term ``root0`` (``root0**2 == a[0]``)."""
    a = trunc(a, n)
    s = np.zeros(n, dtype=complex)
    s[0] = np.sqrt(a[0]) if root0 is None else root0
    if s[0] == 0:
        raise ZeroDivisionError("series square root of a series vanishing at 0")
    for k in range(1, n):
        s[k] = (a[k] - np.dot(s[1:k], s[k - 1:0:-1])) / (2.0 * s[0])
    return s


def compose(a, b, n):
    """``a(b(x))`` for ``b[0] == 0``."""
    b = trunc(b, n)
    if abs(b[0]) > 0:
        raise ValueError("inner series must vanish at 0")
    out = np.zeros(n, dtype=complex)
    power = trunc([1.0], n)
    for k, ak in enumerate(trunc(a, n)):
        out += ak * power
        power = mul(power, b, n)
    return out


def reversion(a, n):
    """Compositional inverse of ``a`` (``a[0] == 0``, ``a[1] != 0``) to ``n`` terms."""
    a = trunc(a, n)
    if abs(a[0]) > 0:
        raise ValueError("series must vanish at 0")
    if n < 2:
        return np.zeros(n, dtype=complex)
    if abs(a[1]) < 1e-300 or not np.isfinite(a[1]):
        raise SeriesInversionFailure("leading coefficient underflows")
    inv = np.zeros(n, dtype=complex)
    inv[1] = 1.0 / a[1]
    # Newton iteration doubles the number of correct terms each sweep
    m = 2
    while m < n:
        m = min(2 * m, n)
        comp = compose(a, inv, m)
        dcomp = compose(derivative(a, m), inv, m)
        err = comp - trunc([0.0, 1.0], m)
        inv = trunc(inv, m) - div(err, dcomp, m)
    err = compose(a, inv, n) - trunc([0.0, 1.0], n)
    inv = inv - div(err, compose(derivative(a, n), inv, n), n)
    out = trunc(inv, n)
    if not np.all(np.isfinite(out)):
        raise SeriesInversionFailure("non-finite coefficients in inverse series")
    return out


def derivative(a, n):
    a = np.asarray(a, dtype=complex)
    d = a[1:] * np.arange(1, len(a))
    return trunc(d, n)


def evaluate(a, x):
    """Horner evaluation of the series at (array) ``x``."""
    x = np.asarray(x, dtype=complex)
    out = np.zeros_like(x)
    for c in np.asarray(a, dtype=complex)[::-1]:
        out = out * x + c
    return out
