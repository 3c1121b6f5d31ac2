"""Expansion coefficients of fields near a 4pi cone point.

A field near critical point ``P_k`` is sampled on circles ``|x| = r`` of the
distinguished parameter and split into Fourier modes in ``arg x``.  Mode
``m`` of a field that is real-analytic in ``(x, conj x)`` has radial profile
``r^{|m|}, r^{|m|+2}, ...``; the fit adds the singular channels ``r^{-1}`` in
modes ``+-1`` and ``log r`` in mode 0 so that their absence can be checked.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import quadrature as qd
from .errors import IllConditionedFit, RadiusOutsideSeriesDisk
from .metric import MetricKind, eval_rho

N_THETA = 32
N_RADII = 6
SCALE_FRACTION = 0.25

# (mode, power) columns; power None stands for log r
PROFILES = {
    -2: (2, 4),
    -1: (-1, 1, 3, 5),
    0: (0, None, 2),
    1: (-1, 1, 3, 5),
    2: (2, 4),
}


@dataclass
class CoefficientTriple:
    """``field ~ c + a conj(x) + b x`` near the cone point."""

    c: complex
    a: complex
    b: complex
    residual: float
    b_err: float = 0.0
    singular: dict = field(default_factory=dict)
    radii: tuple = ()

    def flipped(self):
        """Coefficients after the branch change ``x -> -x``."""
        return CoefficientTriple(self.c, -self.a, -self.b, self.residual, self.b_err,
                                 dict(self.singular), self.radii)


class Locator:
    """Point location and P1 interpolation on a two-chart mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.p = mesh.triangle_coords()
        self.trees = {}
        self.ids = {}
        for chart in (0, 1):
            ids = np.where(mesh.tchart == chart)[0]
            cen = self.p[ids].mean(axis=1)
            self.trees[chart] = cKDTree(np.column_stack([cen.real, cen.imag]))
            self.ids[chart] = ids

    def locate(self, pts, chart, k_near=16):
        """Triangle index and barycentric coordinates of chart points."""
        pts = np.asarray(pts, dtype=complex).ravel()
        tri_idx = np.full(len(pts), -1)
        bary = np.zeros((len(pts), 3))
        todo = np.arange(len(pts))
        k = k_near
        n_ids = len(self.ids[chart])
        while len(todo):
            kk = min(k, n_ids)
            _, nb = self.trees[chart].query(np.column_stack([pts[todo].real, pts[todo].imag]), k=kk)
            nb = np.atleast_2d(nb).reshape(len(todo), kk)
            cand = self.ids[chart][nb]  # (P, k)
            v = self.p[cand]  # (P, k, 3)
            z = pts[todo][:, None]
            e1 = v[:, :, 1] - v[:, :, 0]
            e2 = v[:, :, 2] - v[:, :, 0]
            d = z - v[:, :, 0]
            det = (np.conj(e1) * e2).imag
            s = (np.conj(d) * e2).imag / det
            t = (np.conj(e1) * d).imag / det
            lam = np.stack([1 - s - t, s, t], axis=-1)
            inside = np.min(lam, axis=-1) >= -1e-10
            found = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            rows = np.where(found)[0]
            tri_idx[todo[rows]] = cand[rows, first[rows]]
            bary[todo[rows]] = lam[rows, first[rows]]
            todo = todo[~found]
            if kk >= n_ids and len(todo):
                # outside the chart's polygon (equator slivers): nearest triangle, clipped weights
                _, nb = self.trees[chart].query(np.column_stack([pts[todo].real, pts[todo].imag]), k=1)
                tid = self.ids[chart][np.atleast_1d(nb)]
                v = self.p[tid]
                e1 = v[:, 1] - v[:, 0]
                e2 = v[:, 2] - v[:, 0]
                d = pts[todo] - v[:, 0]
                det = (np.conj(e1) * e2).imag
                s = (np.conj(d) * e2).imag / det
                t = (np.conj(e1) * d).imag / det
                lam = np.clip(np.stack([1 - s - t, s, t], axis=-1), 0, None)
                lam /= lam.sum(axis=1, keepdims=True)
                tri_idx[todo] = tid
                bary[todo] = lam
                break
            k *= 4
        return tri_idx, bary

    def interpolate(self, values, pts, chart):
        pts = np.asarray(pts, dtype=complex)
        shape = pts.shape
        flat = pts.ravel()
        out = np.zeros(flat.shape, dtype=np.result_type(values, float))
        # route points to the chart whose unit disk contains them
        other = np.abs(flat) > 1.0
        for c, sel in ((chart, ~other), (1 - chart, other)):
            if not np.any(sel):
                continue
            q = flat[sel] if c == chart else 1.0 / flat[sel]
            tid, bary = self.locate(q, c)
            out[sel] = np.sum(values[self.mesh.tri[tid]] * bary, axis=1)
        return out.reshape(shape)


def _cone_vertex(mesh, k):
    for mk in mesh.marked:
        if mk.kind == "critical" and mk.index == k:
            return mk
    raise ValueError(f"critical point {k} is not marked in the mesh")


def local_scale(geom, k, lam):
    """Length ``(|lam| rho(z_k))^(-1/4)`` (x units) on which fields at spectral parameter ``lam`` vary."""
    rho_k = float(geom.metric.rho(geom.critical_values[k], 0))
    return float((abs(lam) * rho_k) ** -0.25) if lam != 0 else np.inf


def default_radii(mesh, geom, k, n=N_RADII, lam=None, delta=None):
    """Log-spaced fit radii (x units).

    The window runs from ``4 h_local`` up to the smallest of ``0.3`` times the
    series disk, half the grading radius, ``0.9 delta`` (when a cutoff is in
    play) and ``SCALE_FRACTION`` times the local scale of ``lam``.
    """
    lp = geom.local_parameter(k)
    mk = _cone_vertex(mesh, k)
    scale = abs(lp.alpha)
    lo = 4.0 * mesh.local_size(mk.vertex) * scale
    r0 = mk.r0 if np.isfinite(mk.r0) else 0.3
    hi = min(0.3 * lp.radius_x, 0.5 * r0 * scale)
    if delta is not None:
        hi = min(hi, 0.9 * delta)
    if lam is not None:
        hi = min(hi, SCALE_FRACTION * local_scale(geom, k, lam))
    if not hi >= 2.0 * lo:
        raise IllConditionedFit(f"radius window [{lo:.3g}, {hi:.3g}] too narrow; refine the mesh near the cone")
    return tuple(np.geomspace(lo, hi, n))


def _columns(m, r):
    cols = []
    for pw in PROFILES[m]:
        cols.append(np.log(r) if pw is None else r ** float(pw))
    return np.column_stack(cols)


def fit_modes(samples, radii):
    """Least-squares mode fit of ``samples[i, j]`` taken at ``x = r_i exp(i theta_j)``.

    Returns ``(coefficients, residual, b_err)`` where ``coefficients`` maps
    ``(m, power)`` to complex amplitudes.
    """
    radii = np.asarray(radii, dtype=float)
    n_r, n_t = samples.shape
    if n_t < 8:
        raise ValueError("n_theta must be at least 8")
    if len(radii) < 3 or radii.max() / radii.min() < 1.2:
        raise IllConditionedFit("radii too clustered for the profile fit")
    F = np.fft.fft(samples, axis=1) / n_t
    coef = {}
    misfit = 0.0
    b_err = 0.0
    dof = 0
    for m, powers in PROFILES.items():
        A = _columns(m, radii)
        y = F[:, m % n_t]
        # column scaling keeps the normal equations well conditioned
        sc = np.linalg.norm(A, axis=0)
        sol, _, rank, sv = np.linalg.lstsq(A / sc, y, rcond=None)
        if rank < A.shape[1] or sv[-1] / sv[0] < 1e-13:
            raise IllConditionedFit(f"degenerate profile fit in mode {m}")
        sol = sol / sc
        r = y - A @ sol
        misfit += float(np.sum(np.abs(r) ** 2))
        dof += len(radii) - len(powers)
        for pw, val in zip(powers, sol):
            coef[(m, pw)] = complex(val)
        if m == 1:
            cov = np.linalg.inv((A / sc).T @ (A / sc))
            i1 = powers.index(1)
            s2 = np.sum(np.abs(r) ** 2) / max(1, len(radii) - len(powers))
            b_err = float(np.sqrt(s2 * cov[i1, i1]) / sc[i1])
    # energy outside the fitted modes counts as residual
    fitted = {m % n_t for m in PROFILES}
    rest = [j for j in range(n_t) if j not in fitted]
    misfit += float(np.sum(np.abs(F[:, rest]) ** 2))
    residual = float(np.sqrt(misfit / n_r))
    return coef, residual, b_err


def _sample_points(geom, k, radii, n_theta):
    lp = geom.local_parameter(k)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if np.max(radii) >= lp.radius_x:
        raise RadiusOutsideSeriesDisk(
            f"radius {np.max(radii):.3g} outside the series disk {lp.radius_x:.3g}")
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    x = radii[:, None] * np.exp(1j * th)[None, :]
    w = lp.w_of(x)
    return lp, x, w


def extract_coeffs(mesh, fld, geom, k, radii=None, n_theta=N_THETA, locator=None):
    """Coefficients ``(c, a, b)`` of ``fld`` at critical point ``k``.

    ``fld`` is a vertex vector, a ``YField`` (whose exact ``1/x`` part is
    removed before fitting) or a callable ``fld(w, chart)``.
    """
    if radii is None:
        if hasattr(fld, "correction"):
            radii = default_radii(mesh, geom, k, lam=fld.lam, delta=fld.delta)
        else:
            radii = default_radii(mesh, geom, k)
    lp, x, w = _sample_points(geom, k, radii, n_theta)
    shift = (0.0, 0.0, 0.0)
    x_inv = 0.0
    if callable(fld) and not hasattr(fld, "correction"):
        vals = np.asarray(fld(w, lp.chart), dtype=complex)
    else:
        loc = locator if locator is not None else Locator(mesh)
        if hasattr(fld, "correction"):
            # inside |x| < delta the closed form is s = 1/x + known Taylor terms,
            # so only the mesh correction is fitted
            if np.max(radii) >= fld.delta:
                raise RadiusOutsideSeriesDisk(
                    f"radius {np.max(radii):.3g} reaches the cutoff band (delta={fld.delta:.3g})")
            vals = -loc.interpolate(fld.correction, w, lp.chart)
            shift = fld.singular_taylor()
            x_inv = 1.0
        else:
            vals = loc.interpolate(np.asarray(fld), w, lp.chart)
    coef, residual, b_err = fit_modes(vals, radii)
    sing = {
        "x^-1": coef[(-1, -1)] + x_inv,
        "xbar^-1": coef[(1, -1)],
        "log": coef[(0, None)],
    }
    return CoefficientTriple(coef[(0, 0)] + shift[0], coef[(-1, 1)] + shift[1],
                             coef[(1, 1)] + shift[2], residual, b_err,
                             sing, tuple(float(r) for r in radii))


def b_of_lambda(op, geom, k, lam, radii=None, delta=None, n_theta=N_THETA, full=False,
                ansatz="gaussian"):
    """Coefficient ``b(lambda)`` of the special solution ``Y(lambda)``."""
    from .fem import build_Y

    Y = build_Y(op, geom, k, lam, delta, ansatz=ansatz)
    tr = extract_coeffs(op.mesh, Y, geom, k, radii, n_theta)
    return (tr, Y) if full else tr.b


def b_infinity_reference(metric, z_k, h=1e-5):
    """``-(1/4) d/dz log rho`` at the critical value ``z_k``."""
    z_k = complex(z_k)
    eval_rho(metric, z_k)  # raises at metric singularities
    if metric.kind is MetricKind.ROUND:
        return np.conj(z_k) / (2.0 * (1.0 + abs(z_k) ** 2))
    if metric.kind is MetricKind.FLAT_CONICAL:
        return complex(-0.25 * sum(b / (z_k - p) for p, b in metric.singularities))
    return wirtinger_log_rho(metric, z_k, h) * -0.25


def wirtinger_log_rho(metric, z, h=1e-5):
    """Central-difference ``d/dz log rho = (d_x - i d_y)/2``."""
    f = lambda q: float(metric.log_rho(q, 0))
    dx = (f(z + h) - f(z - h)) / (2 * h)
    dy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    return complex(0.5 * (dx - 1j * dy))


def eigen_coefficients(mesh, spectrum, geom, k, j_max=None, radii=None, n_theta=N_THETA):
    """Per-eigenfunction triples; ``b**2`` of each is branch invariant."""
    V = spectrum.eigenvectors
    n = V.shape[1] if j_max is None else min(V.shape[1], j_max + 1)
    if radii is None:
        lam_top = float(spectrum.eigenvalues[n - 1]) if n > 1 else None
        radii = default_radii(mesh, geom, k, lam=lam_top)
    lp, x, w = _sample_points(geom, k, radii, n_theta)
    loc = Locator(mesh)
    # one location pass for all eigenvectors
    flat = w.ravel()
    other = np.abs(flat) > 1.0
    vals = np.zeros((len(flat), n))
    for c, sel in ((lp.chart, ~other), (1 - lp.chart, other)):
        if not np.any(sel):
            continue
        q = flat[sel] if c == lp.chart else 1.0 / flat[sel]
        tid, bary = loc.locate(q, c)
        vals[sel] = np.einsum("pi,pij->pj", bary, V[mesh.tri[tid], :n])
    out = []
    for j in range(n):
        coef, residual, b_err = fit_modes(vals[:, j].reshape(w.shape).astype(complex), radii)
        sing = {"x^-1": coef[(-1, -1)], "xbar^-1": coef[(1, -1)], "log": coef[(0, None)]}
        out.append(CoefficientTriple(coef[(0, 0)], coef[(-1, 1)], coef[(1, 1)], residual, b_err,
                                     sing, tuple(float(r) for r in radii)))
    return out


def integral_Y2(op, Y, order=7, conjugate=False):
    """``int Y^2 dvol`` (bilinear) or, with ``conjugate``, ``int |Y|^2 dvol``.

    The singular part is integrated with a high-order rule on its support;
    the cross term and the FEM part are exact for the P1 correction.
    """
    mesh = op.mesh
    geom = op.geom
    p = mesh.triangle_coords()
    rule = qd.triangle_rule(order)
    s, t, _ = rule
    phi = np.stack([1.0 - s - t, s, t])
    from .fem import _support_triangles

    sel = np.where(_support_triangles(mesh, Y.lp, Y.delta))[0]
    S = 0.0 + 0.0j
    cross = np.zeros(op.n, dtype=complex)
    for chart in (0, 1):
        ts = sel[mesh.tchart[sel] == chart]
        if len(ts) == 0:
            continue
        nodes, wq = qd.map_rule(p[ts, 0], p[ts, 1], p[ts, 2], rule)
        dens = geom.density(nodes, chart)
        sing = Y.singular(nodes, chart)
        left = np.conj(sing) if conjugate else sing
        S += np.sum(wq * dens * left * sing)
        loc = np.einsum("tq,iq->ti", wq * dens * left, phi)
        np.add.at(cross, mesh.tri[ts], loc)
    u = Y.correction
    if conjugate:
        return float((S - 2.0 * (cross @ u).real + np.conj(u) @ (op.M @ u)).real)
    return complex(S - 2.0 * cross @ u + u @ (op.M @ u))
