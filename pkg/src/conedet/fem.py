"""Piecewise-linear Friedrichs Laplacian of a pulled-back conical metric.

The Dirichlet energy is conformally invariant, so the stiffness matrix is the
flat P1 stiffness in chart coordinates; the metric only enters the mass
matrix, weighted by the pullback density.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quadrature as qd
from .cover import ConeOrigin
from .errors import ConvergenceFailure, CutoffOverlap, QuadratureFailure, SolverFailure

log = logging.getLogger(__name__)

DENSE_LIMIT = 3000
QUAD_ORDER = 4
SINGULAR_ORDER = (8, 6)


@dataclass(eq=False)
class DiscreteOperator:
    """Generalized pair ``K u = lambda M u`` on the vertices of ``mesh``."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    mesh: object
    geom: object
    dof: np.ndarray
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def volume(self):
        return float(self.M.sum())


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)


def _stiffness(p, tri, n):
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    area = 0.5 * (np.conj(e2) * (-e1)).imag
    E = np.stack([e0, e1, e2], axis=1)
    # K_ij = (e_i . e_j) / (4 A) for the opposite edge vectors
    dots = (np.conj(E[:, :, None]) * E[:, None, :]).real / (4.0 * area[:, None, None])
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.coo_matrix((dots.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _cone_vertex_betas(mesh, geom):
    """Map vertex id -> beta for preimages of metric cone points."""
    out = {}
    for mk in mesh.marked:
        if mk.kind == ConeOrigin.PREIMAGE.value:
            out[mk.vertex] = geom.metric.singularities[mk.index][1]
    return out


def _mass(mesh, geom, order=QUAD_ORDER):
    n = mesh.n_vertices
    p = mesh.triangle_coords()
    tri = mesh.tri.copy()
    betas = _cone_vertex_betas(mesh, geom)
    sing_tri = np.zeros(len(tri), dtype=bool)
    rows, cols, vals = [], [], []

    def accumulate(pp, tt, chart, rule):
        s, t, _ = rule
        nodes, w = qd.map_rule(pp[:, 0], pp[:, 1], pp[:, 2], rule)
        dens = geom.density(nodes, chart)
        if not np.all(np.isfinite(dens)):
            raise QuadratureFailure("non-finite density at a quadrature node")
        phi = np.stack([1.0 - s - t, s, t])  # (3, Q)
        loc = np.einsum("tq,iq,jq->tij", w * dens, phi, phi)
        rows.append(np.repeat(tt, 3, axis=1).ravel())
        cols.append(np.tile(tt, (1, 3)).ravel())
        vals.append(loc.ravel())

    for vid, beta in betas.items():
        hit = np.where(np.any(tri == vid, axis=1))[0]
        rule = qd.vertex_singular_rule(SINGULAR_ORDER[0], SINGULAR_ORDER[1], float(beta))
        for t_idx in hit:
            pos = int(np.where(tri[t_idx] == vid)[0][0])
            perm = [pos, (pos + 1) % 3, (pos + 2) % 3]
            if np.sum(np.isin(tri[t_idx], list(betas))) > 1:
                raise QuadratureFailure("triangle touches two metric cone vertices")
            accumulate(p[t_idx][perm][None, :], tri[t_idx][perm][None, :],
                       int(mesh.tchart[t_idx]), rule)
        sing_tri[hit] = True
    rule = qd.triangle_rule(order)
    for chart in (0, 1):
        sel = (~sing_tri) & (mesh.tchart == chart)
        if np.any(sel):
            accumulate(p[sel], tri[sel], chart, rule)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def assemble(mesh, geom, order=QUAD_ORDER):
    """Stiffness and density-weighted mass matrices on ``mesh``."""
    n = mesh.n_vertices
    p = mesh.triangle_coords()
    K = _stiffness(p, mesh.tri, n)
    K = 0.5 * (K + K.T)
    M = _mass(mesh, geom, order)
    M = 0.5 * (M + M.T)
    return DiscreteOperator(K.tocsr(), M.tocsr(), mesh, geom, np.arange(n))


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _orthonormalize(V, M, lam):
    # re-orthonormalize inside clusters only, so distinct eigenvectors are untouched
    G = V.T @ (M @ V)
    d = np.sqrt(np.diag(G))
    V = V / d
    i = 0
    n = len(lam)
    while i < n:
        j = i + 1
        while j < n and abs(lam[j] - lam[i]) <= 1e-6 * max(1.0, abs(lam[i])):
            j += 1
        if j - i > 1:
            B = V[:, i:j]
            Gc = B.T @ (M @ B)
            L = np.linalg.cholesky(Gc)
            V[:, i:j] = np.linalg.solve(L, B.T).T
        i = j
    return V


def eigensolve(op, n_ev, tol=1e-10, sigma=None, v0=None):
    """Lowest ``n_ev + 1`` eigenpairs of ``K u = lambda M u``.

    ``v0`` seeds the Lanczos start vector of the iterative path (ignored by
    the dense path).
    """
    n = op.n
    k = n_ev + 1
    if k >= n:
        raise ValueError(f"n_ev must be below the dof count {n}")
    if sigma is None:
        sigma = -1.0 / op.volume
    if n < DENSE_LIMIT:
        # graded meshes make M ill-conditioned, so factor K - sigma M instead:
        # M v = mu (K - sigma M) v with lambda = sigma + 1/mu
        A = (op.K - sigma * op.M).toarray()
        mu, V = sla.eigh(op.M.toarray(), A, subset_by_index=[n - k, n - 1])
        lam, V = sigma + 1.0 / mu[::-1], V[:, ::-1]
    else:
        try:
            lam, V = spla.eigsh(op.K, k=k, M=op.M, sigma=sigma, which="LM", tol=0.0, v0=v0)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(f"ARPACK converged {len(exc.eigenvalues)} of {k} pairs",
                                     len(exc.eigenvalues)) from exc
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
    V = _orthonormalize(np.real(V), op.M, lam)
    V = _fix_signs(V)
    MV = op.M @ V
    R = op.K @ V - MV * lam
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(MV, axis=0)
    bad = res > max(tol, 1e-8) * max(1.0, np.max(np.abs(lam)))
    if np.any(bad):
        raise ConvergenceFailure(f"{int(bad.sum())} eigenpairs exceed the residual tolerance",
                                 int(np.argmax(bad)))
    return Spectrum(lam, V, res)


def _factor(op, lam):
    key = float(lam)
    f = op._factors.get(key)
    if f is None:
        A = (op.K - lam * op.M).tocsc()
        try:
            f = spla.splu(A)
        except RuntimeError as exc:
            raise SolverFailure(f"factorization failed at lambda={lam}") from exc
        if len(op._factors) > 8:
            op._factors.clear()
        op._factors[key] = f
    return f


def solve_load(op, lam, load, rtol=1e-10):
    """Solve ``(K - lam M) u = load`` for a (possibly complex) load vector."""
    if not lam < 0:
        raise ValueError("lambda must be strictly negative")
    load = np.asarray(load)
    if not np.any(load):
        return np.zeros_like(load)
    f = _factor(op, lam)
    if np.iscomplexobj(load):
        u = f.solve(np.ascontiguousarray(load.real)) + 1j * f.solve(np.ascontiguousarray(load.imag))
    else:
        u = f.solve(np.ascontiguousarray(load))
    A = op.K - lam * op.M
    for _ in range(2):
        r = load - A @ u
        if np.linalg.norm(r) <= rtol * np.linalg.norm(load):
            break
        if np.iscomplexobj(r):
            u = u + f.solve(np.ascontiguousarray(r.real)) + 1j * f.solve(np.ascontiguousarray(r.imag))
        else:
            u = u + f.solve(np.ascontiguousarray(r))
    r = load - A @ u
    if np.linalg.norm(r) > rtol * np.linalg.norm(load):
        raise SolverFailure(f"relative residual {np.linalg.norm(r) / np.linalg.norm(load):.2e}")
    return u


def solve_shifted(op, lam, rhs, rtol=1e-10):
    """``u`` with ``(K - lam M) u = M rhs``."""
    return solve_load(op, lam, op.M @ np.asarray(rhs), rtol)


# ---------------------------------------------------------------------------
# the special solution Y(lambda)
# ---------------------------------------------------------------------------

def cutoff(r, delta):
    """Quintic C^2 cutoff in ``r``: 1 on ``[0, delta]``, 0 on ``[2 delta, inf)``.

    Returns ``(chi, chi', chi'')``.
    """
    s = np.clip((np.asarray(r, dtype=float) - delta) / delta, 0.0, 1.0)
    chi = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    d1 = -30.0 * s**2 * (1.0 - s) ** 2 / delta
    d2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / delta**2
    return chi, d1, d2


DELTA_FRACTION = 0.3


def default_delta(geom, k, mesh=None):
    """Cutoff radius: ``DELTA_FRACTION`` of the ``|x|``-distance to the nearest cone point.

    With a mesh, the distance is measured to the edge of the other cone
    points' grading zones.
    """
    lp = geom.local_parameter(k)
    d = lp.radius_x
    zones = {}
    if mesh is not None:
        for mk in mesh.marked:
            r0 = mk.r0 if np.isfinite(mk.r0) else 0.0
            zones[(mk.kind, mk.index)] = max(r0, zones.get((mk.kind, mk.index), 0.0))
    for c in geom.cone_points:
        loc = c.in_chart(lp.chart)
        if loc is None or abs(loc - lp.center) < 1e-12:
            continue
        if abs(loc - lp.center) < lp.radius_w:
            reach = float(abs(lp.x_of(loc)))
            reach -= zones.get((c.origin.value, c.index), 0.0) * float(abs(lp.dx_dw(loc)))
            d = min(d, reach)
    if not np.isfinite(d):
        d = 1.0
    return DELTA_FRACTION * d


@dataclass
class YField:
    """``Y = s - u`` with closed-form singular part ``s`` and a P1 correction ``u``.

    ``s = chi(|x|) exp(-mu |x|^2) / x``; ``mu = 0`` is the plain ``chi / x``
    ansatz.  Any ``mu >= 0`` gives the same ``Y``, because the two singular
    parts differ by an element of the Friedrichs domain.
    """

    k: int
    lam: float
    delta: float
    mu: float
    lp: object
    correction: np.ndarray

    def singular(self, w, chart):
        """``s`` at points given in ``chart``."""
        w = np.asarray(w, dtype=complex)
        if chart != self.lp.chart:
            with np.errstate(divide="ignore"):
                w = 1.0 / w
        out = np.zeros(w.shape, dtype=complex)
        near = np.abs(w - self.lp.center) < min(self.lp.radius_w, 4.0)
        if np.any(near):
            x = self.lp.x_of(w[near])
            r = np.abs(x)
            chi, _, _ = cutoff(r, self.delta)
            with np.errstate(divide="ignore", invalid="ignore"):
                out[near] = np.where(chi > 0, chi * np.exp(-self.mu * r**2) / x, 0.0)
        return out

    def singular_taylor(self):
        """Coefficients ``(c, a, b)`` of ``s - 1/x`` inside ``|x| < delta``."""
        return 0.0, -self.mu, 0.0


def _support_triangles(mesh, lp, delta):
    """Triangles that may meet ``|x| <= 2 delta``."""
    p = mesh.triangle_coords()
    if lp.chart == 0:
        q = p
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            q = 1.0 / p
    q = np.where(mesh.tchart[:, None] == lp.chart, p, q)
    near = np.all(np.isfinite(q), axis=1) & (np.min(np.abs(q - lp.center), axis=1) < lp.radius_w)
    out = np.zeros(len(p), dtype=bool)
    idx = np.where(near)[0]
    if len(idx):
        x = np.abs(lp.x_of(q[idx]))
        diam = np.max(np.abs(q[idx] - np.roll(q[idx], 1, axis=1)), axis=1)
        scale = np.abs(lp.dx_dw(q[idx].mean(axis=1)))
        out[idx] = np.min(x, axis=1) - 2 * diam * scale < 2.0 * delta
    return out


def model_decay(geom, k, lam):
    """``mu = sqrt(|lam| rho(z_k))`` of the exact model solution ``exp(-mu|x|^2)/x``."""
    rho_k = float(geom.metric.rho(geom.critical_values[k], 0))
    return float(np.sqrt(abs(lam) * rho_k))


def _singular_source(geom, lp, lam, delta, mu, nodes, chart):
    """``(g * density, s)`` at quadrature nodes, ``g = (Delta - lam) s``.

    In ``x`` the density is ``4 |x|^2 rho(z_k + x^2)``, so with ``s = F(r)/x``
    and ``F = chi E``, ``E = exp(-mu r^2)``:
    ``g dens = -|x'|^2 [E (chi'' - chi'/r - 4 mu r chi') + 4 r^2 chi E (mu^2 + lam rho_hat)] / x``.
    """
    if chart == lp.chart:
        wc = nodes
        jac2 = np.ones(nodes.shape)
    else:
        wc = 1.0 / nodes
        jac2 = 1.0 / np.abs(nodes) ** 4  # |dw/dv|^2
    x = lp.x_of(wc)
    dx = lp.dx_dw(wc)
    r = np.abs(x)
    chi, d1, d2 = cutoff(r, delta)
    E = np.exp(-mu * r**2)
    rho_hat = geom.metric.rho(lp.z_k + x**2, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        radial = E * (d2 - np.where(r > 0, d1 / r, 0.0) - 4.0 * mu * r * d1)
        radial = radial + 4.0 * r**2 * chi * E * (mu**2 + lam * rho_hat)
        gd = np.where(r > 0, -np.abs(dx) ** 2 * jac2 * radial / x, 0.0)
        s = np.where(chi > 0, chi * E / x, 0.0)
    return gd, s


def y_load(op, geom, k, lam, delta, mu=0.0, order=7):
    """Load vector ``int g phi_i dvol`` for the singular part ``s``."""
    mesh = op.mesh
    lp = geom.local_parameter(k)
    sel = np.where(_support_triangles(mesh, lp, delta))[0]
    rule = qd.triangle_rule(order)
    s, t, _ = rule
    phi = np.stack([1.0 - s - t, s, t])
    load = np.zeros(op.n, dtype=complex)
    p = mesh.triangle_coords()
    for chart in (0, 1):
        ts = sel[mesh.tchart[sel] == chart]
        if len(ts) == 0:
            continue
        nodes, w = qd.map_rule(p[ts, 0], p[ts, 1], p[ts, 2], rule)
        gd, _ = _singular_source(geom, lp, lam, delta, mu, nodes, chart)
        loc = np.einsum("tq,iq->ti", w * gd, phi)
        np.add.at(load, mesh.tri[ts], loc)
    return load


def _check_cutoff(op, geom, k, delta):
    lp = geom.local_parameter(k)
    if 2.0 * delta >= lp.radius_x:
        raise CutoffOverlap(f"cutoff support 2*delta={2 * delta:.3g} leaves the series disk")
    for mk in op.mesh.marked:
        if mk.kind == ConeOrigin.CRITICAL.value and mk.index == k:
            continue
        c = [cp for cp in geom.cone_points if cp.origin.value == mk.kind and cp.index == mk.index]
        for cp in c:
            loc = cp.in_chart(lp.chart)
            if loc is None or abs(loc - lp.center) >= lp.radius_w:
                continue
            zone = mk.r0 if np.isfinite(mk.r0) else 0.0
            reach = float(abs(lp.x_of(loc))) - zone * float(abs(lp.dx_dw(loc)))
            if reach <= 2.0 * delta:
                raise CutoffOverlap(f"cutoff support 2*delta={2 * delta:.3g} meets cone point {loc}")


def build_Y(op, geom, k, lam, delta=None, ansatz="plain"):
    """Special solution ``Y(lambda)`` at critical point ``k``.

    ``ansatz="plain"`` uses ``chi/x``; ``"gaussian"`` uses
    ``chi exp(-mu|x|^2)/x`` with the model decay rate, which leaves a much
    smaller correction for the mesh to resolve when ``|lam|`` is large.
    """
    if not lam < 0:
        raise ValueError("lambda must be strictly negative")
    if delta is None:
        delta = default_delta(geom, k, op.mesh)
    if ansatz == "plain":
        mu = 0.0
    elif ansatz == "gaussian":
        mu = model_decay(geom, k, lam)
    else:
        raise ValueError(f"unknown ansatz {ansatz!r}")
    _check_cutoff(op, geom, k, delta)
    load = y_load(op, geom, k, lam, delta, mu)
    u = solve_load(op, lam, load)
    return YField(k, float(lam), float(delta), mu, geom.local_parameter(k), u)
