"""Two-chart triangulations of the domain sphere.

Chart 0 is the unit disk ``|w| <= 1`` and chart 1 the unit disk ``|v| <= 1``
with ``v = 1/w``.  Both disks share the equator nodes ``w = exp(i theta_m)``,
whose chart-1 coordinates are the exact conjugates ``exp(-i theta_m)``.
Interior points are placed by a graded sizing function and relaxed with a
spring smoother on Delaunay triangulations; cone points and equator nodes are
fixed throughout.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .errors import ConePointsTooClose, MeshFormatError, QualityFailure
from .cover import ConeOrigin

log = logging.getLogger(__name__)

MIN_ANGLE_DEG = 20.0
R0_CAP = 0.3
HEADER = "CONEDET-MESH v1"


@dataclass
class Marked:
    vertex: int
    kind: str
    index: int
    q: float
    r0: float


@dataclass
class SphereMesh:
    """Vertex/triangle tables of a two-chart sphere triangulation.

    ``w0``/``w1`` hold each vertex's coordinate in chart 0/1 (``nan`` where
    the vertex is at that chart's infinity or not represented there).  The
    canonical chart is ``vchart``; equator vertices have ``vchart == 0`` and
    ``on_equator`` set.
    """

    w0: np.ndarray
    w1: np.ndarray
    vchart: np.ndarray
    on_equator: np.ndarray
    tri: np.ndarray
    tchart: np.ndarray
    marked: list
    h: float
    level: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self):
        return len(self.vchart)

    @property
    def n_triangles(self):
        return len(self.tri)

    def coords(self, chart):
        return self.w0 if chart == 0 else self.w1

    def triangle_coords(self):
        """Complex vertex coordinates ``(T, 3)`` of each triangle in its own chart."""
        c0 = self.w0[self.tri]
        c1 = self.w1[self.tri]
        return np.where(self.tchart[:, None] == 0, c0, c1)

    def vertex_coord(self, i):
        """(chart, coordinate) of vertex ``i`` in its canonical chart."""
        c = int(self.vchart[i])
        return c, complex(self.coords(c)[i])

    def edges(self):
        e = np.concatenate([self.tri[:, [0, 1]], self.tri[:, [1, 2]], self.tri[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def boundary_edge_count(self):
        """Edges used by exactly one triangle (zero for a closed surface)."""
        e = np.concatenate([self.tri[:, [0, 1]], self.tri[:, [1, 2]], self.tri[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return int(np.sum(counts == 1))

    def chart_boundary_edge_count(self, chart):
        sel = self.tri[self.tchart == chart]
        e = np.concatenate([sel[:, [0, 1]], sel[:, [1, 2]], sel[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return int(np.sum(counts == 1))

    def signed_areas(self):
        p = self.triangle_coords()
        return 0.5 * ((p[:, 1] - p[:, 0]).conjugate() * (p[:, 2] - p[:, 0])).imag

    def angles(self):
        p = self.triangle_coords()
        out = []
        for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            u = p[:, b] - p[:, a]
            v = p[:, c] - p[:, a]
            out.append(np.abs(np.angle(v / u)))
        return np.degrees(np.stack(out, axis=1))

    def min_angle(self):
        return float(self.angles().min())

    def local_size(self, vertex):
        """Longest edge among triangles touching ``vertex`` (chart units)."""
        sel = np.any(self.tri == vertex, axis=1)
        p = self.triangle_coords()[sel]
        e = np.abs(np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]))
        return float(e.max())

    def check(self, min_angle=MIN_ANGLE_DEG):
        """Raise ``QualityFailure`` unless every structural invariant holds."""
        if np.any(self.signed_areas() <= 0):
            raise QualityFailure("non-positively oriented triangle")
        if self.boundary_edge_count() != 0:
            raise QualityFailure("mesh is not closed")
        if self.euler_characteristic() != 2:
            raise QualityFailure("mesh is not a sphere")
        ma = self.min_angle()
        if ma < min_angle:
            raise QualityFailure(f"minimum angle {ma:.2f} deg below {min_angle} deg")
        e = np.concatenate([self.tri[:, [0, 1]], self.tri[:, [1, 2]], self.tri[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise QualityFailure("non-manifold edge")
        return True


# ---------------------------------------------------------------------------
# sizing
# ---------------------------------------------------------------------------

def _chart_distance(a, b):
    """Distance between two sphere points given as (chart, coord) pairs."""
    best = np.inf
    for chart in (0, 1):
        pa = _in_chart(a, chart)
        pb = _in_chart(b, chart)
        if pa is not None and pb is not None:
            best = min(best, abs(pa - pb))
    return best


def _in_chart(pt, chart):
    c, x = pt
    if c == chart:
        return x
    if x == 0:
        return None
    return 1.0 / x


def default_q(cone):
    if cone.origin is ConeOrigin.CRITICAL:
        return 3.0
    return max(2.0, 1.0 / (cone.beta + 1.0))


class Sizing:
    """Graded target edge length ``h (r/R0)^(1 - 1/q)`` inside each cone zone."""

    def __init__(self, h, centres, qs, r0s):
        self.h = float(h)
        self.centres = centres  # list of (chart, coord)
        self.qs = [float(q) for q in qs]
        self.r0s = [float(r) for r in r0s]
        self.rmins = [r0 * min(1.0, self.h / r0) ** q if q > 1 else r0
                      for q, r0 in zip(self.qs, self.r0s)]

    def __call__(self, p, chart):
        p = np.asarray(p, dtype=complex)
        s = np.full(p.shape, self.h)
        for cen, q, r0, rmin in zip(self.centres, self.qs, self.r0s, self.rmins):
            c = _in_chart(cen, chart)
            if c is None or q <= 1.0:
                continue
            r = np.abs(p - c)
            g = self.h * (np.maximum(r, rmin) / r0) ** (1.0 - 1.0 / q)
            s = np.where(r < r0, np.minimum(s, g), s)
        return s

    def zones(self, chart):
        out = []
        for cen, q, r0, rmin in zip(self.centres, self.qs, self.r0s, self.rmins):
            c = _in_chart(cen, chart)
            if c is not None and q > 1.0 and rmin < r0:
                out.append((c, r0, rmin))
        return out


# ---------------------------------------------------------------------------
# point generation and smoothing
# ---------------------------------------------------------------------------

def _equator_angles(sizing, fixed_angles, n_fine=4096):
    """Equidistributed equator angles w.r.t. ``1/size``, containing ``fixed_angles``."""
    th = np.linspace(0.0, 2 * np.pi, n_fine + 1)
    pw = np.exp(1j * th)
    s = np.minimum(sizing(pw, 0), sizing(np.conj(pw), 1))
    dens = 1.0 / s
    anchors = sorted(set([0.0] + [a % (2 * np.pi) for a in fixed_angles]))
    if fixed_angles:
        anchors = sorted(a % (2 * np.pi) for a in fixed_angles)
    anchors = anchors + [anchors[0] + 2 * np.pi]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(th))])
    total = np.concatenate([cum, cum[-1] + cum[1:]])
    th2 = np.concatenate([th, 2 * np.pi + th[1:]])
    out = []
    for a, b in zip(anchors[:-1], anchors[1:]):
        ca, cb = np.interp([a, b], th2, total)
        n = max(1, int(round(cb - ca)))
        targets = ca + (cb - ca) * np.arange(n) / n
        out.extend(np.interp(targets, total, th2))
    out = np.mod(np.array(out), 2 * np.pi)
    # anchors must be exact
    for a in anchors[:-1]:
        out[np.argmin(np.abs(np.angle(np.exp(1j * (out - a)))))] = a % (2 * np.pi)
    return np.sort(out)


def _ring_points(centre, r0, rmin, sizing, chart):
    """Concentric rings of graded points about a cone point (centre excluded)."""
    pts = []
    r = 0.0
    i = 0
    while True:
        s = float(sizing(centre + r + 1e-300, chart)) if r > 0 else float(sizing(centre + rmin, chart))
        r = r + float(sizing(centre + r + 0.5 * s, chart))
        if r > r0:
            break
        s_here = float(sizing(centre + r, chart))
        n = max(6, int(round(2 * np.pi * r / s_here)))
        off = 0.5 * (i % 2)
        ang = 2 * np.pi * (np.arange(n) + off) / n
        pts.append(centre + r * np.exp(1j * ang))
        i += 1
    return np.concatenate(pts) if pts else np.zeros(0, dtype=complex)


def _hex_points(h):
    n = int(np.ceil(1.2 / h)) + 2
    i, j = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    x = h * (i + 0.5 * (j % 2))
    y = h * j * np.sqrt(3) / 2
    p = (x + 1j * y).ravel()
    return p[np.abs(p) < 1.0]


def _thin(points, sizing, chart, fixed, frac=0.6):
    """Greedy removal of points closer than ``frac * size`` to an accepted point."""
    from scipy.spatial import cKDTree

    s = sizing(points, chart)
    order = np.argsort(s)
    pts_xy = np.column_stack([points.real, points.imag])
    keep = np.zeros(len(points), dtype=bool)
    fixed_xy = np.column_stack([fixed.real, fixed.imag]) if len(fixed) else np.zeros((0, 2))
    tree_fixed = cKDTree(fixed_xy) if len(fixed_xy) else None
    accepted = []
    tree = None
    batch = []
    for idx in order:
        r = frac * s[idx]
        if tree_fixed is not None and tree_fixed.query_ball_point(pts_xy[idx], r):
            continue
        ok = True
        if tree is not None and tree.query_ball_point(pts_xy[idx], r):
            ok = False
        if ok:
            for b in batch:
                if np.hypot(*(pts_xy[idx] - pts_xy[b])) < r:
                    ok = False
                    break
        if ok:
            keep[idx] = True
            batch.append(idx)
            if len(batch) >= 64:
                accepted.extend(batch)
                batch = []
                tree = cKDTree(pts_xy[accepted])
    return points[keep]


def _triangulate(points):
    xy = np.column_stack([points.real, points.imag])
    return Delaunay(xy).simplices


def _orient(points, tri):
    p = points[tri]
    area = ((p[:, 1] - p[:, 0]).conjugate() * (p[:, 2] - p[:, 0])).imag
    tri = tri.copy()
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri, np.abs(area) / 2


def _min_angles(points, tri):
    p = points[tri]
    out = []
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        out.append(np.abs(np.angle((p[:, c] - p[:, a]) / (p[:, b] - p[:, a]))))
    return np.degrees(np.min(np.stack(out, axis=1), axis=1))


def _smooth(points, n_fixed, sizing, chart, iters=200, dt=0.2, fscale=1.2):
    """Spring relaxation of the free points (indices >= n_fixed)."""
    p = points.copy()
    tri = _triangulate(p)
    last = p.copy()
    for it in range(iters):
        if it == 0 or np.max(np.abs(p - last)) > 0.05 * np.min(sizing(p, chart)) or it % 10 == 0:
            tri = _triangulate(p)
            last = p.copy()
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        e = np.unique(e, axis=0)
        d = p[e[:, 0]] - p[e[:, 1]]
        L = np.abs(d)
        hb = sizing(0.5 * (p[e[:, 0]] + p[e[:, 1]]), chart)
        L0 = hb * fscale * np.sqrt(np.sum(L**2) / np.sum(hb**2))
        F = np.maximum(L0 - L, 0.0)
        fv = F / L * d
        move = np.zeros(len(p), dtype=complex)
        np.add.at(move, e[:, 0], fv)
        np.add.at(move, e[:, 1], -fv)
        move[:n_fixed] = 0.0
        # relative step: sizes vary by orders of magnitude under grading
        s_loc = sizing(p, chart)
        step = dt * move
        cap = 0.3 * s_loc
        big = np.abs(step) > cap
        step[big] = step[big] / np.abs(step[big]) * cap[big]
        p = p + step
        r = np.abs(p)
        lim = 1.0 - 0.4 * sizing(p, chart)
        out = (r > lim)
        out[:n_fixed] = False
        p[out] = p[out] / r[out] * lim[out]
        if np.max(np.abs(step[n_fixed:]) / s_loc[n_fixed:], initial=0.0) < 1e-3:
            break
    tri = _triangulate(p)
    return p, tri


def _chart_mesh(chart, sizing, eq_angles, fixed_interior, iters):
    eq = np.exp(1j * eq_angles) if chart == 0 else np.exp(-1j * eq_angles)
    fixed = np.concatenate([eq, np.asarray(fixed_interior, dtype=complex)])
    cand = [_hex_points(sizing.h)]
    for c, r0, rmin in sizing.zones(chart):
        if abs(c) < 1.0 + r0:
            cand.append(_ring_points(c, r0, rmin, sizing, chart))
    cand = np.concatenate(cand)
    lim = 1.0 - 0.4 * sizing(cand, chart)
    cand = cand[np.abs(cand) < lim]
    # cone-zone interiors come from rings only
    zone_mask = np.zeros(len(cand), dtype=bool)
    hexn = len(_hex_points(sizing.h))
    for c, r0, rmin in sizing.zones(chart):
        zone_mask[:hexn] |= np.abs(cand[:hexn] - c) < r0
    cand = cand[~zone_mask]
    free = _thin(cand, sizing, chart, fixed)
    pts = np.concatenate([fixed, free])
    pts, tri = _smooth(pts, len(fixed), sizing, chart, iters=iters)
    tri, _ = _orient(pts, tri)
    return pts, tri, len(eq)


def build_mesh(geom, h, q=None, r0=None, iters=300, min_angle=MIN_ANGLE_DEG):
    """Graded two-chart triangulation with every cone point of ``geom`` as a vertex.

    Parameters
    ----------
    geom : CoverGeometry
    h : float
        Target edge length (chart units) away from cone points.
    q : float or dict, optional
        Grading exponent for all cone points, or a mapping
        ``{"critical": q_c, "preimage": q_p}``.  Defaults: 3 at critical
        points and ``max(2, 1/(beta+1))`` at preimages of metric cone points.
    r0 : float, optional
        Grading radius override; default is half the distance to the nearest
        other cone point, capped at 0.3.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    cones = list(geom.cone_points)
    pts = []
    for c in cones:
        chart, x = c.chart, c.coord
        if chart == 0 and abs(abs(x) - 1.0) < 1e-12:
            x = x / abs(x)
        pts.append((chart, complex(x)))
    for i in range(len(pts)):
        for j in range(i):
            d = _chart_distance(pts[i], pts[j])
            if d <= 4 * h:
                raise ConePointsTooClose(
                    f"cone points {pts[i]} and {pts[j]} are {d:.3g} apart (need > 4h = {4 * h:.3g})"
                )
    qs, r0s = [], []
    for i, c in enumerate(cones):
        if q is None:
            qi = default_q(c)
        elif isinstance(q, dict):
            qi = float(q.get(c.origin.value, default_q(c)))
        else:
            qi = float(q)
        if qi < 1:
            raise ValueError("grading exponent q must be >= 1")
        qs.append(qi)
        dmin = min([_chart_distance(pts[i], pts[j]) for j in range(len(pts)) if j != i] + [np.inf])
        r0s.append(min(R0_CAP, 0.5 * dmin) if r0 is None else float(r0))
    sizing = Sizing(h, pts, qs, r0s)

    fixed_angles = [float(np.angle(x)) for chart, x in pts if chart == 0 and abs(abs(x) - 1.0) < 1e-12]
    eq_angles = _equator_angles(sizing, fixed_angles)
    n_eq = len(eq_angles)

    interior = {0: [], 1: []}
    for k, (chart, x) in enumerate(pts):
        if chart == 0 and abs(abs(x) - 1.0) < 1e-12:
            continue
        interior[chart].append((k, x))

    p0, t0, _ = _chart_mesh(0, sizing, eq_angles, [x for _, x in interior[0]], iters)
    p1, t1, _ = _chart_mesh(1, sizing, eq_angles, [x for _, x in interior[1]], iters)

    # global numbering: chart-0 points (equator first), then chart-1 non-equator points
    n0 = len(p0)
    n1_free = len(p1) - n_eq
    nv = n0 + n1_free
    w0 = np.full(nv, np.nan + 0j)
    w1 = np.full(nv, np.nan + 0j)
    vchart = np.zeros(nv, dtype=np.int8)
    on_eq = np.zeros(nv, dtype=bool)
    w0[:n0] = p0
    on_eq[:n_eq] = True
    w1[:n_eq] = np.conj(p0[:n_eq])
    nz = p0[n_eq:] != 0
    tmp = np.full(n0 - n_eq, np.nan + 0j)
    tmp[nz] = 1.0 / p0[n_eq:][nz]
    w1[n_eq:n0] = tmp
    w1[n0:] = p1[n_eq:]
    vchart[n0:] = 1
    nz1 = p1[n_eq:] != 0
    tmp = np.full(n1_free, np.nan + 0j)
    tmp[nz1] = 1.0 / p1[n_eq:][nz1]
    w0[n0:] = tmp
    remap1 = np.concatenate([np.arange(n_eq), n0 + np.arange(n1_free)])
    tri = np.concatenate([t0, remap1[t1]])
    tchart = np.concatenate([np.zeros(len(t0), np.int8), np.ones(len(t1), np.int8)])

    marked = []
    off = {0: n_eq, 1: n0}
    counters = {0: 0, 1: 0}
    for k, c in enumerate(cones):
        chart, x = pts[k]
        if chart == 0 and abs(abs(x) - 1.0) < 1e-12:
            vid = int(np.argmin(np.abs(p0[:n_eq] - x)))
        else:
            vid = off[chart] + counters[chart]
            counters[chart] += 1
        marked.append(Marked(vid, c.origin.value, c.index, qs[k], r0s[k]))

    mesh = SphereMesh(w0, w1, vchart, on_eq, tri, tchart, marked, float(h),
                      meta={"q": qs, "r0": r0s})
    try:
        mesh.check(min_angle)
    except QualityFailure:
        log.debug("quality check failed; attempting local repair")
        raise
    return mesh


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def refine(mesh):
    """Uniform 1-to-4 split; equator midpoints are placed on the unit circle."""
    tri = mesh.tri
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.ravel()
    T = len(tri)
    nv = mesh.n_vertices
    ne = len(uniq)
    # chart of each edge: from any triangle using it (equator edges flagged separately)
    tch = np.concatenate([mesh.tchart] * 3)
    edge_chart = np.zeros(ne, dtype=np.int8)
    edge_chart[inv] = tch
    a, b = uniq[:, 0], uniq[:, 1]
    eq_edge = mesh.on_equator[a] & mesh.on_equator[b]
    # an equator chord is a boundary edge of both charts; interior chords between
    # two equator vertices inside one chart are ordinary edges
    counts = np.zeros((ne, 2), dtype=int)
    np.add.at(counts, (inv, tch), 1)
    eq_edge &= (counts[:, 0] == 1) & (counts[:, 1] == 1)

    new_w0 = np.full(ne, np.nan + 0j)
    new_w1 = np.full(ne, np.nan + 0j)
    new_chart = edge_chart.copy()
    # ordinary edges: midpoint in the edge's chart
    for chart in (0, 1):
        sel = (~eq_edge) & (edge_chart == chart)
        src = mesh.coords(chart)
        mid = 0.5 * (src[a[sel]] + src[b[sel]])
        if chart == 0:
            new_w0[sel] = mid
            with np.errstate(divide="ignore", invalid="ignore"):
                new_w1[sel] = np.where(mid != 0, 1.0 / mid, np.nan)
        else:
            new_w1[sel] = mid
            with np.errstate(divide="ignore", invalid="ignore"):
                new_w0[sel] = np.where(mid != 0, 1.0 / mid, np.nan)
    ta = np.angle(mesh.w0[a[eq_edge]])
    tb = np.angle(mesh.w0[b[eq_edge]])
    d = np.angle(np.exp(1j * (tb - ta)))
    tm = ta + 0.5 * d
    new_w0[eq_edge] = np.exp(1j * tm)
    new_w1[eq_edge] = np.exp(-1j * tm)
    new_chart[eq_edge] = 0

    w0 = np.concatenate([mesh.w0, new_w0])
    w1 = np.concatenate([mesh.w1, new_w1])
    vchart = np.concatenate([mesh.vchart, new_chart])
    on_eq = np.concatenate([mesh.on_equator, eq_edge])
    m = nv + inv.reshape(3, T).T  # midpoints of edges (01, 12, 20)
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    new_tri = np.concatenate([
        np.stack([v0, m01, m20], 1),
        np.stack([m01, v1, m12], 1),
        np.stack([m20, m12, v2], 1),
        np.stack([m01, m12, m20], 1),
    ])
    new_tchart = np.concatenate([mesh.tchart] * 4)
    marked = [Marked(mk.vertex, mk.kind, mk.index, mk.q, mk.r0) for mk in mesh.marked]
    out = SphereMesh(w0, w1, vchart, on_eq, new_tri, new_tchart, marked, mesh.h / 2,
                     level=mesh.level + 1, meta=dict(mesh.meta))
    out.check(min_angle=0.0)
    return out


# ---------------------------------------------------------------------------
# cache file
# ---------------------------------------------------------------------------

def write_mesh(mesh, path):
    """Write the plain-text mesh cache format."""
    with open(path, "w") as fh:
        fh.write(HEADER + "\n")
        fh.write(f"# h {mesh.h!r} level {mesh.level}\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for i in range(mesh.n_vertices):
            c, x = mesh.vertex_coord(i)
            fh.write(f"{c} {x.real!r} {x.imag!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for (i, j, k), c in zip(mesh.tri, mesh.tchart):
            fh.write(f"{i} {j} {k} {c}\n")
        fh.write(f"marked {len(mesh.marked)}\n")
        for mk in mesh.marked:
            fh.write(f"{mk.vertex} {mk.kind} {mk.index}\n")


def read_mesh(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != HEADER:
        raise MeshFormatError(f"{path}: missing header {HEADER!r}")
    h, level = np.nan, 0
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            tok = ln[1:].split()
            if len(tok) >= 4 and tok[0] == "h" and tok[2] == "level":
                h, level = float(tok[1]), int(tok[3])
            continue
        body.append(ln)
    it = iter(body)
    try:
        tag, n = next(it).split()
        if tag != "vertices":
            raise MeshFormatError("expected 'vertices' section")
        vc = np.zeros(int(n), dtype=np.int8)
        xs = np.zeros(int(n), dtype=complex)
        for i in range(int(n)):
            c, re, im = next(it).split()
            vc[i] = int(c)
            xs[i] = complex(float(re), float(im))
        tag, n = next(it).split()
        if tag != "triangles":
            raise MeshFormatError("expected 'triangles' section")
        tri = np.zeros((int(n), 3), dtype=np.int64)
        tch = np.zeros(int(n), dtype=np.int8)
        for t in range(int(n)):
            i, j, k, c = next(it).split()
            tri[t] = (int(i), int(j), int(k))
            tch[t] = int(c)
        tag, n = next(it).split()
        if tag != "marked":
            raise MeshFormatError("expected 'marked' section")
        marked = []
        for _ in range(int(n)):
            vid, kind, idx = next(it).split()
            marked.append(Marked(int(vid), kind, int(idx), np.nan, np.nan))
    except (StopIteration, ValueError) as exc:
        raise MeshFormatError(f"{path}: truncated or malformed mesh file") from exc
    in0 = np.zeros(len(vc), dtype=bool)
    in1 = np.zeros(len(vc), dtype=bool)
    in0[tri[tch == 0].ravel()] = True
    in1[tri[tch == 1].ravel()] = True
    on_eq = in0 & in1
    w0 = np.full(len(vc), np.nan + 0j)
    w1 = np.full(len(vc), np.nan + 0j)
    w0[vc == 0] = xs[vc == 0]
    w1[vc == 1] = xs[vc == 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(xs != 0, 1.0 / xs, np.nan)
    w1[vc == 0] = inv[vc == 0]
    w0[vc == 1] = inv[vc == 1]
    w1[on_eq] = np.conj(w0[on_eq])
    return SphereMesh(w0, w1, vc, on_eq, tri, tch, marked, h, level=level)
