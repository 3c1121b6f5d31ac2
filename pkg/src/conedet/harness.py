"""Experiment orchestration: configs, the four verification runs, and outputs.

Configs are INI files with sections ``[metric]``, ``[cover]``, ``[mesh]``,
``[spectrum]``, ``[zeta]`` and ``[experiment]`` (see ``docs/config.md``).
Every experiment returns an :class:`ExperimentResult` whose rows all carry
the hash of the resolved config.
"""
import configparser
import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from . import asymptotics, fem, formula, mesh as meshmod, zeta
from .cover import CoverGeometry, RationalMap, example_deg2, identity_map
from .errors import ConeDetError, ConfigError, GroupTrackingFailure
from .metric import ConicalMetricSpec, smooth_preset, volume

log = logging.getLogger(__name__)

SECTIONS = ("metric", "cover", "mesh", "spectrum", "zeta", "experiment")

DEFAULTS = {
    "metric": {"kind": "round"},
    "cover": {"preset": "deg2", "z1": "0", "z2": "1"},
    "mesh": {"h": "0.2", "refine": "2", "iters": "300"},
    "spectrum": {"n_ev": "300", "tol": "1e-10"},
    "zeta": {"basis": "fem", "n_samples": "48", "pin_weyl": "true", "pin_a0": "true",
             "log_sigma": "3"},
    "experiment": {"scale": "1", "seed": "0"},
}


# ---------------------------------------------------------------------------
# value parsing

def parse_number(text):
    """Real or complex scalar; accepts ``i`` or ``j`` and fractions like ``-2/3``."""
    s = str(text).strip().replace(" ", "")
    if not s:
        raise ConfigError("empty number")
    try:
        return float(Fraction(s))
    except (ValueError, ZeroDivisionError):
        pass
    try:
        z = complex(s.replace("i", "j"))
    except ValueError:
        raise ConfigError(f"cannot parse number {text!r}") from None
    return z.real if z.imag == 0 else z


def parse_list(text, sep=","):
    return [parse_number(t) for t in str(text).split(sep) if t.strip()]


def parse_moduli(text):
    """``z1:z2; z1:z2; ...`` into a list of complex pairs."""
    out = []
    for item in str(text).split(";"):
        if not item.strip():
            continue
        parts = item.split(":")
        if len(parts) != 2:
            raise ConfigError(f"moduli entry {item!r} is not of the form z1:z2")
        out.append(tuple(complex(parse_number(p)) for p in parts))
    return out


def _bool(text):
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------------------
# config

@dataclass
class ExperimentConfig:
    sections: dict
    source: str = "<defaults>"

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def num(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else parse_number(v)

    def int(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else int(v)

    def flag(self, section, key, default=False):
        v = self.get(section, key)
        return default if v is None else _bool(v)

    def with_values(self, section, **kw):
        sec = {k: dict(v) for k, v in self.sections.items()}
        sec.setdefault(section, {}).update({k: str(v) for k, v in kw.items()})
        return ExperimentConfig(sec, self.source)

    @property
    def hash(self):
        blob = json.dumps(self.sections, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def scale(self):
        return float(self.num("experiment", "scale", 1.0))


def load_config(path=None, text=None):
    """Read an INI config (file or string) on top of :data:`DEFAULTS`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} not found")
        cp.read(path)
    elif text is not None:
        cp.read_string(text)
    unknown = [s for s in cp.sections() if s not in SECTIONS + ("output",)]
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    sections = {s: dict(DEFAULTS.get(s, {})) for s in SECTIONS}
    for s in cp.sections():
        sections.setdefault(s, {}).update(dict(cp[s]))
    cfg = ExperimentConfig(sections, str(path) if path else "<string>")
    validate(cfg)
    return cfg


def validate(cfg):
    build_metric(cfg)
    for z1, z2 in cfg_moduli(cfg):
        if abs(z1 - z2) == 0:
            raise ConfigError(f"moduli entry ({z1}, {z2}) has coincident critical values")
    if cfg.int("spectrum", "n_ev") < 1:
        raise ConfigError("n_ev must be positive")
    if not cfg.num("mesh", "h") > 0:
        raise ConfigError("mesh h must be positive")


# ---------------------------------------------------------------------------
# pipeline pieces

def build_metric(cfg):
    kind = cfg.get("metric", "kind", "round").strip().lower()
    if kind == "round":
        return ConicalMetricSpec.round()
    points = [complex(p) for p in parse_list(cfg.get("metric", "points", ""))]
    betas = [float(b) for b in parse_list(cfg.get("metric", "betas", ""))]
    if len(points) != len(betas):
        raise ConfigError("metric points and betas differ in length")
    if kind in ("flat", "flat_conical", "flatconical"):
        return ConicalMetricSpec.flat_conical(points, betas)
    if kind in ("custom", "custom_smooth"):
        name = cfg.get("metric", "smooth", "round_bump")
        args = parse_list(cfg.get("metric", "smooth_args", ""))
        return ConicalMetricSpec.custom(smooth_preset(name, *args), points, betas)
    raise ConfigError(f"unknown metric kind {kind!r}")


def cfg_moduli(cfg):
    text = cfg.get("experiment", "moduli")
    if text:
        return parse_moduli(text)
    if cfg.get("cover", "preset", "deg2") == "deg2":
        return [(complex(cfg.num("cover", "z1", 0.0)), complex(cfg.num("cover", "z2", 1.0)))]
    return []


def build_map(cfg, moduli=None):
    preset = cfg.get("cover", "preset", "deg2").strip().lower()
    if preset == "deg2":
        z1, z2 = moduli if moduli is not None else cfg_moduli(cfg)[0]
        return example_deg2(z1, z2)
    if preset == "identity":
        return identity_map()
    if preset == "coefficients":
        num = [complex(c) for c in parse_list(cfg.get("cover", "numerator", ""))]
        den = [complex(c) for c in parse_list(cfg.get("cover", "denominator", ""))]
        return RationalMap(tuple(num), tuple(den), label="custom")
    raise ConfigError(f"unknown cover preset {preset!r}")


def build_geometry(cfg, moduli=None):
    return CoverGeometry.build(build_map(cfg, moduli), build_metric(cfg))


def _mesh_q(cfg):
    q = {}
    for kind in ("critical", "preimage"):
        v = cfg.get("mesh", f"q_{kind}")
        if v is not None:
            q[kind] = float(parse_number(v))
    return q or None


def build_mesh(cfg, geom, cache=None):
    """Graded mesh for ``geom``; read from / written to ``cache`` when given."""
    if cache is not None and os.path.exists(cache):
        m = meshmod.read_mesh(cache)
        if len(m.marked) == len(geom.cone_points):
            return m
        log.warning("mesh cache %s does not match the geometry; rebuilding", cache)
    m = meshmod.build_mesh(geom, float(cfg.num("mesh", "h")), q=_mesh_q(cfg),
                           iters=cfg.int("mesh", "iters", 300))
    for _ in range(cfg.int("mesh", "refine", 0)):
        m = meshmod.refine(m)
    if cache is not None:
        Path(cache).parent.mkdir(parents=True, exist_ok=True)
        meshmod.write_mesh(m, cache)
    return m


def _cache_for(cache, i, n):
    if cache is None or n == 1:
        return cache
    p = Path(cache)
    return str(p.with_name(f"{p.stem}-{i}{p.suffix or '.mesh'}"))


def _v0(cfg, n):
    seed = cfg.int("experiment", "seed", 0)
    return np.random.default_rng(seed).standard_normal(n)


def solve_spectrum(cfg, op, n_ev=None):
    n_ev = cfg.int("spectrum", "n_ev") if n_ev is None else n_ev
    return fem.eigensolve(op, n_ev, tol=float(cfg.num("spectrum", "tol", 1e-10)), v0=_v0(cfg, op.n))


def zeta_options(cfg, geom):
    """Keyword arguments for :func:`zeta.zeta_det` from the ``[zeta]`` section."""
    basis = cfg.get("zeta", "basis", "fem").strip().lower()
    if basis == "fem":
        powers, nuisance = zeta.FEM_BASIS, zeta.FEM_NUISANCE
    elif basis == "exact":
        powers, nuisance = zeta.BASIS, ()
    else:
        powers = tuple(float(p) for p in parse_list(basis))
        nuisance = ()
    if cfg.get("zeta", "nuisance") is not None:
        nuisance = tuple(float(p) for p in parse_list(cfg.get("zeta", "nuisance")))
    pinned = {}
    if cfg.flag("zeta", "pin_weyl") and -1.0 in powers:
        pinned[-1.0] = geom.degree * volume(geom.metric) / (4.0 * np.pi)
    if cfg.flag("zeta", "pin_a0") and 0.0 in powers:
        pinned[0.0] = zeta.cone_zeta0([c.angle for c in geom.cone_points], 2 - 2 * geom.genus)
    t0, t1 = cfg.get("zeta", "t_start"), cfg.get("zeta", "t_end")
    window = (float(parse_number(t0)), float(parse_number(t1))) if t0 and t1 else None
    return dict(powers=powers, nuisance=nuisance, pinned=pinned, t_window=window,
                n_samples=cfg.int("zeta", "n_samples", 48),
                log_sigma=float(cfg.num("zeta", "log_sigma", 3.0)))


def target_cone(cfg, geom):
    """Index of the critical point selected by ``[experiment] k`` or ``z_k``."""
    zk = cfg.get("experiment", "z_k")
    if zk is not None:
        z = complex(parse_number(zk))
        d = [abs(v - z) for v in geom.critical_values]
        k = int(np.argmin(d))
        if d[k] > 1e-9 * max(1.0, abs(z)):
            raise ConfigError(f"no critical value at z_k={z}; have {geom.critical_values}")
        return k
    return cfg.int("experiment", "k", 0)


# ---------------------------------------------------------------------------
# results and output

@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    summary: dict
    config_hash: str
    extra: dict = field(default_factory=dict)

    def write(self, out_dir, plot=True):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{self.name}.csv", self.columns, self.rows, self.config_hash)
        with open(out / f"{self.name}.json", "w") as fh:
            json.dump(_jsonable(dict(experiment=self.name, config_hash=self.config_hash,
                                     **self.summary)), fh, indent=2, sort_keys=True)
        for key, (cols, rows) in self.extra.items():
            write_csv(out / f"{self.name}_{key}.csv", cols, rows, self.config_hash)
        if plot:
            try:
                PLOTTERS[self.name](self, out / f"{self.name}.svg")
            except Exception as exc:  # plotting never fails an experiment
                log.warning("plot for %s failed: %s", self.name, exc)


def write_csv(path, columns, rows, config_hash):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(columns) + ["config_hash"])
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns] + [config_hash])


def _cell(v):
    if isinstance(v, complex):
        return f"{v.real:.12g}{v.imag:+.12g}j"
    if isinstance(v, float):
        return f"{v:.12g}"
    return "" if v is None else v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _map(fn, args, workers):
    """Ordered map; a process pool when ``workers > 1``."""
    if workers and workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, args))
    return [fn(a) for a in args]


# ---------------------------------------------------------------------------
# single-cover commands

def run_spectrum(cfg, mesh_cache=None):
    geom = build_geometry(cfg)
    m = build_mesh(cfg, geom, mesh_cache)
    op = fem.assemble(m, geom)
    sp = solve_spectrum(cfg, op)
    rows = [dict(j=j, eigenvalue=float(l), residual=float(r))
            for j, (l, r) in enumerate(zip(sp.eigenvalues, sp.residuals))]
    summary = dict(n_vertices=m.n_vertices, volume=op.volume, n_ev=len(sp.eigenvalues) - 1,
                   max_residual=float(np.max(sp.residuals)))
    return ExperimentResult("spectrum", ["j", "eigenvalue", "residual"], rows, summary, cfg.hash)


def run_det(cfg, mesh_cache=None):
    geom = build_geometry(cfg)
    m = build_mesh(cfg, geom, mesh_cache)
    op = fem.assemble(m, geom)
    sp = solve_spectrum(cfg, op)
    res = zeta.zeta_det(sp, **zeta_options(cfg, geom))
    row = dict(log_det=res.log_det, zeta0=res.zeta0, zeta_prime0=res.zeta_prime0,
               error=res.error_estimate, c_log=res.c_log, c_log_err=res.c_log_err,
               n_ev=res.n_ev, t_min=res.t_min)
    if geom.degree == 2 and len(geom.critical_values) == 2:
        rhs = formula.rhs_genus0(formula.DEG2, geom.metric, geom.critical_values)
        row.update(ln_rhs=float(np.log(rhs)), log_C=formula.log_C(res.log_det, rhs))
    summary = dict(row, t_window=list(res.t_window), coeffs=res.coeffs, n_vertices=m.n_vertices)
    return ExperimentResult("det", list(row), [row], summary, cfg.hash)


def mesh_info(cfg, mesh_cache=None):
    geom = build_geometry(cfg)
    m = build_mesh(cfg, geom, mesh_cache)
    op = fem.assemble(m, geom)
    exact = geom.degree * volume(geom.metric)
    info = dict(n_vertices=m.n_vertices, n_triangles=m.n_triangles,
                euler_characteristic=int(m.euler_characteristic()),
                boundary_edges=int(m.boundary_edge_count()), min_angle_deg=float(m.min_angle()),
                h=m.h, level=m.level, n_cones=len(m.marked), mass_volume=op.volume,
                exact_volume=exact, volume_rel_err=abs(op.volume - exact) / exact,
                stiffness_row_sum=float(np.max(np.abs(op.K @ np.ones(op.n)))))
    return ExperimentResult("mesh_info", list(info), [info], info, cfg.hash)


# ---------------------------------------------------------------------------
# constancy of C

def _constancy_point(args):
    cfg, moduli, cache = args
    row = dict(z1=moduli[0], z2=moduli[1])
    try:
        geom = build_geometry(cfg, moduli)
        m = build_mesh(cfg, geom, cache)
        op = fem.assemble(m, geom)
        sp = solve_spectrum(cfg, op)
        res = zeta.zeta_det(sp, **zeta_options(cfg, geom))
        ln_rhs = formula.log_rhs_genus0(formula.DEG2, geom.metric, geom.critical_values)
        row.update(log_det=res.log_det, ln_rhs=ln_rhs, log_C=res.log_det - ln_rhs,
                   error=res.error_estimate, zeta0=res.zeta0, c_log=res.c_log,
                   c_log_err=res.c_log_err, n_vertices=m.n_vertices, status="ok")
    except ConeDetError as exc:
        row.update(status=f"{type(exc).__name__}: {exc}")
    return row


def run_constancy(cfg, workers=1, mesh_cache=None):
    """``log_C = log Det' - ln rhs`` over the configured moduli points."""
    mods = cfg_moduli(cfg)
    if len(mods) < 3:
        raise ConfigError("constancy needs at least 3 moduli points")
    args = [(cfg, z, _cache_for(mesh_cache, i, len(mods))) for i, z in enumerate(mods)]
    rows = _map(_constancy_point, args, workers)
    for i, r in enumerate(rows):
        r["index"] = i
    good = [r for r in rows if r["status"] == "ok"]
    lc = np.array([r["log_C"] for r in good])
    tol = float(cfg.num("experiment", "spread_tol", 0.05))
    spread = float(np.ptp(lc)) if len(lc) else float("nan")
    sig = [abs(r["c_log"]) / r["c_log_err"] if r["c_log_err"] > 0 else 0.0 for r in good]
    summary = dict(spread=spread, tolerance=tol, n_points=len(rows), n_ok=len(good),
                   mean_log_C=float(np.mean(lc)) if len(lc) else None,
                   max_error=max((r["error"] for r in good), default=None),
                   max_c_log_sigma=max(sig, default=None),
                   passed=bool(len(good) == len(rows) and len(good) >= 3 and spread <= tol))
    cols = ["index", "z1", "z2", "log_det", "ln_rhs", "log_C", "error", "zeta0", "c_log",
            "c_log_err", "n_vertices", "status"]
    return ExperimentResult("constancy", cols, rows, summary, cfg.hash)


# ---------------------------------------------------------------------------
# b(-infinity) and the derivative rule

def _slope(lams, errs):
    x, y = np.log(np.abs(lams)), np.log(np.maximum(errs, 1e-300))
    fit = stats.linregress(x, y)
    half = stats.t.ppf(0.975, max(1, len(x) - 2)) * fit.stderr
    return float(fit.slope), float(half)


def run_binfty(cfg, workers=1, mesh_cache=None):
    """``b(lambda)`` along a negative ladder against the closed-form limit."""
    geom = build_geometry(cfg)
    k = target_cone(cfg, geom)
    m = build_mesh(cfg, geom, mesh_cache)
    op = fem.assemble(m, geom)
    lams = [float(l) for l in parse_list(cfg.get("experiment", "lambdas", "-1e2,-1e3,-1e4,-1e5,-1e6"))]
    if cfg.flag("experiment", "ladder_per_volume", False):
        vol = geom.degree * volume(geom.metric)
        lams = [l / vol for l in lams]
    if any(l >= 0 for l in lams):
        raise ConfigError("the lambda ladder must be negative")
    if np.log10(max(abs(l) for l in lams) / min(abs(l) for l in lams)) < 4 - 1e-9:
        log.warning("lambda ladder spans fewer than 4 decades")
    z_k = geom.critical_values[k]
    b_ref = complex(asymptotics.b_infinity_reference(geom.metric, z_k))
    rows = []
    for lam in lams:
        b = complex(asymptotics.b_of_lambda(op, geom, k, lam))
        err = abs(b - b_ref)
        rows.append(dict(lam=lam, re_b=b.real, im_b=b.imag, abs_err=err,
                         rel_err=err / abs(b_ref) if b_ref != 0 else err))
    errs = np.array([r["abs_err"] for r in rows])
    slope, half = _slope(np.array(lams), errs)
    target = float(cfg.num("experiment", "slope", -0.5))
    slope_tol = float(cfg.num("experiment", "slope_tol", 0.15))
    final_tol = float(cfg.num("experiment", "final_tol", 0.02))
    final = rows[int(np.argmax(np.abs(lams)))]["rel_err"]
    summary = dict(z_k=z_k, k=k, b_ref=b_ref, slope=slope, slope_ci95=half,
                   slope_target=target, slope_tol=slope_tol, final_rel_err=final,
                   final_tol=final_tol, slope_passed=bool(abs(slope - target) <= slope_tol),
                   final_passed=bool(final <= final_tol), n_vertices=m.n_vertices)
    extra = {}
    dl = cfg.get("experiment", "derivative_lambdas")
    if dl:
        drows = derivative_rule(op, geom, k, [float(l) for l in parse_list(dl)],
                                float(cfg.num("experiment", "derivative_step", 1e-2)))
        dtol = float(cfg.num("experiment", "derivative_tol", 0.02))
        summary.update(derivative_max_rel=max(r["rel_err"] for r in drows), derivative_tol=dtol,
                       derivative_passed=bool(all(r["rel_err"] <= dtol for r in drows)))
        extra["derivative"] = (["lam", "fd_4pi_db", "int_Y2", "rel_err"], drows)
    summary["passed"] = bool(summary["final_passed"] and summary["slope_passed"]
                             and summary.get("derivative_passed", True))
    cols = ["lam", "re_b", "im_b", "abs_err", "rel_err"]
    return ExperimentResult("binfty", cols, rows, summary, cfg.hash, extra)


def derivative_rule(op, geom, k, lams, rel_step=1e-2):
    """``4 pi db/dlambda`` (centred differences) against ``int Y^2 dvol``."""
    rows = []
    for lam in lams:
        eps = rel_step * abs(lam)
        bp = asymptotics.b_of_lambda(op, geom, k, lam + eps)
        bm = asymptotics.b_of_lambda(op, geom, k, lam - eps)
        fd = 4.0 * np.pi * (bp - bm) / (2.0 * eps)
        _, Y = asymptotics.b_of_lambda(op, geom, k, lam, full=True)
        I = asymptotics.integral_Y2(op, Y)
        rows.append(dict(lam=lam, fd_4pi_db=complex(fd), int_Y2=complex(I),
                         rel_err=float(abs(fd - I) / abs(I))))
    return rows


# ---------------------------------------------------------------------------
# sum rule

def run_sumrule(cfg, workers=1, mesh_cache=None):
    """Partial sums of ``16 pi^2 sum b_j^2 / (lambda_j - lambda)^2`` against ``int Y^2``.

    The modulus channel (``|b_j|^2`` against ``int |Y|^2``) is the headline:
    its partial sums are monotone.  The bilinear channel is reported too.
    """
    geom = build_geometry(cfg)
    k = target_cone(cfg, geom)
    lam = float(cfg.num("experiment", "lambda", -5.0))
    if lam >= 0:
        raise ConfigError("sum rule needs lambda < 0")
    m = build_mesh(cfg, geom, mesh_cache)
    op = fem.assemble(m, geom)
    sp = solve_spectrum(cfg, op)
    n_ev = len(sp.eigenvalues) - 1
    if n_ev < 100:
        raise ConfigError("sum rule needs n_ev >= 100")
    _, Y = asymptotics.b_of_lambda(op, geom, k, lam, full=True)
    I_abs = asymptotics.integral_Y2(op, Y, conjugate=True)
    I_bil = asymptotics.integral_Y2(op, Y)
    n_theta = cfg.int("experiment", "n_theta", asymptotics.N_THETA)

    def partial(nt):
        co = asymptotics.eigen_coefficients(m, sp, geom, k, n_theta=nt)
        b = np.array([c.b for c in co])
        w = 16.0 * np.pi**2 / (sp.eigenvalues[: len(b)] - lam) ** 2
        return np.cumsum(w * np.abs(b) ** 2), np.cumsum(w * b**2)

    s_abs, s_bil = partial(n_theta)
    s_abs2, _ = partial(2 * n_theta)
    rows = []
    for J in range(len(s_abs)):
        rows.append(dict(J=J, partial_abs=float(s_abs[J]), gap_abs=float((I_abs - s_abs[J]) / I_abs),
                         partial_bilinear=complex(s_bil[J]),
                         gap_bilinear=float(abs(I_bil - s_bil[J]) / abs(I_bil))))
    J = n_ev
    gap = rows[J]["gap_abs"]
    # the tail decays like J^(-1/2) at a 4 pi cone: Richardson in J^(-1/2)
    gap_extrap = float(2.0 * gap - rows[J // 4]["gap_abs"]) if J >= 4 else None
    gap2 = float((I_abs - s_abs2[J]) / I_abs)
    tol = float(cfg.num("experiment", "gap_tol", 0.05))
    summary = dict(lam=lam, k=k, J=J, int_absY2=I_abs, int_Y2=I_bil, gap=gap, tolerance=tol,
                   gap_bilinear=rows[J]["gap_bilinear"], gap_extrapolated=gap_extrap,
                   n_theta_doubling_change=abs(gap2 - gap),
                   monotone=bool(np.all(np.diff(s_abs) >= -1e-12 * abs(s_abs[-1]))),
                   passed=bool(abs(gap) <= tol), n_vertices=m.n_vertices)
    cols = ["J", "partial_abs", "gap_abs", "partial_bilinear", "gap_bilinear"]
    return ExperimentResult("sumrule", cols, rows, summary, cfg.hash)


# ---------------------------------------------------------------------------
# perturbation law

def lambda_groups(lams, rel_gap=1e-4, zero_tol=1e-8):
    """Index groups of eigenvalues closer than ``rel_gap`` (relative)."""
    groups, cur = [], [0]
    for j in range(1, len(lams)):
        a, b = lams[j - 1], lams[j]
        if (abs(a) < zero_tol and abs(b) < zero_tol) or abs(b - a) < rel_gap * max(abs(b), zero_tol):
            cur.append(j)
        else:
            groups.append(cur)
            cur = [j]
    groups.append(cur)
    return groups


def _stencil_spectrum(args):
    cfg, moduli, n_ev, mesh_key = args
    geom = build_geometry(cfg, moduli)
    m = build_mesh(cfg, geom)
    if mesh_key is not None and m.n_vertices != mesh_key:
        raise GroupTrackingFailure(f"stencil mesh has {m.n_vertices} vertices, base has {mesh_key}")
    return solve_spectrum(cfg, fem.assemble(m, geom), n_ev).eigenvalues


def _check_tracking(base, groups, perturbed):
    for gi, g in enumerate(groups):
        lo = base[g[0] - 1] if g[0] > 0 else -np.inf
        hi = base[g[-1] + 1] if g[-1] + 1 < len(base) else np.inf
        half_gap = 0.5 * min(base[g[0]] - lo, hi - base[g[-1]])
        for s in perturbed:
            if np.max(np.abs(s[g] - base[g])) >= half_gap:
                raise GroupTrackingFailure(f"lambda-group {gi} at {base[g[0]]:.6g} does not separate")


def run_perturbation(cfg, workers=1, mesh_cache=None):
    """Wirtinger derivatives of lambda-group sums against ``2 pi sum b_j^2``."""
    mods = cfg_moduli(cfg)
    if cfg.get("cover", "preset", "deg2") != "deg2" or len(mods) != 1:
        raise ConfigError("perturbation runs on a single deg2 cover")
    z1, z2 = mods[0]
    geom = build_geometry(cfg)
    k = target_cone(cfg, geom)
    m = build_mesh(cfg, geom, mesh_cache)
    op = fem.assemble(m, geom)
    n_groups = cfg.int("experiment", "n_groups", 5)
    n_ev = cfg.int("spectrum", "n_ev")
    sp = solve_spectrum(cfg, op, n_ev)
    lams = sp.eigenvalues
    groups = lambda_groups(lams, float(cfg.num("experiment", "group_gap", 1e-4)))[:-1]
    coeffs = asymptotics.eigen_coefficients(m, sp, geom, k)
    step = float(cfg.num("experiment", "step", 1e-3)) * cfg.scale
    null_tol = float(cfg.num("experiment", "null_tol", 1e-3))

    def stencil(w):
        pts = []
        for dz in (w, -w, 1j * w, -1j * w):
            pts.append((z1 + dz, z2) if k == 0 else (z1, z2 + dz))
        specs = _map(_stencil_spectrum, [(cfg, p, n_ev, m.n_vertices) for p in pts], workers)
        _check_tracking(lams, groups, specs)
        sums = [np.array([s[g].sum() for g in groups]) for s in specs]
        d_re = (sums[0] - sums[1]) / (2 * w)
        d_im = (sums[2] - sums[3]) / (2 * w)
        return 0.5 * (d_re - 1j * d_im)

    fd = stencil(step)
    fd_half = stencil(0.5 * step) if cfg.flag("experiment", "richardson", False) else None
    rows = []
    for gi, g in enumerate(groups):
        pred = 2.0 * np.pi * sum(coeffs[j].b ** 2 for j in g)
        coupled = abs(pred) > null_tol * (1.0 + abs(lams[g[0]])) and lams[g[0]] > 1e-8
        row = dict(group=gi, lam=float(lams[g[0]]), size=len(g), fd=complex(fd[gi]),
                   predicted=complex(pred), coupled=coupled,
                   rel_err=float(abs(fd[gi] - pred) / abs(pred)) if coupled else None,
                   abs_err=float(abs(fd[gi] - pred)))
        if fd_half is not None:
            row["fd_half"] = complex(fd_half[gi])
        rows.append(row)
    tol = float(cfg.num("experiment", "rel_tol", 0.05))
    used = [r for r in rows if r["coupled"]][:n_groups]
    scale = max((abs(r["predicted"]) for r in used), default=1.0)
    # groups with b = 0 (constant, pulled-back modes) only admit an absolute check
    null = [r for r in rows if not r["coupled"] and r["lam"] <= (used[-1]["lam"] if used else 0)]
    summary = dict(k=k, step=step, n_groups=len(used), tolerance=tol,
                   max_rel_err=max((r["rel_err"] for r in used), default=None),
                   null_groups=len(null),
                   null_max_abs_over_scale=max((r["abs_err"] / scale for r in null), default=0.0),
                   passed=bool(len(used) == n_groups and all(r["rel_err"] <= tol for r in used)),
                   n_vertices=m.n_vertices)
    cols = ["group", "lam", "size", "fd", "predicted", "coupled", "rel_err", "abs_err"]
    if fd_half is not None:
        cols.append("fd_half")
        summary["richardson_max_change"] = max(abs(r["fd"] - r["fd_half"]) for r in rows)
    return ExperimentResult("perturbation", cols, rows, summary, cfg.hash)


# ---------------------------------------------------------------------------
# plots

def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_constancy(res, path):
    plt = _figure()
    ok = [r for r in res.rows if r["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar([r["index"] for r in ok], [r["log_C"] for r in ok],
                yerr=[r["error"] for r in ok], fmt="o", capsize=3)
    ax.set_xlabel("moduli index")
    ax.set_ylabel("log C")
    ax.set_title(f"spread {res.summary['spread']:.3g}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_binfty(res, path):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog([abs(r["lam"]) for r in res.rows], [r["abs_err"] for r in res.rows], "o-")
    ax.set_xlabel("|lambda|")
    ax.set_ylabel("|b - b_ref|")
    ax.set_title(f"slope {res.summary['slope']:.2f}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_sumrule(res, path):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    J = [r["J"] for r in res.rows[1:]]
    ax.loglog(J, [max(abs(r["gap_abs"]), 1e-16) for r in res.rows[1:]])
    ax.set_xlabel("J")
    ax.set_ylabel("relative gap")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_perturbation(res, path):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    x = [r["predicted"].real for r in res.rows]
    y = [r["fd"].real for r in res.rows]
    ax.plot(x, y, "o")
    lim = max([1e-12] + [abs(v) for v in x + y])
    ax.plot([-lim, lim], [-lim, lim], "k:")
    ax.set_xlabel("2 pi sum b_j^2 (real part)")
    ax.set_ylabel("finite difference (real part)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_none(res, path):
    pass


PLOTTERS = {
    "constancy": _plot_constancy,
    "binfty": _plot_binfty,
    "sumrule": _plot_sumrule,
    "perturbation": _plot_perturbation,
    "spectrum": _plot_none,
    "det": _plot_none,
    "mesh_info": _plot_none,
}
