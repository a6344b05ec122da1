"""The small-angle harness: rescale capillary minimizers and compare them with Bernoulli minimizers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import CornerIntegral
from .errors import Degenerate, EmptySet
from .grid import GridSpec, ScalarField, cell_average, free_boundary, gradient_norm, hausdorff_distance
from .minimize import MinimizeReport, Schedule, capillary_schedule, minimize_bernoulli, minimize_capillary


def rescale(u: ScalarField, theta: float) -> ScalarField:
    """``v = u / tan(theta)``."""
    if not 0 < theta < math.pi / 2:
        raise ValueError("theta must lie in (0, pi/2)")
    return ScalarField(u.grid, u.values / math.tan(theta))


def _far_nodes(v: ScalarField, margin_cells: float = 4.0, tol: float = 0.0):
    fb = free_boundary(v, tol)
    d = fb.dist.values
    sel = d >= margin_cells * v.grid.h - 1e-12
    return fb, d, sel


def nondegeneracy_ratios(v: ScalarField, margin_cells: float = 4.0, tol: float = 0.0) -> tuple[float, float]:
    """``(min, max)`` of ``v / dist(x, free boundary)`` over nodes at distance >= 4h."""
    _, d, sel = _far_nodes(v, margin_cells, tol)
    if not sel.any():
        raise Degenerate("no nodes at distance >= 4h from the free boundary")
    r = v.values[sel] / d[sel]
    return float(r.min()), float(r.max())


def height_bound_check(u: ScalarField, theta: float, c0: float, gamma: float) -> bool:
    """``tan(theta) d / (2 c0) <= u <= 2 tan(theta) d`` at nodes with ``4h <= d <= gamma``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    t = math.tan(theta)
    _, d, sel = _far_nodes(u)
    sel &= d <= gamma + 1e-12
    if not sel.any():
        return True
    uu, dd = u.values[sel], d[sel]
    return bool(np.all(uu >= t * dd / (2 * c0)) and np.all(uu <= 2 * t * dd))


# --- distances ------------------------------------------------------------------


def _subbox(grid: GridSpec, margin: float):
    lo = tuple(a + margin for a in grid.lo)
    hi = tuple(b - margin for b in grid.hi)
    return lo, hi


def w12_distance(a: ScalarField, b: ScalarField, margin: float) -> float:
    """``W^{1,2}`` norm of ``a - b`` over cells inside the sub-box at distance ``margin`` from the faces."""
    g = a.grid
    diff = a.values - b.values
    inside = g.interior_mask(margin) | _face_nodes_of_subbox(g, margin)
    cells = cell_average(inside.astype(float)) > 1 - 1e-12
    ci = CornerIntegral(g.shape, g.h)
    dens = cell_average(diff**2) + ci.cell_mean(diff, lambda q: q)
    return float(math.sqrt(max(np.sum(dens[cells]) * g.cell_volume, 0.0)))


def _face_nodes_of_subbox(g: GridSpec, margin: float) -> np.ndarray:
    m = np.ones(g.shape, dtype=bool)
    for k, x in enumerate(g.mesh()):
        m &= (x >= g.lo[k] + margin - 1e-12) & (x <= g.hi[k] - margin + 1e-12)
    return m


def sup_distance(a: ScalarField, b: ScalarField, margin: float) -> float:
    sel = _face_nodes_of_subbox(a.grid, margin)
    return float(np.abs(a.values - b.values)[sel].max())


def local_hausdorff(a: ScalarField, b: ScalarField, margin: float, tol: float = 0.0) -> float:
    """Hausdorff distance between the free boundaries ``{f > tol}`` restricted to the sub-box."""
    lo, hi = _subbox(a.grid, margin)
    pa = free_boundary(a, tol).within(lo, hi)
    pb = free_boundary(b, tol).within(lo, hi)
    if len(pa) == 0 and len(pb) == 0:
        return 0.0
    if len(pa) == 0 or len(pb) == 0:
        raise EmptySet("free boundary misses the comparison sub-box")
    return hausdorff_distance(pa, pb)


def lipschitz(v: ScalarField) -> float:
    return float(gradient_norm(v).max())


# --- sweep ----------------------------------------------------------------------


def planar(normal: Sequence[float]) -> Callable:
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)

    def gen(*x):
        return np.maximum(sum(ni * xi for ni, xi in zip(n, x)), 0.0)

    return gen


def wedge(*x):
    return np.maximum(np.maximum(x[0], 0.0), np.maximum(x[1], 0.0))


@dataclass(frozen=True)
class SweepConfig:
    theta_list: tuple[float, ...]
    grid: GridSpec
    generator: Callable = field(default=None, compare=False)  # v-level trace; default planar e_1
    generator_name: str = "planar"
    normal: tuple[float, ...] | None = None
    el_tol: float = 1e-6
    margin_cells: float = 4.0
    band: float = 0.1
    fb_tol: float = 0.0  # positivity floor for free boundaries of computed fields

    def __post_init__(self):
        th = tuple(float(t) for t in self.theta_list)
        object.__setattr__(self, "theta_list", th)
        if not th or any(not 0 < t < math.pi / 2 for t in th):
            raise ValueError("thetas must lie in (0, pi/2)")
        if any(b >= a for a, b in zip(th, th[1:])):
            raise ValueError("theta_list must be strictly decreasing")
        if self.generator is None:
            normal = self.normal or (1.0,) + (0.0,) * (self.grid.dim - 1)
            object.__setattr__(self, "normal", tuple(float(c) for c in normal))
            object.__setattr__(self, "generator", planar(normal))

    def data(self) -> ScalarField:
        return ScalarField.from_function(self.grid, self.generator)

    def limit(self) -> ScalarField | None:
        """Exact limit object for planar data, ``(x . n)_+``; None otherwise."""
        if self.generator_name != "planar":
            return None
        return ScalarField.from_function(self.grid, planar(self.normal))


METRICS = (
    "w12", "sup", "hausdorff",
    "w12_limit", "sup_limit", "hausdorff_limit",
    "lipschitz", "rmin", "rmax",
)


@dataclass(frozen=True)
class SweepRecord:
    theta: float
    w12: float
    sup: float
    hausdorff: float
    w12_limit: float | None
    sup_limit: float | None
    hausdorff_limit: float | None
    lipschitz: float
    rmin: float
    rmax: float
    converged: bool
    degenerate: bool
    el_residual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SweepReport:
    records: tuple[SweepRecord, ...]
    bernoulli: MinimizeReport = field(repr=False)
    fields: tuple[ScalarField, ...] = field(repr=False, default=())
    band: float = 0.1
    floor: float = 0.0  # absolute noise floor for monotonicity

    def series(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    def monotone(self, name: str, band: float | None = None) -> bool:
        """Nonincreasing along the sweep up to ``band`` times the first value plus the noise floor."""
        s = self.series(name)
        if any(x is None for x in s):
            return False
        tol = (self.band if band is None else band) * abs(s[0]) + self.floor
        return all(b <= a + tol for a, b in zip(s, s[1:]))

    def lipschitz_bound(self) -> float:
        return max(self.series("lipschitz"))

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "bernoulli": self.bernoulli.to_dict(with_trace=False),
            "monotone": {m: self.monotone(m) for m in ("w12", "sup", "hausdorff", "w12_limit", "hausdorff_limit")},
            "lipschitz_bound": self.lipschitz_bound(),
            "band": self.band,
            "noise_floor": self.floor,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        cols = ["theta", *METRICS, "converged", "degenerate", "el_residual"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            row = []
            for c in cols:
                x = getattr(r, c)
                row.append("" if x is None else repr(float(x)) if isinstance(x, float) else str(x).lower())
            w.writerow(row)
        return buf.getvalue()


def _compare(v: ScalarField, ref: ScalarField, margin: float, tol: float):
    try:
        return w12_distance(v, ref, margin), sup_distance(v, ref, margin), local_hausdorff(v, ref, margin, tol)
    except Degenerate:
        return w12_distance(v, ref, margin), sup_distance(v, ref, margin), 0.0


def linearization_sweep(cfg: SweepConfig) -> SweepReport:
    grid = cfg.grid
    data = cfg.data()
    margin = cfg.margin_cells * grid.h
    bern = minimize_bernoulli(data, Schedule.default(grid.h, el_tol=cfg.el_tol))
    v0 = bern.field
    limit = cfg.limit()
    records, fields = [], []
    for theta in cfg.theta_list:
        t = math.tan(theta)
        rep = minimize_capillary(data * t, theta, capillary_schedule(grid, theta, el_tol=cfg.el_tol))
        v = rescale(rep.field, theta)
        fields.append(v)
        degenerate = False
        try:
            rmin, rmax = nondegeneracy_ratios(v, cfg.margin_cells, cfg.fb_tol)
        except Degenerate:
            degenerate = True
            rmin = rmax = 0.0
        w12, sup, haus = _compare(v, v0, margin, cfg.fb_tol)
        if limit is not None:
            w12l, supl, hausl = _compare(v, limit, margin, cfg.fb_tol)
        else:
            w12l = supl = hausl = None
        records.append(SweepRecord(theta, w12, sup, haus, w12l, supl, hausl, lipschitz(v), rmin, rmax,
                                   rep.converged, degenerate, rep.el_residual))
    return SweepReport(tuple(records), bern, tuple(fields), cfg.band, 10 * cfg.el_tol * grid.h)
