"""Hodograph transform of near-planar rescaled minimizers and the associated elliptic system.

Coordinates of the transformed function ``g``: the first axis is the value
``s = v - level`` of the original field, the remaining axes are the original
transverse coordinates, and ``g`` returns the position along the monotone axis.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotInvertible
from .grid import GridSpec, ScalarField
from .minimize import MinimizeReport, capillary_schedule, minimize_capillary


@dataclass(frozen=True)
class HodographField:
    g: ScalarField
    theta: float
    source: str = "exact"
    level: float = 0.0
    axis: int = 0

    def __post_init__(self):
        if not 0 < self.theta <= math.pi / 2:
            raise ValueError("theta must lie in (0, pi/2]")
        if self.g.grid.lo[0] != 0.0:
            raise ValueError("the first axis of a hodograph grid starts at 0")

    @property
    def grid(self) -> GridSpec:
        return self.g.grid

    @classmethod
    def exact(cls, grid: GridSpec, fn, theta: float) -> "HodographField":
        return cls(ScalarField.from_function(grid, fn), float(theta))


def _derivs(values: np.ndarray, h: float) -> list[np.ndarray]:
    """Central differences, second-order one-sided at faces."""
    if values.ndim == 1:
        return [np.gradient(values, h, edge_order=2)]
    return list(np.gradient(values, h, edge_order=2))


def hodograph_transform(v: ScalarField, theta: float, level: float = 0.0, axis: int = 0) -> HodographField:
    """Invert ``v`` column by column along ``axis``: ``g(s, x') = x_axis`` where ``v = level + s``.

    Nodes with ``v > level`` must be strictly increasing along ``axis`` from
    the last crossing onward; otherwise :class:`NotInvertible` is raised.
    """
    grid = v.grid
    h = grid.h
    vals = np.moveaxis(v.values, axis, 0)
    x_ax = grid.axes()[axis]
    n0 = vals.shape[0]
    cols = vals.reshape(n0, -1)
    tops = []
    starts = []
    for j in range(cols.shape[1]):
        c = cols[:, j]
        above = c > level
        if not above.any():
            raise NotInvertible("a column never exceeds the inversion level")
        below = np.flatnonzero(~above)
        start = below[-1] if len(below) else 0
        if len(below) and below[-1] == n0 - 1:
            raise NotInvertible("a column ends at or below the inversion level")
        seg = c[start:]
        if np.any(np.diff(seg) <= 0):
            raise NotInvertible("field is not strictly increasing along the monotone axis")
        starts.append(start)
        tops.append(seg[-1])
    s_max = min(tops) - level
    m = int(math.floor(s_max / h + 1e-9))
    if m < 2:
        raise NotInvertible("inversion range shorter than two cells")
    s = h * np.arange(m + 1)
    out = np.empty((m + 1, cols.shape[1]))
    for j, start in enumerate(starts):
        seg = cols[start:, j]
        xs = x_ax[start:]
        out[:, j] = np.interp(s + level, seg, xs)
    other = [grid.axes()[k] for k in range(grid.dim) if k != axis]
    g_vals = out.reshape((m + 1,) + vals.shape[1:])
    lo = (0.0,) + tuple(a[0] for a in other)
    hi = (s[-1],) + tuple(a[-1] for a in other)
    gg = GridSpec(grid.dim, lo, hi, h)
    return HodographField(ScalarField(gg, g_vals), float(theta), source="field", level=float(level), axis=axis)


def minimizer_hodograph(grid: GridSpec, theta: float, el_tol: float = 1e-6) -> tuple[HodographField, MinimizeReport]:
    """Capillary minimizer for planar data ``tan(theta) (x_1)_+``, rescaled and inverted along ``x_1``.

    The inversion level sits two cells above the smoothing band, where the
    rescaled field is strictly monotone.
    """
    t = math.tan(theta)
    data = ScalarField.from_function(grid, lambda *x: t * np.maximum(x[0], 0.0))
    rep = minimize_capillary(data, theta, capillary_schedule(grid, theta, el_tol=el_tol))
    v = ScalarField(grid, rep.field.values / t)
    level = rep.final_eps / t + 2 * grid.h
    hf = hodograph_transform(v, theta, level=level)
    return HodographField(hf.g, hf.theta, "minimizer", hf.level, hf.axis), rep


def inverse_transform(hf: HodographField, grid: GridSpec) -> tuple[ScalarField, np.ndarray]:
    """Rebuild ``v`` on ``grid`` from ``g``; returns the field and the mask of nodes inside the inverted range."""
    axis = hf.axis
    x_ax = grid.axes()[axis]
    g = hf.g.values.reshape(hf.g.values.shape[0], -1)
    s = hf.grid.axes()[0] + hf.level
    out = np.zeros((len(x_ax), g.shape[1]))
    covered = np.zeros(out.shape, dtype=bool)
    for j in range(g.shape[1]):
        col = g[:, j]
        inside = (x_ax >= col[0]) & (x_ax <= col[-1])
        out[inside, j] = np.interp(x_ax[inside], col, s)
        covered[inside, j] = True
    shape = (len(x_ax),) + tuple(n for k, n in enumerate(grid.shape) if k != axis)
    out = np.moveaxis(out.reshape(shape), 0, axis)
    covered = np.moveaxis(covered.reshape(shape), 0, axis)
    return ScalarField(grid, out), covered


def dtheta_gradient(hf: HodographField) -> list[np.ndarray]:
    """``D^theta g = (D_1 g / tan(theta), D_2 g, ...)``."""
    d = _derivs(hf.g.values, hf.grid.h)
    d[0] = d[0] / math.tan(hf.theta)
    return d


@dataclass(frozen=True)
class CoefficientField:
    grid: GridSpec
    family: str
    entries: np.ndarray  # shape (n, n) + grid.shape

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.entries[i, j]

    def max_deviation_from_identity(self) -> float:
        n = self.entries.shape[0]
        eye = np.eye(n).reshape((n, n) + (1,) * self.grid.dim)
        return float(np.abs(self.entries - eye).max())

    def to_csv(self) -> str:
        n = self.entries.shape[0]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(self.grid.dim)] + [f"a{i + 1}{j + 1}" for i in range(n) for j in range(n)])
        pts = self.grid.points()
        flat = self.entries.reshape(n * n, -1)
        for p, row in zip(pts, flat.T):
            w.writerow([repr(float(x)) for x in p] + [repr(float(x)) for x in row])
        return buf.getvalue()


def coefficients(hf: HodographField, family: str) -> CoefficientField:
    """Coefficient matrices ``a`` (divergence form), ``tilde`` (linearized) or ``bar`` (non-divergence form).

    ``bar`` follows the displayed formulas; its ``1j`` entries use the
    exponent ``(1+|D^theta g|^2)^{3/2}`` shared with ``bar_11``.
    """
    t = math.tan(hf.theta)
    d = _derivs(hf.g.values, hf.grid.h)
    n = hf.grid.dim
    S = 1.0 + (d[0] / t) ** 2 + sum(d[j] ** 2 for j in range(1, n))
    rs = np.sqrt(S)
    s32 = S * rs
    tail = sum((d[j] ** 2 for j in range(1, n)), np.zeros_like(S))
    E = np.zeros((n, n) + S.shape)
    if family == "a":
        E[0, 0] = 1.0 / (t**3 * rs)
        for j in range(1, n):
            E[j, j] = 1.0 / (t * rs)
    elif family == "tilde":
        E[0, 0] = (1.0 + tail) / (t**3 * s32)
        for j in range(1, n):
            E[0, j] = E[j, 0] = -d[0] * d[j] / (t**3 * s32)
            E[j, j] = 1.0 / (t * rs) - d[j] ** 2 / (t * s32)
            for i in range(1, j):
                E[i, j] = E[j, i] = -d[i] * d[j] / (t * s32)
    elif family == "bar":
        E[0, 0] = (1.0 + tail) / (t**3 * s32)
        for j in range(1, n):
            E[0, j] = E[j, 0] = -d[0] * d[j] / (t**3 * s32)
            E[j, j] = 1.0 / (t * rs)
            for i in range(1, j):
                E[i, j] = E[j, i] = -d[i] * d[j] / (t * rs)
    else:
        raise ValueError(f"unknown coefficient family {family!r}")
    return CoefficientField(hf.grid, family, E)


@dataclass(frozen=True)
class PdeResidual:
    interior: ScalarField  # zero on the box faces
    boundary: np.ndarray  # values on the face s = 0
    boundary_points: np.ndarray

    @property
    def max_interior(self) -> float:
        return float(np.abs(self.interior.values).max())

    @property
    def max_boundary(self) -> float:
        return float(np.abs(self.boundary).max())

    def to_dict(self) -> dict:
        return {"max_interior": self.max_interior, "max_boundary": self.max_boundary}


def pde_residual(hf: HodographField) -> PdeResidual:
    """Divergence-form interior residual and contact-angle residual ``(D_1 g)^2 - (|Dg|^2 + 1)/2`` on ``s = 0``."""
    t = math.tan(hf.theta)
    h = hf.grid.h
    n = hf.grid.dim
    d = _derivs(hf.g.values, h)
    S = 1.0 + (d[0] / t) ** 2 + sum(d[j] ** 2 for j in range(1, n))
    pref = 1.0 / (t * np.sqrt(S))
    flux = [pref * d[0] / t**2] + [pref * d[j] for j in range(1, n)]
    div = sum(_derivs(flux[k], h)[k] for k in range(n))
    inner = np.zeros_like(div)
    core = tuple(slice(1, m - 1) for m in hf.grid.shape)
    inner[core] = div[core]
    grad2 = sum(x**2 for x in d)
    bres = (d[0] ** 2 - 0.5 * (grad2 + 1.0))[0]
    pts = hf.grid.points().reshape(hf.grid.shape + (n,))[0]
    return PdeResidual(ScalarField(hf.grid, inner), np.asarray(bres), pts.reshape(-1, n))


def natural_bc_residual(hf: HodographField, k: int) -> float:
    """``max |sum_j tilde_a_1j D_j w|`` on ``s = 0`` with ``w = D_k g`` and ``tilde_a_11 = (D_1 g)^2 / (t^3 S^{3/2})``.

    ``k`` is 1-based and must be at least 2.
    """
    n = hf.grid.dim
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}]")
    t = math.tan(hf.theta)
    h = hf.grid.h
    d = _derivs(hf.g.values, h)
    S = 1.0 + (d[0] / t) ** 2 + sum(d[j] ** 2 for j in range(1, n))
    s32 = S * np.sqrt(S)
    dw = _derivs(d[k - 1], h)
    total = d[0] ** 2 / (t**3 * s32) * dw[0]
    for j in range(1, n):
        total = total - d[0] * d[j] / (t**3 * s32) * dw[j]
    return float(np.abs(total[0]).max())
