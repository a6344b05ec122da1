"""Uniform Cartesian grids, nodal fields, finite differences and free-boundary geometry.

Conventions used throughout the package:

* nodes are indexed lexicographically (C order, ``indexing="ij"``);
* a *cell* is the box between ``2**dim`` neighbouring nodes, so cell arrays
  have shape ``tuple(n - 1 for n in grid.shape)``;
* cell quantities are built from nodal values by averaging over corners.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import Degenerate, EmptySet


@dataclass(frozen=True)
class GridSpec:
    dim: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    h: float

    def __post_init__(self):
        lo = tuple(float(x) for x in np.broadcast_to(self.lo, (self.dim,)))
        hi = tuple(float(x) for x in np.broadcast_to(self.hi, (self.dim,)))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "h", float(self.h))
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        for a, b in zip(lo, hi):
            if not b > a:
                raise ValueError("hi must exceed lo on every axis")
            n = (b - a) / self.h
            if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
                raise ValueError(f"(hi - lo)/h = {n} is not a positive integer")

    @classmethod
    def box(cls, dim: int, half_width: float = 1.0, h: float = 1 / 64) -> "GridSpec":
        return cls(dim, (-half_width,) * dim, (half_width,) * dim, h)

    @property
    def counts(self) -> tuple[int, ...]:
        """Cells per axis."""
        return tuple(int(round((b - a) / self.h)) for a, b in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple[int, ...]:
        """Nodes per axis."""
        return tuple(c + 1 for c in self.counts)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axes(self) -> list[np.ndarray]:
        return [a + self.h * np.arange(n) for a, n in zip(self.lo, self.shape)]

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        ax = [a + self.h * (np.arange(n) + 0.5) for a, n in zip(self.lo, self.counts)]
        return tuple(np.meshgrid(*ax, indexing="ij"))

    def points(self) -> np.ndarray:
        """Node coordinates as an ``(N, dim)`` array in lexicographic order."""
        return np.stack([x.ravel() for x in self.mesh()], axis=1)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            m[tuple(idx)] = True
            idx[k] = -1
            m[tuple(idx)] = True
        return m

    def interior_mask(self, margin: float = 0.0) -> np.ndarray:
        """Nodes at distance >= ``margin`` from every box face (and off the faces)."""
        m = ~self.boundary_mask()
        for k, x in enumerate(self.mesh()):
            m &= (x - self.lo[k] >= margin - 1e-12) & (self.hi[k] - x >= margin - 1e-12)
        return m

    def node_weights(self) -> np.ndarray:
        """Trapezoid weights; they sum to the box volume."""
        w = np.full(self.shape, self.cell_volume)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            w[tuple(idx)] *= 0.5
            idx[k] = -1
            w[tuple(idx)] *= 0.5
        return w

    def contains_ball(self, center: Sequence[float], r: float) -> bool:
        return all(c - r >= a - 1e-12 and c + r <= b + 1e-12 for c, a, b in zip(center, self.lo, self.hi))


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size != int(np.prod(self.grid.shape)):
                raise ValueError(f"expected {np.prod(self.grid.shape)} values, got {v.size}")
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[..., np.ndarray]) -> "ScalarField":
        vals = np.broadcast_to(np.asarray(fn(*grid.mesh()), dtype=float), grid.shape)
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __mul__(self, s: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * s)

    __rmul__ = __mul__


# --- corner / cell machinery -------------------------------------------------


def corner_offsets(dim: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=dim))


def corner_slice(offset: Sequence[int], counts: Sequence[int]) -> tuple[slice, ...]:
    return tuple(slice(o, o + c) for o, c in zip(offset, counts))


def cell_average(values: np.ndarray) -> np.ndarray:
    """Average of the ``2**dim`` corner values of every cell."""
    counts = tuple(s - 1 for s in values.shape)
    offs = corner_offsets(values.ndim)
    acc = np.zeros(counts)
    for o in offs:
        acc += values[corner_slice(o, counts)]
    return acc / len(offs)


def cell_mean_gradient(values: np.ndarray, h: float) -> list[np.ndarray]:
    """Per-cell gradient from averaged face differences (exact for affine fields)."""
    dim = values.ndim
    counts = tuple(s - 1 for s in values.shape)
    out = []
    for k in range(dim):
        acc = np.zeros(counts)
        n = 0
        for o in corner_offsets(dim):
            if o[k]:
                continue
            hi = list(o)
            hi[k] = 1
            acc += values[corner_slice(hi, counts)] - values[corner_slice(o, counts)]
            n += 1
        out.append(acc / (n * h))
    return out


_DROP = 1e-4


def _halfspace_cube_volume(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Volume of ``{y in [0,1]^d : a.y <= b}`` for each row of ``a``.

    Inclusion-exclusion over cube vertices after flipping negative
    coefficients. Coefficients below ``DROP`` times the largest one are
    removed and replaced by their mean shift of ``b`` (second order in the
    dropped coefficient); this keeps the division by ``prod(a)`` well
    conditioned, with absolute error below about 1e-8.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    m, d = a.shape
    b = b - np.where(a < 0, a, 0.0).sum(axis=1)
    a = -np.sort(-np.abs(a), axis=1)  # descending: a canonical order
    scale = a[:, 0]
    flat = scale == 0
    # the set is invariant under positive scaling of (a, b); normalize to avoid underflow
    scale = np.where(flat, 1.0, scale)
    a = a / scale[:, None]
    b = b / scale
    small = a < _DROP
    b = b - 0.5 * np.where(small, a, 0.0).sum(axis=1)
    kept = np.where(flat, 0, (~small).sum(axis=1))
    vol = np.where(kept == 0, (b >= 0).astype(float), 0.0)
    for k in range(1, d + 1):
        rows = kept == k
        if not rows.any():
            continue
        ak, bk = a[rows, :k], b[rows]
        acc = np.zeros(len(bk))
        for subset in itertools.product((0, 1), repeat=k):
            s = np.array(subset, dtype=float)
            acc += (-1) ** int(s.sum()) * np.maximum(bk - ak @ s, 0.0) ** k
        vol[rows] = acc / (math.factorial(k) * np.prod(ak, axis=1))
    return np.clip(vol, 0.0, 1.0)


def positive_fraction(values: np.ndarray, h: float, tol: float = 0.0) -> np.ndarray:
    """Fraction of each cell where the cell's linear model exceeds ``tol``.

    Cells whose corners all exceed ``tol`` count fully, cells with no corner
    above ``tol`` not at all; mixed cells are cut by the affine function
    through the cell-average value with the cell-mean gradient.
    """
    counts = tuple(s - 1 for s in values.shape)
    offs = corner_offsets(values.ndim)
    above = np.zeros(counts, dtype=int)
    for o in offs:
        above += values[corner_slice(o, counts)] > tol
    frac = (above == len(offs)).astype(float)
    mixed = (above > 0) & (above < len(offs))
    if np.any(mixed):
        center = cell_average(values)[mixed]
        grads = np.stack([g[mixed] for g in cell_mean_gradient(values, h)], axis=1)
        # in unit-cube coords y: model(y) = center + h*g.(y - 1/2); want model > tol
        a = -h * grads
        b = center - tol - 0.5 * h * grads.sum(axis=1)
        frac[mixed] = _halfspace_cube_volume(a, b)
    return frac


# --- operations ---------------------------------------------------------------


def gradient(f: ScalarField) -> list[ScalarField]:
    """Central differences inside, one-sided at box faces."""
    g = f.grid
    if g.dim == 1:
        comps = [np.gradient(f.values, g.h, edge_order=1)]
    else:
        comps = np.gradient(f.values, g.h, edge_order=1)
    return [ScalarField(g, c) for c in comps]


def gradient_norm(f: ScalarField) -> np.ndarray:
    return np.sqrt(sum(c.values**2 for c in gradient(f)))


def integrate(f: ScalarField, mask: np.ndarray | None = None) -> float:
    """Cell-average quadrature, optionally restricted to (or weighted by) a cell mask."""
    cells = cell_average(f.values)
    if mask is not None:
        cells = cells * np.asarray(mask, dtype=float)
    return float(np.sum(cells.ravel()) * f.grid.cell_volume)


def positivity_set(f: ScalarField, tol: float = 0.0) -> np.ndarray:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return cell_average(f.values) > tol


@dataclass(frozen=True)
class FreeBoundarySet:
    interface_points: np.ndarray
    dist: ScalarField | None
    degenerate: bool = False

    @property
    def empty(self) -> bool:
        return len(self.interface_points) == 0

    def within(self, lo: Sequence[float], hi: Sequence[float]) -> np.ndarray:
        p = self.interface_points
        if len(p) == 0:
            return p
        keep = np.all((p >= np.asarray(lo) - 1e-12) & (p <= np.asarray(hi) + 1e-12), axis=1)
        return p[keep]


def _interface_points(vals: np.ndarray, grid: GridSpec, tol: float) -> np.ndarray:
    h = grid.h
    axes = grid.axes()
    pts = []
    for k in range(grid.dim):
        n = vals.shape[k]
        a = np.take(vals, np.arange(n - 1), axis=k)
        b = np.take(vals, np.arange(1, n), axis=k)
        pa, pb = a > tol, b > tol
        for sel, pos_is_b in ((pa & ~pb, False), (~pa & pb, True)):
            idx = np.argwhere(sel)
            if len(idx) == 0:
                continue
            # idx[:, k] indexes the lower node of the edge
            lower = idx.copy()
            upper = idx.copy()
            upper[:, k] += 1
            pos = upper if pos_is_b else lower
            zer = lower if pos_is_b else upper
            vp = vals[tuple(pos.T)]
            vz = vals[tuple(zer.T)]
            # step from the positive node toward the nonpositive one
            direction = -1 if pos_is_b else 1
            offset = np.empty(len(idx))
            interp = vz < tol
            t = (vp - tol) / np.where(interp, vp - vz, 1.0)
            offset[interp] = h * t[interp]
            flat = ~interp
            if np.any(flat):
                # no information on the nonpositive side: extrapolate the
                # positive-side profile from the next node inward
                nxt = pos[flat].copy()
                nxt[:, k] -= direction
                ok = (nxt[:, k] >= 0) & (nxt[:, k] < n)
                nxt_c = np.clip(nxt[:, k], 0, n - 1)
                nxt[:, k] = nxt_c
                vq = vals[tuple(nxt.T)]
                slope = (vq - vp[flat]) / h
                good = ok & (slope > 0)
                off = np.where(good, (vp[flat] - tol) / np.where(good, slope, 1.0), h)
                offset[flat] = np.clip(off, 0.0, h)
            coords = np.stack([axes[j][pos[:, j]] for j in range(grid.dim)], axis=1)
            coords[:, k] += direction * offset
            pts.append(coords)
    if not pts:
        return np.zeros((0, grid.dim))
    p = np.concatenate(pts, axis=0)
    # deterministic order, duplicates removed
    p = np.round(p, 12)
    return np.unique(p, axis=0)


def free_boundary(f: ScalarField, tol: float = 0.0) -> FreeBoundarySet:
    """Interface points on sign-change edges plus signed distance to them.

    Raises :class:`Degenerate` when ``f`` is one-signed relative to ``tol``.
    """
    vals = f.values
    pos = vals > tol
    if pos.all() or not pos.any():
        raise Degenerate("field is one-signed; free boundary is empty")
    pts = _interface_points(vals, f.grid, tol)
    if len(pts) == 0:
        raise Degenerate("no sign-change edges")
    d, _ = cKDTree(pts).query(f.grid.points())
    d = d.reshape(f.grid.shape)
    dist = np.where(pos, d, -d)
    return FreeBoundarySet(pts, ScalarField(f.grid, dist))


def _as_points(a) -> np.ndarray:
    if isinstance(a, FreeBoundarySet):
        return a.interface_points
    return np.asarray(a, dtype=float)


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between two sampled point sets."""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptySet("Hausdorff distance of an empty set")
    dab = cKDTree(pb).query(pa)[0].max()
    dba = cKDTree(pa).query(pb)[0].max()
    return float(max(dab, dba))
