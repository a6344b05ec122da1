"""Discrete capillary graph energy, Alt-Caffarelli functional and related diagnostics.

Gradient integrands are evaluated per cell as the mean over the cell's
corners of ``F(|g_c|^2)``, where ``g_c`` is the one-sided difference gradient
along the cell edges meeting at corner ``c``.  The scheme is exact for affine
fields and, unlike a single cell-centre gradient, has no zero-energy
checkerboard mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import BallOutOfDomain, NegativeField
from .grid import (
    GridSpec,
    ScalarField,
    corner_offsets,
    corner_slice,
    positive_fraction,
)

NEG_TOL = 1e-12


@dataclass(frozen=True)
class EnergyBreakdown:
    surface: float
    wetting: float
    total: float
    theta: float | None = None
    eps: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_nonnegative(f: ScalarField, tol: float = NEG_TOL) -> None:
    if f.values.min() < -tol:
        raise NegativeField(f"field has values down to {f.values.min():.3e}")


# --- corner-gradient integrals ------------------------------------------------


class CornerIntegral:
    """Evaluates ``sum_cells h^n mean_corners F(|g_c|^2) * weight_cell`` and its nodal gradient."""

    def __init__(self, shape: Sequence[int], h: float):
        self.dim = len(shape)
        self.h = h
        self.counts = tuple(s - 1 for s in shape)
        self.offsets = corner_offsets(self.dim)
        # edge keys: (axis, lower-corner offset with that axis bit cleared)
        self.edge_keys = [(k, o) for k in range(self.dim) for o in self.offsets if not o[k]]
        self.corner_edges = [
            [(k, tuple(0 if j == k else s for j, s in enumerate(sig))) for k in range(self.dim)]
            for sig in self.offsets
        ]
        self._sl = {o: corner_slice(o, self.counts) for o in self.offsets}

    def _upper(self, k, o):
        hi = list(o)
        hi[k] = 1
        return tuple(hi)

    def edges(self, u: np.ndarray) -> dict:
        return {(k, o): (u[self._sl[self._upper(k, o)]] - u[self._sl[o]]) / self.h for k, o in self.edge_keys}

    def corner_q(self, edges: dict) -> list[np.ndarray]:
        return [sum(edges[e] ** 2 for e in ce) for ce in self.corner_edges]

    def cell_mean(self, u: np.ndarray, F: Callable) -> np.ndarray:
        qs = self.corner_q(self.edges(u))
        return sum(F(q) for q in qs) / len(qs)

    def value_and_grad(self, u: np.ndarray, F: Callable, dF: Callable, weight=None):
        e = self.edges(u)
        qs = self.corner_q(e)
        scale = self.h**self.dim / len(self.offsets)
        total = 0.0
        ge = {key: np.zeros(self.counts) for key in self.edge_keys}
        for q, ce in zip(qs, self.corner_edges):
            Fq = F(q)
            d = dF(q)
            if weight is not None:
                Fq = Fq * weight
                d = d * weight
            total += float(np.sum(Fq))
            for key in ce:
                ge[key] += 2.0 * d * e[key]
        grad = np.zeros(u.shape)
        for (k, o), g in ge.items():
            g = g * (scale / self.h)
            grad[self._sl[self._upper(k, o)]] += g
            grad[self._sl[o]] -= g
        return total * scale, grad


def _sq(q):
    return q


def _dsq(q):
    return np.ones_like(q)


def _area(q):
    # sqrt(1+q) - 1, written to avoid cancellation for small slopes
    return q / (np.sqrt(1.0 + q) + 1.0)


def _darea(q):
    return 0.5 / np.sqrt(1.0 + q)


def heaviside_eps(t: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(t / eps, 0.0, 1.0)


def dheaviside_eps(t: np.ndarray, eps: float) -> np.ndarray:
    return np.where((t >= 0.0) & (t < eps), 1.0 / eps, 0.0)


# --- exact energies -----------------------------------------------------------


def capillary_energy(u: ScalarField, theta: float) -> EnergyBreakdown:
    """Graph energy ``int_{u>0} sqrt(1+|Du|^2) - cos(theta) |{u>0}|`` over the grid box."""
    _check_nonnegative(u)
    g = u.grid
    ci = CornerIntegral(g.shape, g.h)
    frac = positive_fraction(u.values, g.h, 0.0)
    area_density = ci.cell_mean(u.values, lambda q: np.sqrt(1.0 + q))
    vol = g.cell_volume
    surface = float(np.sum((frac * area_density).ravel()) * vol)
    measure = float(np.sum(frac.ravel()) * vol)
    wetting = -math.cos(theta) * measure
    return EnergyBreakdown(surface, wetting, surface + wetting, theta=float(theta))


def bernoulli_energy(v: ScalarField) -> EnergyBreakdown:
    """Alt-Caffarelli functional ``int |Dv|^2 + 1_{v>0}``."""
    _check_nonnegative(v)
    g = v.grid
    ci = CornerIntegral(g.shape, g.h)
    dirichlet = float(np.sum(ci.cell_mean(v.values, _sq).ravel()) * g.cell_volume)
    measure = float(np.sum(positive_fraction(v.values, g.h, 0.0).ravel()) * g.cell_volume)
    return EnergyBreakdown(dirichlet, measure, dirichlet + measure)


def expansion_residual(v: ScalarField, theta: float) -> float:
    """``|A(tan(theta) v) - tan^2(theta)/2 J(v)| / tan^2(theta)``; O(theta) as theta -> 0."""
    t = math.tan(theta)
    a = capillary_energy(v * t, theta).total
    j = bernoulli_energy(v).total
    return abs(a - 0.5 * t * t * j) / (t * t)


# --- smoothed energies --------------------------------------------------------


def smoothed_bernoulli_energy(v: ScalarField, eps: float) -> EnergyBreakdown:
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = v.grid
    ci = CornerIntegral(g.shape, g.h)
    dirichlet = float(np.sum(ci.cell_mean(v.values, _sq).ravel()) * g.cell_volume)
    measure = float(np.sum((g.node_weights() * heaviside_eps(v.values, eps)).ravel()))
    return EnergyBreakdown(dirichlet, measure, dirichlet + measure, eps=float(eps))


def smoothed_capillary_energy(u: ScalarField, theta: float, eps: float) -> EnergyBreakdown:
    """Surrogate ``int (sqrt(1+|Du|^2) - 1) + (1 - cos theta) int H_eps(u)``.

    The area excess is integrated over the whole box (it vanishes where
    ``u`` is flat), so ``surface`` carries ``int H_eps(u)`` as its measure part.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = u.grid
    ci = CornerIntegral(g.shape, g.h)
    excess = float(np.sum(ci.cell_mean(u.values, _area).ravel()) * g.cell_volume)
    measure = float(np.sum((g.node_weights() * heaviside_eps(u.values, eps)).ravel()))
    wetting = -math.cos(theta) * measure
    surface = excess + measure
    return EnergyBreakdown(surface, wetting, surface + wetting, theta=float(theta), eps=float(eps))


class SmoothedFunctional:
    """Smoothed energy with nodal gradient, the objective of the minimizers.

    ``kind`` is ``"bernoulli"`` or ``"capillary"``.  ``residual_scale``
    converts the L2 gradient into the normalized Euler-Lagrange residual
    (``-Laplacian v`` for Bernoulli, ``-div(Dv/sqrt(1+tan^2|Dv|^2))`` for the
    capillary problem written in ``v = u/tan(theta)``).
    """

    def __init__(self, grid: GridSpec, kind: str, theta: float | None = None):
        if kind not in ("bernoulli", "capillary"):
            raise ValueError(kind)
        self.grid = grid
        self.kind = kind
        self.theta = theta
        self.ci = CornerIntegral(grid.shape, grid.h)
        self.weights = grid.node_weights()
        if kind == "bernoulli":
            self.F, self.dF, self.mcoef = _sq, _dsq, 1.0
            self.residual_scale = 0.5
        else:
            self.F, self.dF = _area, _darea
            self.mcoef = 1.0 - math.cos(theta)
            self.residual_scale = 1.0 / math.tan(theta)

    def value(self, u: np.ndarray, eps: float) -> float:
        # extended-precision sums keep late descent steps above the summation noise
        grad_part = np.sum(self.ci.cell_mean(u, self.F), dtype=np.longdouble) * self.grid.cell_volume
        measure = np.sum(self.weights * heaviside_eps(u, eps), dtype=np.longdouble)
        return float(grad_part + self.mcoef * measure)

    def value_and_grad(self, u: np.ndarray, eps: float):
        e, g = self.ci.value_and_grad(u, self.F, self.dF)
        e += self.mcoef * float(np.sum((self.weights * heaviside_eps(u, eps)).ravel()))
        g += self.mcoef * self.weights * dheaviside_eps(u, eps)
        return e, g

    def l2_gradient(self, grad: np.ndarray) -> np.ndarray:
        return grad / self.weights


# --- Weiss diagnostic ---------------------------------------------------------


def _ball_cell_fraction(grid: GridSpec, center, r: float, sub: int) -> np.ndarray:
    cc = grid.cell_centers()
    dist = np.sqrt(sum((x - c) ** 2 for x, c in zip(cc, center)))
    half_diag = 0.5 * grid.h * math.sqrt(grid.dim)
    frac = (dist <= r - half_diag).astype(float)
    cut = np.abs(dist - r) < half_diag
    if np.any(cut):
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        sub_pts = np.stack(np.meshgrid(*([offs] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
        centers = np.stack([x[cut] for x in cc], axis=1)
        pts = centers[:, None, :] + grid.h * sub_pts[None, :, :]
        inside = np.sum((pts - np.asarray(center)) ** 2, axis=-1) <= r * r
        frac[cut] = inside.mean(axis=1)
    return frac


def _sphere_quadrature(dim: int, center, r: float, h: float):
    c = np.asarray(center, dtype=float)
    if dim == 1:
        return np.array([[c[0] - r], [c[0] + r]]), np.array([1.0, 1.0])
    if dim == 2:
        m = max(512, 8 * int(math.ceil(2 * math.pi * r / h)))
        phi = 2 * math.pi * np.arange(m) / m
        pts = c + r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return pts, np.full(m, 2 * math.pi * r / m)
    k = max(64, 4 * int(math.ceil(math.pi * r / h)))
    z, wz = np.polynomial.legendre.leggauss(k)
    m = 2 * k
    phi = 2 * math.pi * np.arange(m) / m
    Z, P = np.meshgrid(z, phi, indexing="ij")
    s = np.sqrt(1 - Z**2)
    pts = c + r * np.stack([s * np.cos(P), s * np.sin(P), Z], axis=-1).reshape(-1, 3)
    w = (np.outer(wz, np.full(m, 2 * math.pi / m)) * r * r).ravel()
    return pts, w


def weiss_energy(v: ScalarField, center: Sequence[float], r: float, sub: int | None = None) -> float:
    """``r^-n J_{B_r}(v) - r^-(n+1) int_{dB_r} v^2``; constant in r iff v is 1-homogeneous about ``center``."""
    g = v.grid
    center = tuple(float(c) for c in center)
    if len(center) != g.dim:
        raise ValueError("center dimension mismatch")
    if not r > 0 or not g.contains_ball(center, r):
        raise BallOutOfDomain(f"B_{r}({center}) is not inside the grid box")
    _check_nonnegative(v)
    n = g.dim
    sub = sub or (16 if n <= 2 else 8)
    ci = CornerIntegral(g.shape, g.h)
    density = ci.cell_mean(v.values, _sq) + positive_fraction(v.values, g.h, 0.0)
    ball = _ball_cell_fraction(g, center, r, sub)
    j_ball = float(np.sum((density * ball).ravel()) * g.cell_volume)
    pts, w = _sphere_quadrature(n, center, r, g.h)
    interp = RegularGridInterpolator(g.axes(), v.values, method="linear")
    boundary = float(np.sum(w * interp(pts) ** 2))
    return j_ball / r**n - boundary / r ** (n + 1)
