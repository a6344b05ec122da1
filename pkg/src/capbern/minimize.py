"""Constrained minimization of the smoothed Bernoulli and capillary energies.

Engine: projected nonlinear Gauss-Seidel with over-relaxation on a
majorizing quadratic.  The gradient part of either energy is a sum over
cell corners of ``F(|g|^2)`` with ``F`` concave (linear for Bernoulli), so
freezing ``F'`` at the current iterate gives an edge-weighted quadratic
upper bound that touches the energy there.  Every sweep minimizes that bound
node by node (exactly, including the piecewise-linear measure term and the
constraint ``u >= 0``), hence never increases the true smoothed energy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .energy import SmoothedFunctional, _darea
from .errors import HypothesisUnmet, NegativeField, NonpositiveRadius
from .grid import GridSpec, ScalarField, corner_offsets, corner_slice


@dataclass(frozen=True)
class Schedule:
    eps_sequence: tuple[float, ...]
    max_iters: int = 20000
    omega: float | None = None  # relaxation factor; None picks the Laplacian optimum
    rel_tol: float = 1e-15
    el_tol: float = 1e-6
    sweeps_per_step: int = 4
    check_every: int = 5  # steps between Euler-Lagrange residual checks

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_sequence)
        object.__setattr__(self, "eps_sequence", eps)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps_sequence must be nonempty and positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_sequence must be strictly decreasing")
        if self.max_iters < 1 or self.sweeps_per_step < 1 or self.rel_tol <= 0 or self.el_tol <= 0:
            raise ValueError("iteration cap and tolerances must be positive")
        if self.omega is not None and not 0 < self.omega < 2:
            raise ValueError("omega must lie in (0, 2)")

    @classmethod
    def default(cls, h: float, scale: float = 1.0, **kw) -> "Schedule":
        # the final value h/2 makes the discrete planar profile (x_1)_+ exactly stationary
        return cls(tuple(scale * f * h for f in (8, 4, 2, 1, 0.5)), **kw)


@dataclass(frozen=True)
class MinimizeReport:
    field: ScalarField
    energy_trace: tuple[tuple[int, float], ...]  # (stage, energy) per accepted sweep
    iterations: int
    converged: bool
    final_eps: float
    el_residual: float
    el_tol: float
    kind: str
    theta: float | None = None
    zeroed: int = 0  # nodes below the noise floor set to zero after the final stage

    @property
    def energy(self) -> float:
        return self.energy_trace[-1][1]

    def to_dict(self, with_trace: bool = True) -> dict:
        d = {
            "kind": self.kind,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_eps": self.final_eps,
            "el_residual": self.el_residual,
            "el_tol": self.el_tol,
            "energy": self.energy,
            "zeroed": self.zeroed,
        }
        if self.theta is not None:
            d["theta"] = self.theta
        if with_trace:
            d["energy_trace"] = [[s, e] for s, e in self.energy_trace]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# --- helpers ------------------------------------------------------------------


def _interior_index(grid: GridSpec):
    return tuple(slice(1, n - 1) for n in grid.shape)


def harmonic_extension(data: ScalarField) -> ScalarField:
    """Discrete harmonic function with the boundary values of ``data``."""
    g = data.grid
    u = np.array(data.values, dtype=float)
    inner = tuple(n - 2 for n in g.shape)
    if min(inner) <= 0:
        return data
    # 2n*u_i - sum_j u_j = 0 on interior nodes
    eyes = [sp.identity(m, format="csr") for m in inner]
    lap = None
    for k, m in enumerate(inner):
        t = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr")
        term = None
        for j in range(g.dim):
            f = t if j == k else eyes[j]
            term = f if term is None else sp.kron(term, f, format="csr")
        lap = term if lap is None else lap + term
    rhs = np.zeros(inner)
    ii = _interior_index(g)
    for k in range(g.dim):
        for side, src in ((0, 0), (-1, -1)):
            idx = list(ii)
            idx[k] = src
            b = u[tuple(idx)]
            sl = [slice(None)] * g.dim
            sl[k] = side
            rhs[tuple(sl)] += b
    sol = spla.spsolve(lap.tocsc(), rhs.ravel()).reshape(inner)
    u[ii] = sol
    return ScalarField(g, u)


def _color_order(grid: GridSpec) -> np.ndarray:
    """Flat indices of interior nodes by red/black colour, padded with -1."""
    parity = np.indices(grid.shape).sum(axis=0) % 2
    interior = np.zeros(grid.shape, dtype=bool)
    interior[_interior_index(grid)] = True
    lists = [np.flatnonzero((interior & (parity == c)).ravel()) for c in (0, 1)]
    width = max(len(x) for x in lists)
    out = -np.ones((2, max(width, 1)), dtype=np.int64)
    for c, x in enumerate(lists):
        out[c, : len(x)] = x
    return out


def _flat_weights(grid: GridSpec, W: list[np.ndarray]) -> np.ndarray:
    out = np.zeros((grid.dim,) + grid.shape)
    for k, w in enumerate(W):
        sl = [slice(None)] * grid.dim
        sl[k] = slice(0, grid.shape[k] - 1)
        out[(k,) + tuple(sl)] = w
    return out.reshape(grid.dim, -1)


class _EdgeWeights:
    """Edge weights of the quadratic majorant of the corner-gradient energy."""

    def __init__(self, grid: GridSpec, kind: str):
        self.grid = grid
        self.kind = kind
        self.dim = grid.dim
        self.h = grid.h
        self.counts = grid.counts
        self.offsets = corner_offsets(self.dim)
        self._const = None

    def _accumulate(self, d_of_corner) -> list[np.ndarray]:
        g = self.grid
        scale = self.h ** (self.dim - 2) / 2**self.dim
        out = []
        for k in range(self.dim):
            shp = list(g.shape)
            shp[k] -= 1
            w = np.zeros(shp)
            for o in self.offsets:
                if o[k]:
                    continue
                # edge from corner o to o+e_k in every cell; both endpoints are corners
                hi = list(o)
                hi[k] = 1
                contrib = (d_of_corner(o) + d_of_corner(tuple(hi))) * scale
                # place the cell-indexed contribution on the edge array
                sl = [slice(oo, oo + c) for oo, c in zip(o, self.counts)]
                sl[k] = slice(0, self.counts[k])
                w[tuple(sl)] += contrib
            out.append(w)
        return out

    def weights(self, u: np.ndarray) -> list[np.ndarray]:
        if self.kind == "bernoulli":
            if self._const is None:
                ones = np.ones(self.counts)
                self._const = self._accumulate(lambda o: ones)
            return self._const
        counts = self.counts
        diffs = {}
        for k in range(self.dim):
            for o in self.offsets:
                if o[k]:
                    continue
                hi = list(o)
                hi[k] = 1
                diffs[(k, o)] = (u[corner_slice(hi, counts)] - u[corner_slice(o, counts)]) / self.h
        cache = {}

        def d_of_corner(sig):
            if sig not in cache:
                q = 0.0
                for k in range(self.dim):
                    lo = list(sig)
                    lo[k] = 0
                    q = q + diffs[(k, tuple(lo))] ** 2
                # majorant of F(q) = sqrt(1+q)-1 is linear in q with slope F'(q0)
                cache[sig] = _darea(q)
            return cache[sig]

        return self._accumulate(d_of_corner)


@njit(cache=True)
def _sor_sweeps(u, order, W, strides, cw, eps, omega, nsweeps):
    """Red-black projected SOR on ``sum_e W_e (u_a - u_b)^2 + sum_i cw_i clamp(u_i/eps, 0, 1)``.

    ``u`` is flat; ``W[k, i]`` weighs the edge from node ``i`` to ``i + strides[k]``.
    Each node solves its 1D problem exactly; over-relaxation is applied only
    when the old and new values lie on the same quadratic piece.
    """
    dim = strides.size
    for _ in range(nsweeps):
        for c in range(order.shape[0]):
            for t in range(order.shape[1]):
                i = order[c, t]
                if i < 0:
                    break
                A = 0.0
                S = 0.0
                for k in range(dim):
                    st = strides[k]
                    wp = W[k, i]
                    wm = W[k, i - st]
                    A += wp + wm
                    S += wp * u[i + st] + wm * u[i - st]
                ci = cw[i]
                m = S / A
                s1 = m - ci / (2.0 * A * eps)
                if s1 < 0.0:
                    s1 = 0.0
                elif s1 > eps:
                    s1 = eps
                e1 = A * s1 * s1 - 2.0 * S * s1 + ci * s1 / eps
                s2 = m if m > eps else eps
                e2 = A * s2 * s2 - 2.0 * S * s2 + ci
                new = s1 if e1 <= e2 else s2
                old = u[i]
                step = old + omega * (new - old)
                if old >= eps and new >= eps:
                    new = step if step > eps else eps
                elif old > 0.0 and old < eps and new > 0.0 and new < eps:
                    new = min(max(step, 0.0), eps)
                u[i] = new


def el_residual(func: SmoothedFunctional, u: np.ndarray, eps: float) -> float:
    """Max normalized Euler-Lagrange residual over interior nodes whose 3^n neighbourhood is positive."""
    _, grad = func.value_and_grad(u, eps)
    r = np.abs(func.l2_gradient(grad)) * func.residual_scale
    mask = _all_positive_neighbourhood(u)
    if not mask.any():
        return 0.0
    return float(r[mask].max())


def _all_positive_neighbourhood(u: np.ndarray) -> np.ndarray:
    pos = u > 0
    out = np.zeros(u.shape, dtype=bool)
    core = tuple(slice(1, n - 1) for n in u.shape)
    acc = np.ones(tuple(n - 2 for n in u.shape), dtype=bool)
    for off in np.ndindex(*(3,) * u.ndim):
        sl = tuple(slice(o, o + n - 2) for o, n in zip(off, u.shape))
        acc &= pos[sl]
    out[core] = acc
    return out


def _default_omega(grid: GridSpec) -> float:
    n = max(grid.counts)
    return 2.0 / (1.0 + math.sin(math.pi / n))


def _coarse_start(grid: GridSpec, data: ScalarField, kind, schedule, theta) -> np.ndarray | None:
    """Solve on the grid of spacing 2h and interpolate, or None if too coarse."""
    if any(c % 2 or c < 32 for c in grid.counts):
        return None
    cg = GridSpec(grid.dim, grid.lo, grid.hi, 2 * grid.h)
    cdata = ScalarField(cg, data.values[tuple(slice(None, None, 2) for _ in range(grid.dim))])
    cs = replace(schedule, eps_sequence=tuple(2 * e for e in schedule.eps_sequence), omega=None,
                 el_tol=10 * schedule.el_tol)
    coarse = _run(cg, cdata, kind, cs, theta).field.values
    interp = RegularGridInterpolator(cg.axes(), coarse, method="linear")
    return interp(grid.points()).reshape(grid.shape)


def _run(grid, data, kind, schedule, theta=None, multilevel=True) -> MinimizeReport:
    if data.values.min() < 0:
        raise NegativeField("Dirichlet data must be nonnegative")
    func = SmoothedFunctional(grid, kind, theta)
    u = _coarse_start(grid, data, kind, schedule, theta) if multilevel else None
    if u is None:
        # harmonic extension of the data, clipped at zero
        u = np.maximum(harmonic_extension(data).values, 0.0)
    bmask = grid.boundary_mask()
    u[bmask] = data.values[bmask]
    order = _color_order(grid)
    strides = np.array([st // 8 for st in np.zeros(grid.shape).strides], dtype=np.int64)
    ew = _EdgeWeights(grid, kind)
    cw = (func.mcoef * func.weights).ravel()
    omega = schedule.omega or _default_omega(grid)
    trace: list[tuple[int, float]] = []
    iters = 0
    converged = False
    res = 0.0
    eps = schedule.eps_sequence[-1]
    if order[0, 0] < 0:
        e = func.value(u, eps)
        return MinimizeReport(ScalarField(grid, u), ((0, e),), 0, True, float(eps), 0.0, schedule.el_tol, kind, theta)
    n_stages = len(schedule.eps_sequence)
    for stage, eps in enumerate(schedule.eps_sequence):
        final = stage == n_stages - 1
        tol = schedule.el_tol if final else 100 * schedule.el_tol
        e_old = func.value(u, eps)
        trace.append((stage, e_old))
        stage_done = False
        steps = 0
        while iters < schedule.max_iters:
            W = _flat_weights(grid, ew.weights(u))
            cand = u.ravel().copy()
            nsw = schedule.sweeps_per_step
            _sor_sweeps(cand, order, W, strides, cw, eps, omega, nsw)
            cand = cand.reshape(grid.shape)
            e_new = func.value(cand, eps)
            if e_new > e_old:
                # stale weights or roundoff: fall back to one plain Gauss-Seidel sweep
                cand = u.ravel().copy()
                nsw = 1
                _sor_sweeps(cand, order, W, strides, cw, eps, 1.0, 1)
                cand = cand.reshape(grid.shape)
                e_new = func.value(cand, eps)
                if e_new > e_old:
                    iters += 1
                    stage_done = True
                    break
            iters += nsw
            steps += 1
            u = cand
            decrease = e_old - e_new
            e_old = e_new
            trace.append((stage, e_new))
            # the energy flattens long before the residual does, so the
            # relative-decrease test only decides when no residual is measurable
            small = decrease <= schedule.rel_tol * max(abs(e_new), 1e-300)
            if steps % schedule.check_every == 0 or small:
                res = el_residual(func, u, eps)
                if res <= tol or (small and not _all_positive_neighbourhood(u).any()):
                    stage_done = True
                    break
        res = el_residual(func, u, eps)
        if final:
            converged = stage_done and res <= 10 * schedule.el_tol
        if iters >= schedule.max_iters and not stage_done:
            converged = False
            break
    # values below the residual's nodal resolution are roundoff at the free
    # boundary; left in place they would add spurious cells to {u > 0}
    floor = schedule.el_tol * grid.h * float(data.values.max())
    noise = (u > 0) & (u < floor)
    if noise.any():
        u = np.where(noise, 0.0, u)
        res = el_residual(func, u, eps)
        if final:
            converged = converged and res <= 10 * schedule.el_tol
    return MinimizeReport(ScalarField(grid, u), tuple(trace), iters, converged, float(eps), float(res),
                          schedule.el_tol, kind, theta, int(noise.sum()))


def minimize_bernoulli(data: ScalarField, schedule: Schedule | None = None) -> MinimizeReport:
    """Minimize the smoothed Alt-Caffarelli energy with the boundary values of ``data``."""
    grid = data.grid
    schedule = schedule or Schedule.default(grid.h)
    return _run(grid, data, "bernoulli", schedule)


def capillary_schedule(grid: GridSpec, theta: float, **kw) -> Schedule:
    # eps acts on u = tan(theta) v; the final value h*tan(theta/2) balances the
    # discrete contact condition for a planar profile, as h/2 does for Bernoulli
    return Schedule.default(grid.h, scale=2.0 * math.tan(theta / 2.0), **kw)


def minimize_capillary(data: ScalarField, theta: float, schedule: Schedule | None = None) -> MinimizeReport:
    """Minimize the smoothed capillary graph energy with the boundary values of ``data``."""
    if not 0 < theta <= math.pi / 2:
        raise ValueError("theta must lie in (0, pi/2]")
    grid = data.grid
    schedule = schedule or capillary_schedule(grid, theta)
    return _run(grid, data, "capillary", schedule, theta=float(theta))


def harmonic_barrier(n: int, r: float) -> float:
    """Radial barrier vanishing at ``r = 1/4``: ``log(1/4) - log r`` for n=2, ``r^(2-n) - (1/4)^(2-n)`` otherwise."""
    if not r > 0:
        raise NonpositiveRadius(f"radius must be positive, got {r}")
    if n < 2:
        raise ValueError("n must be at least 2")
    if n == 2:
        return math.log(0.25) - math.log(r)
    return r ** (2 - n) - 0.25 ** (2 - n)


def sup_on_ball(f: ScalarField, center: Sequence[float], r: float) -> float:
    x = f.grid.mesh()
    d2 = sum((xi - c) ** 2 for xi, c in zip(x, center))
    sel = d2 <= r * r + 1e-12
    return float(f.values[sel].max()) if sel.any() else 0.0


def face_bump(grid: GridSpec, height: float) -> ScalarField:
    """Boundary data supported on the face ``x_1 = hi``: ``height * cos^2`` profile across the face, zero elsewhere."""
    x = grid.mesh()
    prof = np.ones(grid.shape)
    for k in range(1, grid.dim):
        c = 0.5 * (grid.lo[k] + grid.hi[k])
        w = 0.5 * (grid.hi[k] - grid.lo[k])
        prof = prof * np.cos(0.5 * math.pi * (x[k] - c) / w) ** 2
    vals = np.zeros(grid.shape)
    vals[-1] = height * prof[-1]
    return ScalarField(grid, vals)


@dataclass(frozen=True)
class DeadCoreResult:
    vanishes: bool
    sup_half: float
    sup_quarter: float
    sup_bound: float
    report: MinimizeReport = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "vanishes": self.vanishes,
            "sup_half": self.sup_half,
            "sup_quarter": self.sup_quarter,
            "sup_bound": self.sup_bound,
            "minimize": self.report.to_dict(with_trace=False),
        }


def dead_core_test(
    data: ScalarField,
    theta: float,
    sup_bound: float | None = None,
    eps_small: float = 0.05,
    tol: float = 1e-12,
    schedule: Schedule | None = None,
) -> DeadCoreResult:
    """Does the capillary minimizer vanish on ``B_{1/4}`` given ``sup_{B_{1/2}} u <= sup_bound``?

    ``sup_bound`` defaults to ``eps_small * theta``.  Raises
    :class:`HypothesisUnmet` when the computed minimizer exceeds it.
    """
    sup_bound = eps_small * theta if sup_bound is None else sup_bound
    rep = minimize_capillary(data, theta, schedule)
    u = rep.field
    origin = (0.0,) * u.grid.dim
    s_half = sup_on_ball(u, origin, 0.5)
    if s_half > sup_bound:
        raise HypothesisUnmet(f"sup over B_1/2 is {s_half:.3e} > bound {sup_bound:.3e}")
    s_quarter = sup_on_ball(u, origin, 0.25)
    return DeadCoreResult(s_quarter <= tol, s_half, s_quarter, float(sup_bound), rep)
