"""Explicit constants: the feasibility system behind the angle threshold near pi/2, and the small-angle delta_0 bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

P_RANGE = (0.51, 1.0)
EPS_RANGE = (1e-3, 1.0)
LAM_RANGE = (1e-3, 0.99)
GRID_POINTS = 50


def kappa(theta: float) -> float:
    """``|cot(theta) / sin(theta)|``."""
    s = math.sin(theta)
    return abs(math.cos(theta)) / (s * s)


def default_lambda_constant(n: int) -> float:
    return 3.0 * math.sqrt(n - 1)


def slacks(n: int, k: float, c: float, p, eps, lam):
    """Slack of each inequality (nonnegative means satisfied); broadcasts over arrays."""
    ck = c * k
    s1 = p * (p - 2 + (1 - lam) * (1 + 2.0 / n) + lam) - 3 * ck
    cap = 2 * (1 - 2 * ck)
    s2a = cap - (1 + eps) ** 2
    s2b = cap - (n / 2.0 - 2 + eps) ** 2
    s3 = 1 - p + 2 * ck
    return s1, s2a, s2b, s3


def _margin(n, k, c, p, eps, lam):
    s = slacks(n, k, c, p, eps, lam)
    return np.minimum(np.minimum(s[0], s[1]), np.minimum(s[2], s[3]))


@dataclass(frozen=True)
class FeasibilityParams:
    n: int
    theta: float
    p: float
    eps: float
    lam: float
    c: float = 1.0
    Lambda: float | None = None
    kappa: float = field(init=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 < self.theta <= math.pi / 2:
            raise ValueError("theta must lie in (0, pi/2]")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0.5 < self.p <= 1:
            raise ValueError("p must lie in (1/2, 1]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if self.Lambda is None:
            object.__setattr__(self, "Lambda", default_lambda_constant(self.n))
        elif not self.Lambda > 0:
            raise ValueError("Lambda must be positive")
        object.__setattr__(self, "kappa", kappa(self.theta))


@dataclass(frozen=True)
class FeasibilityRegion:
    feasible: bool
    witness: tuple[float, float, float] | None  # (p, eps, lambda)
    margin: float
    slacks: tuple[float, float, float, float] = ()

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "witness": list(self.witness) if self.witness else None,
            "margin": self.margin,
            "slacks": list(self.slacks),
        }


def feasibility_check(fp: FeasibilityParams, tol: float = 1e-12) -> FeasibilityRegion:
    s = tuple(float(x) for x in slacks(fp.n, fp.kappa, fp.c, fp.p, fp.eps, fp.lam))
    m = min(s)
    ok = m >= -tol
    return FeasibilityRegion(ok, (fp.p, fp.eps, fp.lam) if ok else None, m, s)


def best_witness(n: int, theta: float, c: float = 1.0) -> FeasibilityRegion:
    """Maximize the margin over ``(p, eps, lambda)``: coarse grid, then coordinatewise polish."""
    k = kappa(theta)
    P = np.linspace(P_RANGE[0], 0.99, GRID_POINTS)
    E = np.geomspace(*EPS_RANGE, GRID_POINTS)
    L = np.linspace(*LAM_RANGE, GRID_POINTS)
    M = _margin(n, k, c, P[:, None, None], E[None, :, None], L[None, None, :])
    # argmax returns the first maximizer in C order: a deterministic lexicographic tie-break
    i, j, l = np.unravel_index(int(np.argmax(M)), M.shape)
    x = [float(P[i]), float(E[j]), float(L[l])]
    best = float(M[i, j, l])
    bounds = (P_RANGE, EPS_RANGE, LAM_RANGE)
    for _ in range(4):
        for d in range(3):
            def obj(t, d=d):
                y = list(x)
                y[d] = t
                return -float(_margin(n, k, c, *y))

            r = minimize_scalar(obj, bounds=bounds[d], method="bounded", options={"xatol": 1e-10})
            if -r.fun > best:
                best = -float(r.fun)
                x[d] = float(r.x)
    fp = FeasibilityParams(n, theta, x[0], x[1], x[2], c)
    reg = feasibility_check(fp)
    return FeasibilityRegion(reg.feasible, (x[0], x[1], x[2]) if reg.feasible else None, reg.margin, reg.slacks)


@dataclass(frozen=True)
class ThresholdResult:
    n: int
    c: float
    theta1: float
    witness_curve: tuple[tuple[float, float, float, float, float], ...]  # (theta, p, eps, lambda, margin)

    def to_dict(self) -> dict:
        return {"n": self.n, "c": self.c, "theta1": self.theta1, "witness_curve": [list(w) for w in self.witness_curve]}


def theta_threshold(n: int, c: float = 1.0, resolution: float = 1e-4, curve_points: int = 5) -> ThresholdResult:
    """Width ``theta_1`` of the window ``(pi/2 - theta_1, pi/2]`` on which a feasible witness exists.

    The feasible set in ``kappa`` is an interval starting at 0 (only one
    inequality improves with ``kappa``, and ``p <= 1`` satisfies it for every
    ``kappa``), so bisection on the window edge certifies the whole window.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if n < 2:
        raise ValueError("n must be at least 2")

    def ok(t):
        return best_witness(n, math.pi / 2 - t, c).feasible

    if not ok(0.0):
        return ThresholdResult(n, c, 0.0, ())
    lo, hi = 0.0, math.pi / 2
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if mid < math.pi / 2 and ok(mid):
            lo = mid
        else:
            hi = mid
    curve = []
    for t in np.linspace(0.0, lo, curve_points):
        theta = math.pi / 2 - float(t)
        r = best_witness(n, theta, c)
        if r.feasible:
            curve.append((theta, *r.witness, r.margin))
    return ThresholdResult(n, c, lo, tuple(curve))


def margin_slice(n: int, c: float, thetas, ps) -> list[tuple[float, float, float]]:
    """Best margin over ``(eps, lambda)`` on a ``(theta, p)`` grid; rows ``(theta, p, margin)``."""
    E = np.geomspace(*EPS_RANGE, GRID_POINTS)
    L = np.linspace(*LAM_RANGE, GRID_POINTS)
    rows = []
    for th in thetas:
        k = kappa(float(th))
        for p in ps:
            m = _margin(n, k, c, float(p), E[:, None], L[None, :])
            rows.append((float(th), float(p), float(m.max())))
    return rows


def delta0_bound(n: int, Lambda: float) -> float:
    """``min(1/(4 Lambda), (n-1)/(4 Lambda n))``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    return min(1.0 / (4 * Lambda), (n - 1) / (4.0 * Lambda * n))
