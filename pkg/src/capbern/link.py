"""Links of capillary cones: stability form, first eigenvalue, Gauss-Bonnet, trace inequalities, Simons probe.

Meshes are triangulated surfaces with vertices on the unit sphere of
``R^(n+1)``; for the surfaces handled here ``n = 3``.  The boundary lies on
the wall ``{x_1 = 0}``.  Curvature quantities are input channels on the
vertices, never estimated from vertex positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay

from .errors import (
    BadLambda,
    BadMeshFile,
    HypothesisUnmet,
    MissingData,
    NonpositiveRadius,
    NonSurface,
    SolverFailure,
    ZeroFunction,
)

CHANNELS = ("abs_A", "A_eta", "dA2_deta", "grad_A2")


# --- mesh utilities -------------------------------------------------------------


def _edges(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and how many triangles use each."""
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def _corner_angles(P: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Interior angle at each corner, shape ``(F, 3)``."""
    out = np.empty(tris.shape)
    for k in range(3):
        a = P[tris[:, k]]
        b = P[tris[:, (k + 1) % 3]] - a
        c = P[tris[:, (k + 2) % 3]] - a
        cosv = np.sum(b * c, axis=1) / (np.linalg.norm(b, axis=1) * np.linalg.norm(c, axis=1))
        out[:, k] = np.arccos(np.clip(cosv, -1.0, 1.0))
    return out


def _areas(P: np.ndarray, tris: np.ndarray) -> np.ndarray:
    e1 = P[tris[:, 1]] - P[tris[:, 0]]
    e2 = P[tris[:, 2]] - P[tris[:, 0]]
    g11 = np.sum(e1 * e1, axis=1)
    g22 = np.sum(e2 * e2, axis=1)
    g12 = np.sum(e1 * e2, axis=1)
    return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0))


def _grad_norms(P: np.ndarray, tris: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``|grad f|`` of the P1 interpolant on each triangle (any ambient dimension)."""
    e1 = P[tris[:, 1]] - P[tris[:, 0]]
    e2 = P[tris[:, 2]] - P[tris[:, 0]]
    g11 = np.sum(e1 * e1, axis=1)
    g22 = np.sum(e2 * e2, axis=1)
    g12 = np.sum(e1 * e2, axis=1)
    det = g11 * g22 - g12 * g12
    d1 = f[tris[:, 1]] - f[tris[:, 0]]
    d2 = f[tris[:, 2]] - f[tris[:, 0]]
    q = (g22 * d1 * d1 - 2 * g12 * d1 * d2 + g11 * d2 * d2) / det
    return np.sqrt(np.maximum(q, 0.0))


def _stiffness(P: np.ndarray, tris: np.ndarray, nv: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = tris[:, (k + 1) % 3], tris[:, (k + 2) % 3], tris[:, k]
        a = P[i] - P[o]
        b = P[j] - P[o]
        dot = np.sum(a * b, axis=1)
        cross = np.sqrt(np.maximum(np.sum(a * a, axis=1) * np.sum(b * b, axis=1) - dot * dot, 1e-300))
        w = 0.5 * dot / cross
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv))
    return K.tocsr()


def _octa_half(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper half (first coordinate >= 0) of the subdivided octahedron projected to S^2.

    ``4 * 4**level`` triangles; boundary vertices have first coordinate exactly 0.
    """
    V = [np.array(v, dtype=float) for v in ((1, 0, 0), (0, 1, 0), (0, 0, 1), (0, -1, 0), (0, 0, -1))]
    T = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 1)]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        newT = []
        for a, b, c in T:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            newT += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        T = newT
    P = np.array(V)
    P[np.abs(P[:, 0]) < 1e-15, 0] = 0.0
    return P, np.array(T, dtype=np.int64)


def level_for_triangles(target: int) -> int:
    """Smallest subdivision level with at least ``target`` triangles."""
    k = 0
    while 4 * 4**k < target:
        k += 1
    return k


# --- link meshes ----------------------------------------------------------------


@dataclass(frozen=True)
class LinkMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    theta: float
    channels: dict = field(default_factory=dict)
    synthetic: bool = False  # skips the wall invariant (test surfaces only)

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        T = np.asarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", T)
        if V.ndim != 2 or T.ndim != 2 or T.shape[1] != 3:
            raise NonSurface("expected (V, d) vertices and (F, 3) triangles")
        if T.min() < 0 or T.max() >= len(V):
            raise NonSurface("triangle index out of range")
        if np.abs(np.linalg.norm(V, axis=1) - 1.0).max() > 1e-10:
            raise ValueError("link vertices must lie on the unit sphere")
        ch = {}
        for name, vals in dict(self.channels).items():
            if name not in CHANNELS:
                raise ValueError(f"unknown channel {name!r}")
            arr = np.asarray(vals, dtype=float).reshape(-1)
            if arr.shape != (len(V),):
                raise ValueError(f"channel {name!r} needs one value per vertex")
            ch[name] = arr
        object.__setattr__(self, "channels", ch)
        edges, counts = _edges(T)
        if counts.max() > 2:
            raise NonSurface("an edge is shared by more than two triangles")
        if not self.synthetic and np.any(counts == 1):
            bverts = np.unique(edges[counts == 1])
            if np.abs(V[bverts, 0]).max() > 1e-10:
                raise ValueError("boundary vertices must lie on the wall x_1 = 0")

    @property
    def n(self) -> int:
        """Dimension of the cone, so the link has dimension ``n - 1``."""
        return self.vertices.shape[1] - 1

    def channel(self, name: str) -> np.ndarray:
        if name in self.channels:
            return self.channels[name]
        if name in ("abs_A", "A_eta"):
            return np.zeros(len(self.vertices))
        raise MissingData(f"mesh carries no {name!r} channel")

    def with_channels(self, **kw) -> "LinkMesh":
        ch = dict(self.channels)
        ch.update(kw)
        return LinkMesh(self.vertices, self.triangles, self.theta, ch, self.synthetic)

    def transformed(self, R: np.ndarray) -> "LinkMesh":
        return LinkMesh(self.vertices @ np.asarray(R).T, self.triangles, self.theta, self.channels, self.synthetic)

    # geometry -------------------------------------------------------------------

    def edges(self):
        return _edges(self.triangles)

    def boundary_edges(self) -> np.ndarray:
        e, c = self.edges()
        return e[c == 1]

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges())

    def euler_characteristic(self) -> int:
        e, _ = self.edges()
        used = np.unique(self.triangles)
        return int(len(used) - len(e) + len(self.triangles))

    def triangle_areas(self) -> np.ndarray:
        return _areas(self.vertices, self.triangles)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def lumped_mass(self) -> np.ndarray:
        a = self.triangle_areas() / 3.0
        return np.bincount(self.triangles.ravel(), weights=np.repeat(a, 3), minlength=len(self.vertices))

    def boundary_mass(self) -> np.ndarray:
        """Half the length of the adjacent boundary edges at each vertex."""
        be = self.boundary_edges()
        ln = np.linalg.norm(self.vertices[be[:, 0]] - self.vertices[be[:, 1]], axis=1)
        return np.bincount(be.ravel(), weights=np.repeat(0.5 * ln, 2), minlength=len(self.vertices))

    def conormals(self) -> np.ndarray:
        """Outward unit conormal on every boundary edge, tangent to the triangle and the sphere."""
        be = self.boundary_edges()
        lookup = {}
        for t in self.triangles:
            for k in range(3):
                a, b = t[k], t[(k + 1) % 3]
                lookup[(min(a, b), max(a, b))] = t[(k + 2) % 3]
        P = self.vertices
        out = np.empty((len(be), P.shape[1]))
        for r, (i, j) in enumerate(be):
            o = lookup[(i, j)]
            e = P[j] - P[i]
            e /= np.linalg.norm(e)
            w = P[o] - P[i]
            inward = w - (w @ e) * e
            m = 0.5 * (P[i] + P[j])
            m /= np.linalg.norm(m)
            inward -= (inward @ m) * m
            out[r] = -inward / np.linalg.norm(inward)
        return out

    # io ---------------------------------------------------------------------

    def to_text(self) -> str:
        names = [c for c in CHANNELS if c in self.channels]
        lines = ["LOFF", f"theta {self.theta!r}", f"synthetic {int(self.synthetic)}",
                 "channels " + " ".join(names), f"{len(self.vertices)} {len(self.triangles)}"]
        for i, v in enumerate(self.vertices):
            vals = [repr(float(x)) for x in v] + [repr(float(self.channels[c][i])) for c in names]
            lines.append(" ".join(vals))
        for t in self.triangles:
            lines.append("3 " + " ".join(str(int(x)) for x in t))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LinkMesh":
        try:
            rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
            if rows[0] != ["LOFF"]:
                raise BadMeshFile("missing LOFF header")
            theta = float(rows[1][1])
            synthetic = bool(int(rows[2][1]))
            names = rows[3][1:]
            nv, nf = int(rows[4][0]), int(rows[4][1])
            vr = np.array([[float(x) for x in r] for r in rows[5 : 5 + nv]])
            d = vr.shape[1] - len(names)
            tr = np.array([[int(x) for x in r[1:4]] for r in rows[5 + nv : 5 + nv + nf]], dtype=np.int64)
            if len(tr) != nf:
                raise BadMeshFile("truncated triangle list")
        except BadMeshFile:
            raise
        except (IndexError, ValueError) as exc:
            raise BadMeshFile(f"malformed mesh file: {exc}") from exc
        ch = {name: vr[:, d + k] for k, name in enumerate(names)}
        return cls(vr[:, :d], tr, theta, ch, synthetic)


def flat_link(theta: float, level: int = 5) -> LinkMesh:
    """Half great 2-sphere spanned by ``t = (sin theta, 0, 0, cos theta)``, ``e_2``, ``e_3``; ``t``-coordinate >= 0.

    This is the link of the flat cone meeting the wall ``{x_1 = 0}`` at angle theta.
    """
    Q, T = _octa_half(level)
    t = np.array([math.sin(theta), 0.0, 0.0, math.cos(theta)])
    P = Q[:, :1] * t + Q[:, 1:2] * np.array([0, 1.0, 0, 0]) + Q[:, 2:3] * np.array([0, 0, 1.0, 0])
    P[:, 0] = np.where(Q[:, 0] == 0.0, 0.0, P[:, 0])
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    return LinkMesh(P, T, float(theta))


def small_sphere_hemisphere(c: float, theta: float, level: int = 5) -> LinkMesh:
    """``{x_1 >= 0}`` half of the small sphere ``S^3 cap {x_4 = c}`` (radius ``sqrt(1 - c^2)``, geodesic boundary)."""
    Q, T = _octa_half(level)
    rho = math.sqrt(1.0 - c * c)
    P = np.column_stack([rho * Q, np.full(len(Q), c)])
    return LinkMesh(P, T, float(theta))


def spherical_cap(alpha: float, theta: float, level: int = 5) -> LinkMesh:
    """Synthetic cap ``{x . e_1 >= cos(alpha)}`` of the great 2-sphere in ``span(e_1, e_2, e_3)``.

    For ``alpha < pi/2`` it is strictly smaller than a hemisphere and its
    boundary is a small circle; it does not touch the wall.
    """
    Q, T = _octa_half(level)
    phi = np.arccos(np.clip(Q[:, 0], -1, 1)) * (alpha / (math.pi / 2))
    rad = np.linalg.norm(Q[:, 1:], axis=1)
    safe = np.where(rad > 0, rad, 1.0)
    dirs = np.where(rad[:, None] > 0, Q[:, 1:] / safe[:, None], 0.0)
    P = np.column_stack([np.cos(phi), np.sin(phi)[:, None] * dirs, np.zeros(len(Q))])
    return LinkMesh(P, T, float(theta), synthetic=True)


def rotation_fixing_wall(angles: Sequence[float]) -> np.ndarray:
    """Rotation of ``R^4`` acting on ``(x_2, x_3, x_4)`` only, from three Euler-type angles."""
    a, b, c = angles

    def rot(i, j, t):
        R = np.eye(4)
        R[i, i] = R[j, j] = math.cos(t)
        R[i, j] = -math.sin(t)
        R[j, i] = math.sin(t)
        return R

    return rot(1, 2, a) @ rot(2, 3, b) @ rot(1, 3, c)


@dataclass(frozen=True)
class AnalyticFlatLink:
    """Totally geodesic half-sphere link of a flat capillary cone in ``R^(n+1)``: ``|A| = 0``, ``A(eta, eta) = 0``."""

    n: int
    theta: float

    def first_eigenvalue(self) -> float:
        # constants are admissible and every curvature term vanishes
        return 0.0


# --- stability form and spectrum -----------------------------------------------


@dataclass(frozen=True)
class StabilitySystem:
    K: sp.csr_matrix  # Dirichlet form
    M: np.ndarray  # lumped mass (diagonal)
    D: np.ndarray  # diagonal of potential + boundary terms: -|A|^2 m_i - cot(theta) A(eta,eta) b_i

    def quadratic(self, f: np.ndarray) -> float:
        return float(f @ (self.K @ f) + np.sum(self.D * f * f))

    def rayleigh(self, f: np.ndarray) -> float:
        den = float(np.sum(self.M * f * f))
        if den <= 0 or not np.any(f):
            raise ZeroFunction("Rayleigh quotient of the zero function")
        return self.quadratic(f) / den


def stability_system(link: LinkMesh) -> StabilitySystem:
    P = link.vertices
    nv = len(P)
    K = _stiffness(P, link.triangles, nv)
    M = link.lumped_mass()
    A2 = link.channel("abs_A") ** 2
    cot = math.cos(link.theta) / math.sin(link.theta)
    D = -A2 * M - cot * link.channel("A_eta") * link.boundary_mass()
    return StabilitySystem(K, M, D)


def stability_rayleigh(link: LinkMesh, f: np.ndarray) -> float:
    """P1 value of ``(int |grad f|^2 - |A|^2 f^2 - cot(theta) int_bdry A(eta,eta) f^2) / int f^2``."""
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        raise ZeroFunction("f vanishes identically")
    return stability_system(link).rayleigh(f)


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: np.ndarray = field(repr=False)


def first_eigenpair(link: LinkMesh) -> Eigenpair:
    """Lowest eigenpair of the stability operator with the natural boundary condition.

    Shift-invert Lanczos on ``(K + D) f = lambda M f`` with a shift below the
    Gershgorin-type lower bound ``min_i D_ii / M_ii``.
    """
    sysm = stability_system(link)
    if np.any(sysm.M <= 0):
        raise SolverFailure("vertex with zero mass")
    A = (sysm.K + sp.diags(sysm.D)).tocsc()
    Mm = sp.diags(sysm.M).tocsc()
    sigma = float(np.min(sysm.D / sysm.M)) - 1.0
    v0 = np.ones(len(sysm.M))
    try:
        vals, vecs = spla.eigsh(A, k=1, M=Mm, sigma=sigma, which="LM", v0=v0, tol=1e-12)
    except (spla.ArpackNoConvergence, spla.ArpackError, RuntimeError) as exc:
        raise SolverFailure(f"eigen-solver failed: {exc}") from exc
    vec = vecs[:, 0]
    # fix the sign for reproducible output
    k = int(np.argmax(np.abs(vec)))
    vec = vec * np.sign(vec[k])
    return Eigenpair(float(vals[0]), vec)


def first_eigenvalue(link) -> float:
    if isinstance(link, AnalyticFlatLink):
        return link.first_eigenvalue()
    return first_eigenpair(link).value


def spectral_bound(n: int) -> float:
    return -(((n - 2) / 2.0) ** 2)


def spectral_bound_check(link, tol: float = 1e-8) -> bool:
    """``lambda_1 >= -((n-2)/2)^2``."""
    return first_eigenvalue(link) >= spectral_bound(link.n) - tol


# --- Gauss-Bonnet ---------------------------------------------------------------


@dataclass(frozen=True)
class GaussBonnetRecord:
    int_K: float
    int_kg: float
    two_pi_chi: float
    area: float
    chi: int
    identity_error: float
    identity_holds: bool
    inequality_holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def gauss_bonnet_check(link: LinkMesh, rel_tol: float = 0.01) -> GaussBonnetRecord:
    """Angle defects, boundary turning angles and ``chi = V - E + F``; checks ``3/4 area <= 2 pi chi``."""
    if link.vertices.shape[1] != 4:
        raise NonSurface("Gauss-Bonnet check needs a 2-dimensional link in S^3")
    ang = _corner_angles(link.vertices, link.triangles)
    nv = len(link.vertices)
    sums = np.bincount(link.triangles.ravel(), weights=ang.ravel(), minlength=nv)
    used = np.zeros(nv, dtype=bool)
    used[link.triangles.ravel()] = True
    bmask = np.zeros(nv, dtype=bool)
    bmask[link.boundary_vertices()] = True
    int_K = float(np.sum(2 * math.pi - sums[used & ~bmask]))
    int_kg = float(np.sum(math.pi - sums[bmask]))
    chi = link.euler_characteristic()
    target = 2 * math.pi * chi
    area = link.area()
    err = abs(int_K + int_kg - target)
    rel = err / abs(target) if target else err
    return GaussBonnetRecord(int_K, int_kg, target, area, chi, rel, rel <= rel_tol, 0.75 * area <= target)


# --- trace inequalities ---------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    lhs: float
    rhs: float
    holds: bool
    boundary_integral: float
    gradient_integral: float
    function_integral: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _boundary_integral(P, be, f) -> float:
    ln = np.linalg.norm(P[be[:, 0]] - P[be[:, 1]], axis=1)
    return float(np.sum(0.5 * ln * (f[be[:, 0]] + f[be[:, 1]])))


def _surface_integral(P, tris, f) -> float:
    return float(np.sum(_areas(P, tris) * f[tris].mean(axis=1)))


def conormal_deviation(link: LinkMesh) -> float:
    """Max distance of the boundary conormal from ``-e_(n+1)``."""
    eta = link.conormals()
    target = np.zeros(eta.shape[1])
    target[-1] = -1.0
    return float(np.linalg.norm(eta - target, axis=1).max())


def trace_check_link(link: LinkMesh, f: np.ndarray, max_deviation: float = 0.2) -> TraceRecord:
    """``|int_bdry f| <= 2 int (|grad f| + (n-1) f)`` for ``f >= 0`` on a near-flat link."""
    f = np.asarray(f, dtype=float)
    if f.min() < 0:
        raise ValueError("f must be nonnegative")
    dev = conormal_deviation(link)
    if dev > max_deviation:
        raise HypothesisUnmet(f"conormal deviates by {dev:.3f} > {max_deviation} from -e_(n+1)")
    P, T = link.vertices, link.triangles
    b = _boundary_integral(P, link.boundary_edges(), f)
    g = float(np.sum(link.triangle_areas() * _grad_norms(P, T, f)))
    s = _surface_integral(P, T, f)
    lhs = abs(b)
    rhs = 2.0 * (g + (link.n - 1) * s)
    return TraceRecord(lhs, rhs, lhs <= rhs, b, g, s)


@dataclass(frozen=True)
class SurfaceMesh:
    """Triangulated surface in the half-space ``{x_1 >= 0}`` of ``R^3`` with an optional mean-curvature channel."""

    vertices: np.ndarray
    triangles: np.ndarray
    H: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64))
        if self.H is not None:
            object.__setattr__(self, "H", np.asarray(self.H, dtype=float).reshape(-1))

    def wall_edges(self, tol: float = 1e-10) -> np.ndarray:
        e, c = _edges(self.triangles)
        be = e[c == 1]
        on = np.abs(self.vertices[be, 0]) <= tol
        return be[on.all(axis=1)]

    def contact_angles(self) -> np.ndarray:
        """``arccos |nu . e_1|`` on the triangles touching the wall."""
        we = {tuple(x) for x in self.wall_edges()}
        P, T = self.vertices, self.triangles
        out = []
        for t in T:
            es = {(min(t[k], t[(k + 1) % 3]), max(t[k], t[(k + 1) % 3])) for k in range(3)}
            if es & we:
                nrm = np.cross(P[t[1]] - P[t[0]], P[t[2]] - P[t[0]])
                nrm /= np.linalg.norm(nrm)
                out.append(math.acos(min(1.0, abs(nrm[0]))))
        return np.array(out)


def half_disk(theta: float, rings: int = 40) -> SurfaceMesh:
    """Unit half-disk in the plane through the wall line ``{x_1 = x_3 = 0}`` tilted to contact angle theta.

    Intrinsic coordinates ``(s, y)`` with ``s >= 0`` map to ``s (sin theta, 0, cos theta) + y e_2``.
    """
    pts = [(0.0, 0.0)]
    for k in range(1, rings + 1):
        r = k / rings
        m = max(2, int(round(math.pi * r * rings)))
        phi = np.linspace(-math.pi / 2, math.pi / 2, m + 1)
        pts += [(r * math.cos(p), r * math.sin(p)) for p in phi]
    Q = np.array(pts)
    Q[np.abs(Q[:, 0]) < 1e-12, 0] = 0.0
    T = Delaunay(Q).simplices.astype(np.int64)
    d = np.array([math.sin(theta), 0.0, math.cos(theta)])
    P = Q[:, :1] * d + Q[:, 1:2] * np.array([0.0, 1.0, 0.0])
    P[Q[:, 0] == 0.0, 0] = 0.0
    return SurfaceMesh(P, T)


def trace_check_surface(mesh: SurfaceMesh, theta: float, u: np.ndarray, angle_tol: float = 0.05) -> TraceRecord:
    """``int_{wall part of bdry M} u <= (1/sin theta) int_M (|grad u| + |H u|)``."""
    u = np.asarray(u, dtype=float)
    ang = mesh.contact_angles()
    if len(ang) == 0:
        raise HypothesisUnmet("surface does not meet the wall")
    if np.abs(ang - theta).max() > angle_tol:
        raise HypothesisUnmet(f"contact angle {ang.mean():.4f} differs from theta = {theta:.4f}")
    P, T = mesh.vertices, mesh.triangles
    b = _boundary_integral(P, mesh.wall_edges(), u)
    g = float(np.sum(_areas(P, T) * _grad_norms(P, T, u)))
    H = mesh.H if mesh.H is not None else np.zeros(len(P))
    s = _surface_integral(P, T, np.abs(H * u))
    rhs = (g + s) / math.sin(theta)
    return TraceRecord(b, rhs, b <= rhs, b, g, s)


# --- Simons inequality ----------------------------------------------------------


@dataclass(frozen=True)
class ConeFamily:
    """Minimal cones with ``|A|^2 = c / |x|^2``: flat (``c = 0``) or Clifford ``S^p x S^p`` (``c = 2p``, ``n = 2p+1``)."""

    tag: str
    p: int = 0

    def __post_init__(self):
        if self.tag not in ("flat", "clifford"):
            raise ValueError(f"unknown cone family {self.tag!r}")
        if self.tag == "clifford" and self.p < 1:
            raise ValueError("clifford cones need p >= 1")

    @property
    def n(self) -> int:
        return 2 * self.p + 1 if self.tag == "clifford" else 3

    @property
    def c(self) -> float:
        return 2.0 * self.p if self.tag == "clifford" else 0.0

    def abs_A2(self, r: float) -> float:
        return self.c / r**2


@dataclass(frozen=True)
class SimonsRecord:
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def simons_probe(cone: ConeFamily, lam: float, r: float) -> SimonsRecord:
    """``Delta(|A|^2/2) + |A|^4`` versus ``2 lam |A|^2 / r^2 + [(1-lam)(1+2/n) + lam] |grad |A||^2``.

    Radial calculus on the n-dimensional cone with ``f(r) = c r^-2 / 2``:
    ``Delta f = f'' + (n-1) f' / r``; ``|A| = sqrt(c)/r`` so ``|grad |A||^2 = c r^-4``.
    """
    if not 0 < lam < 1:
        raise BadLambda(f"lambda must lie in (0, 1), got {lam}")
    if not r > 0:
        raise NonpositiveRadius(f"radius must be positive, got {r}")
    n, c = cone.n, cone.c
    f1 = -c / r**3
    f2 = 3.0 * c / r**4
    lap = f2 + (n - 1) * f1 / r
    A2 = cone.abs_A2(r)
    lhs = lap + A2 * A2
    grad2 = c / r**4
    rhs = 2.0 * lam * A2 / r**2 + ((1 - lam) * (1 + 2.0 / n) + lam) * grad2
    return SimonsRecord(float(lhs), float(rhs), bool(lhs >= rhs - 1e-12 * max(1.0, abs(lhs))))


@dataclass(frozen=True)
class SimonsResidual:
    lhs: float
    rhs: float
    residual: float
    kato_surrogate: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def integrated_simons_residual(link: LinkMesh) -> SimonsResidual:
    """``|int_bdry (1/2) d|A|^2/d eta - int (|grad A|^2 + (n-1-|A|^2)|A|^2)|``.

    Uses the ``grad_A2`` channel when present, otherwise the Kato lower bound
    ``|grad |A||^2`` from the P1 gradient of ``|A|``.
    """
    dn = link.channel("dA2_deta")
    P, T = link.vertices, link.triangles
    A = link.channel("abs_A")
    A2 = A * A
    lhs = 0.5 * _boundary_integral(P, link.boundary_edges(), dn)
    kato = "grad_A2" not in link.channels
    if kato:
        grad_term = float(np.sum(link.triangle_areas() * _grad_norms(P, T, A) ** 2))
    else:
        grad_term = _surface_integral(P, T, link.channel("grad_A2"))
    pot = _surface_integral(P, T, (link.n - 1 - A2) * A2)
    rhs = grad_term + pot
    return SimonsResidual(lhs, rhs, abs(lhs - rhs), kato)
