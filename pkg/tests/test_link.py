import math
import time

import numpy as np
import pytest

from capbern.errors import (
    BadLambda,
    BadMeshFile,
    HypothesisUnmet,
    MissingData,
    NonpositiveRadius,
    NonSurface,
    ZeroFunction,
)
from capbern.link import (
    AnalyticFlatLink,
    ConeFamily,
    LinkMesh,
    first_eigenpair,
    first_eigenvalue,
    flat_link,
    gauss_bonnet_check,
    half_disk,
    integrated_simons_residual,
    rotation_fixing_wall,
    simons_probe,
    small_sphere_hemisphere,
    spectral_bound_check,
    spherical_cap,
    stability_rayleigh,
    trace_check_link,
    trace_check_surface,
)


@pytest.fixture(scope="module")
def flat5():
    return flat_link(0.3, 5)


def test_mesh_sizes_and_invariants(flat5):
    assert len(flat5.triangles) == 4 * 4**5
    assert np.abs(np.linalg.norm(flat5.vertices, axis=1) - 1).max() < 1e-12
    assert np.abs(flat5.vertices[flat5.boundary_vertices(), 0]).max() == 0
    assert flat5.euler_characteristic() == 1
    assert flat5.area() == pytest.approx(2 * math.pi, rel=1e-3)


def test_mesh_validation():
    with pytest.raises(ValueError):
        LinkMesh(np.array([[2.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0]]), np.array([[0, 1, 2]]), 0.3)
    v = np.eye(4)[[1, 2, 3, 0]]
    with pytest.raises(ValueError):
        # boundary vertex off the wall
        LinkMesh(v[[0, 1, 3]], np.array([[0, 1, 2]]), 0.3)
    fan = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    pts = np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [0, -1, 0, 0], [0, 0, -1, 0.0]])
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    with pytest.raises(NonSurface):
        LinkMesh(pts, fan, 0.3)


def test_rayleigh_examples(flat5):
    assert stability_rayleigh(flat5, np.ones(len(flat5.vertices))) == pytest.approx(0.0, abs=1e-12)
    x4 = flat5.vertices[:, 3]
    q = stability_rayleigh(flat5, x4)
    # degree-one spherical harmonic oracle
    assert q == pytest.approx(2.0, abs=0.05)
    assert stability_rayleigh(flat5, 7.5 * x4) == pytest.approx(q, rel=1e-13)
    with pytest.raises(ZeroFunction):
        stability_rayleigh(flat5, np.zeros(len(flat5.vertices)))


def test_first_eigenvalue_flat(flat_link_16k):
    t0 = time.perf_counter()
    lam = first_eigenvalue(flat_link_16k)
    assert time.perf_counter() - t0 < 30
    assert lam == pytest.approx(0.0, abs=1e-2)
    assert lam >= -0.25


@pytest.mark.parametrize("theta", [0.1, 0.7, 1.4])
def test_first_eigenvalue_any_theta(theta):
    assert first_eigenvalue(flat_link(theta, 4)) == pytest.approx(0.0, abs=1e-2)


def test_eigenvalue_refinement_to_zero():
    # 1k / 4k / 16k triangles; lambda_1 is exactly zero at every level for the flat link
    vals = [abs(first_eigenvalue(flat_link(0.3, k))) for k in (4, 5, 6)]
    assert max(vals) < 1e-8


def test_rotation_invariance(flat5):
    lam = first_eigenvalue(flat5)
    for angles in ((0.3, 0.7, 1.1), (2.0, -0.4, 0.9)):
        R = rotation_fixing_wall(angles)
        assert abs(first_eigenvalue(flat5.transformed(R)) - lam) <= 1e-6


def test_rotation_invariance_with_potential():
    m = flat_link(0.3, 4)
    A = 0.5 + 0.3 * m.vertices[:, 3] ** 2
    m = m.with_channels(abs_A=A, A_eta=0.2 * np.ones(len(A)))
    lam = first_eigenvalue(m)
    R = rotation_fixing_wall((0.4, 1.3, -0.8))
    assert abs(first_eigenvalue(m.transformed(R)) - lam) <= 1e-6


def test_eigenvector_rayleigh_consistency():
    m = flat_link(0.3, 4)
    A = 1.0 + m.vertices[:, 2] ** 2
    m = m.with_channels(abs_A=A, A_eta=0.5 * np.ones(len(A)))
    ep = first_eigenpair(m)
    assert stability_rayleigh(m, ep.vector) == pytest.approx(ep.value, abs=1e-8)


def test_spectral_bound_examples(flat5):
    assert spectral_bound_check(flat5)
    assert spectral_bound_check(AnalyticFlatLink(4, 0.3))
    assert AnalyticFlatLink(4, 0.3).first_eigenvalue() == 0
    inflated = flat5.with_channels(abs_A=np.full(len(flat5.vertices), math.sqrt(10)))
    # f = 1 gives the upper bound -10
    assert stability_rayleigh(inflated, np.ones(len(flat5.vertices))) == pytest.approx(-10, abs=1e-9)
    assert first_eigenvalue(inflated) <= -10 + 1e-9
    assert not spectral_bound_check(inflated)


def test_gauss_bonnet_flat(flat5):
    r = gauss_bonnet_check(flat5)
    assert r.chi == 1 and r.identity_holds and r.inequality_holds
    assert r.area == pytest.approx(2 * math.pi, rel=1e-3)
    assert abs(r.int_K + r.int_kg - 2 * math.pi) <= 0.01 * 2 * math.pi


def test_gauss_bonnet_refinement():
    # curvature and boundary terms separately approach 2 pi and 0
    errs = [abs(gauss_bonnet_check(flat_link(0.3, k)).int_kg) for k in (3, 4, 5)]
    assert errs[0] > errs[1] > errs[2]
    ids = [gauss_bonnet_check(flat_link(0.3, k)).identity_error for k in (3, 4, 5)]
    assert max(ids) < 1e-10


def test_gauss_bonnet_cap():
    alpha = 1.0
    r = gauss_bonnet_check(spherical_cap(alpha, 0.3, 5))
    assert r.identity_holds and r.chi == 1
    # closed forms: area 2 pi (1 - cos a), boundary curvature 2 pi cos a
    assert r.area == pytest.approx(2 * math.pi * (1 - math.cos(alpha)), rel=1e-2)
    assert r.int_K == pytest.approx(r.area, rel=5e-2)


def test_gauss_bonnet_small_sphere_geodesic_boundary():
    r = gauss_bonnet_check(small_sphere_hemisphere(0.5, 0.3, 4))
    assert r.identity_holds and r.chi == 1


def test_trace_link_examples():
    m = flat_link(0.1, 6)
    one = trace_check_link(m, np.ones(len(m.vertices)))
    assert one.holds
    assert one.lhs == pytest.approx(2 * math.pi, rel=1e-3)
    assert one.rhs == pytest.approx(8 * math.pi, rel=1e-3)
    f = 1 + m.vertices[:, 3] ** 2
    r = trace_check_link(m, f)
    c2 = math.cos(0.1) ** 2
    # closed-form sphere integrals
    assert r.holds
    assert r.boundary_integral == pytest.approx(2 * math.pi, rel=1e-2)
    assert r.function_integral == pytest.approx(2 * math.pi + 2 * math.pi / 3 * c2, rel=1e-2)
    assert r.gradient_integral == pytest.approx(4 * math.pi / 3 * c2, rel=1e-2)
    z = trace_check_link(m, np.zeros(len(m.vertices)))
    assert z.holds and z.lhs == 0 and z.rhs == 0


def test_trace_link_hypothesis_unmet():
    m = flat_link(0.6, 3)
    with pytest.raises(HypothesisUnmet):
        trace_check_link(m, np.ones(len(m.vertices)))


@pytest.mark.parametrize("theta", [math.pi / 2, 0.2])
def test_trace_surface_half_disk(theta):
    d = half_disk(theta)
    r_ = np.linalg.norm(d.vertices, axis=1)
    u = np.maximum(1 - r_, 0)
    rec = trace_check_surface(d, theta, u)
    # polar oracle: wall integral 1, gradient integral pi/2
    assert rec.boundary_integral == pytest.approx(1.0, rel=1e-2)
    assert rec.gradient_integral == pytest.approx(math.pi / 2, rel=1e-2)
    assert rec.rhs == pytest.approx(math.pi / 2 / math.sin(theta), rel=1e-2)
    assert rec.holds
    z = trace_check_surface(d, theta, np.zeros(len(u)))
    assert z.holds and z.lhs == 0


def test_trace_surface_wrong_angle():
    d = half_disk(0.5)
    with pytest.raises(HypothesisUnmet):
        trace_check_surface(d, 0.2, np.ones(len(d.vertices)))


def test_simons_examples():
    r = simons_probe(ConeFamily("clifford", 3), 0.5, 1.0)
    assert r.lhs == pytest.approx(18, abs=1e-9) and r.rhs == pytest.approx(90 / 7, abs=1e-9) and r.holds
    r = simons_probe(ConeFamily("clifford", 1), 0.5, 2.0)
    assert r.lhs == pytest.approx(0.375, abs=1e-12) and r.rhs == pytest.approx(14 / 3 / 16, abs=1e-12)
    assert r.holds
    r = simons_probe(ConeFamily("flat"), 0.3, 1.0)
    assert r.lhs == 0 and r.rhs == 0 and r.holds


def test_simons_errors():
    with pytest.raises(BadLambda):
        simons_probe(ConeFamily("flat"), 1.0, 1.0)
    with pytest.raises(BadLambda):
        simons_probe(ConeFamily("flat"), 0.0, 1.0)
    with pytest.raises(NonpositiveRadius):
        simons_probe(ConeFamily("clifford", 1), 0.5, 0.0)
    with pytest.raises(ValueError):
        ConeFamily("clifford", 0)


def test_simons_margin_shrinks_toward_one():
    cone = ConeFamily("clifford", 3)
    margins = [(lambda r: r.lhs - r.rhs)(simons_probe(cone, lam, 1.0)) for lam in np.linspace(0.1, 0.9, 9)]
    assert all(b < a for a, b in zip(margins, margins[1:]))
    assert margins[-1] > 0


def test_cone_family_closed_form():
    c = ConeFamily("clifford", 2)
    assert c.n == 5
    for r in (0.5, 1.0, 3.0):
        assert c.abs_A2(r) == pytest.approx(4 / r**2)


def test_integrated_simons_flat_and_missing(flat5):
    with pytest.raises(MissingData):
        integrated_simons_residual(flat5)
    z = np.zeros(len(flat5.vertices))
    r = integrated_simons_residual(flat5.with_channels(abs_A=z, dA2_deta=z))
    assert r.residual == 0


def test_integrated_simons_linear_in_noise(flat5):
    rng = np.random.default_rng(0)
    xi = rng.random(len(flat5.vertices))
    z = np.zeros(len(xi))
    res = []
    for d in (1e-6, 2e-6, 4e-6):
        m = flat5.with_channels(abs_A=np.sqrt(d * xi), dA2_deta=z)
        res.append(integrated_simons_residual(m).residual)
    assert res[1] / res[0] == pytest.approx(2, rel=1e-3)
    assert res[2] / res[1] == pytest.approx(2, rel=1e-3)


def test_integrated_simons_clifford_patch(flat5):
    n = len(flat5.vertices)
    z = np.zeros(n)
    # |A|^2 = 2p constant; closed form |(n - 1 - 2p) 2p| * area with n = 3
    for p, expected in ((1, 0.0), (2, 16 * math.pi)):
        m = flat5.with_channels(abs_A=np.full(n, math.sqrt(2 * p)), dA2_deta=z, grad_A2=z)
        assert integrated_simons_residual(m).residual == pytest.approx(expected, rel=1e-3, abs=1e-12)


def test_mesh_text_roundtrip(flat5, tmp_path):
    n = len(flat5.vertices)
    m = flat5.with_channels(abs_A=np.linspace(0, 1, n), A_eta=np.linspace(1, 0, n))
    text = m.to_text()
    back = LinkMesh.from_text(text)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.channels["abs_A"], m.channels["abs_A"])
    assert back.to_text() == text
    with pytest.raises(BadMeshFile):
        LinkMesh.from_text("OFF\n1 2\n")
    with pytest.raises(BadMeshFile):
        LinkMesh.from_text(text[: len(text) // 2])
