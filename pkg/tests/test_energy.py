import json
import math
import time

import numpy as np
import pytest

from capbern.energy import (
    bernoulli_energy,
    capillary_energy,
    expansion_residual,
    smoothed_bernoulli_energy,
    smoothed_capillary_energy,
    weiss_energy,
)
from capbern.errors import BallOutOfDomain, NegativeField
from capbern.grid import GridSpec, ScalarField

from conftest import planar_field


@pytest.fixture(scope="module")
def g():
    return GridSpec.box(2, 1.0, 1 / 128)


def test_capillary_zero_field(g):
    assert capillary_energy(ScalarField.zeros(g), 0.3).total == 0


@pytest.mark.parametrize("theta", [math.pi / 4, 0.2])
def test_capillary_planar_closed_form(g, theta):
    # closed form m (sec - cos) with m = 2
    u = planar_field(g, math.tan(theta))
    e = capillary_energy(u, theta)
    expected = 2 * (1 / math.cos(theta) - math.cos(theta))
    assert e.total == pytest.approx(expected, abs=g.h)
    assert e.total == pytest.approx(e.surface + e.wetting, abs=1e-14)


def test_capillary_theta_02_value(g):
    # 2 sin(0.2) tan(0.2)
    assert capillary_energy(planar_field(g, math.tan(0.2)), 0.2).total == pytest.approx(0.0805445, abs=1e-6)


def test_capillary_rejects_negative(g):
    with pytest.raises(NegativeField):
        capillary_energy(ScalarField.from_function(g, lambda x, y: x), 0.3)
    with pytest.raises(NegativeField):
        bernoulli_energy(ScalarField.from_function(g, lambda x, y: x))


def test_bernoulli_examples(g):
    assert bernoulli_energy(ScalarField.zeros(g)).total == 0
    assert bernoulli_energy(planar_field(g)).total == pytest.approx(4.0, abs=g.h)
    assert bernoulli_energy(planar_field(g, 2.0)).total == pytest.approx(10.0, abs=g.h)


def test_breakdown_json_keys(g):
    e = capillary_energy(planar_field(g, 0.3), 0.3)
    assert set(json.loads(e.to_json())) == {"surface", "wetting", "total", "theta"}
    e = smoothed_bernoulli_energy(planar_field(g), 0.1)
    assert set(json.loads(e.to_json())) == {"surface", "wetting", "total", "eps"}
    assert set(bernoulli_energy(planar_field(g)).to_dict()) == {"surface", "wetting", "total"}


def test_expansion_residual_examples(g):
    v = planar_field(g)
    assert expansion_residual(v, 0.1) == pytest.approx(2 * (1 - math.cos(0.1)), abs=1e-4)
    assert expansion_residual(ScalarField.zeros(g), 0.1) == 0
    thetas = [0.4, 0.2, 0.1, 0.05]
    res = [expansion_residual(v, t) for t in thetas]
    slopes = np.diff(np.log(res)) / np.diff(np.log(thetas))
    assert np.all(np.abs(slopes - 2) <= 0.2)


def test_expansion_ratio_is_cos_for_planes(g):
    v = planar_field(g)
    j = bernoulli_energy(v).total
    for t in (0.4, 0.2, 0.1, 0.05):
        a = capillary_energy(v * math.tan(t), t).total
        assert a / (0.5 * math.tan(t) ** 2 * j) == pytest.approx(math.cos(t), abs=1e-6)


def test_smoothed_bernoulli_converges_monotonically(g):
    v = planar_field(g)
    tot = [smoothed_bernoulli_energy(v, e).total for e in (0.1, 0.05, 0.025)]
    assert tot[0] < tot[1] < tot[2] < 4.0 + 1e-9
    assert abs(tot[2] - 4) < abs(tot[1] - 4) < abs(tot[0] - 4)


def test_smoothed_zero_and_constant(g):
    for eps in (0.5, 0.1):
        assert smoothed_bernoulli_energy(ScalarField.zeros(g), eps).total == 0
        assert smoothed_capillary_energy(ScalarField.zeros(g), 0.3, eps).total == 0
        one = ScalarField.from_function(g, lambda x, y: 1 + 0 * x)
        assert smoothed_bernoulli_energy(one, eps).wetting == pytest.approx(4.0, abs=1e-12)
    with pytest.raises(ValueError):
        smoothed_bernoulli_energy(one, 0.0)


def test_smoothed_capillary_approaches_exact(g):
    u = planar_field(g, math.tan(0.3))
    exact = capillary_energy(u, 0.3).total
    errs = [abs(smoothed_capillary_energy(u, 0.3, e).total - exact) for e in (0.1, 0.05, 0.025)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("r", [0.2, 0.4, 0.6])
def test_weiss_planar_value(g, r):
    # closed form pi - pi/2
    assert weiss_energy(planar_field(g), (0, 0), r) == pytest.approx(math.pi / 2, rel=1e-2)


def test_weiss_zero_and_shifted_center(g):
    assert weiss_energy(ScalarField.zeros(g), (0, 0), 0.3) == 0
    w = [weiss_energy(planar_field(g), (0.2, 0.0), r) for r in (0.2, 0.4, 0.6)]
    assert max(w) - min(w) > 0.05


def test_weiss_out_of_domain(g):
    with pytest.raises(BallOutOfDomain):
        weiss_energy(planar_field(g), (0.8, 0), 0.5)
    with pytest.raises(BallOutOfDomain):
        weiss_energy(planar_field(g), (0, 0), -0.1)


def test_energy_runtime(g):
    v = planar_field(g)
    t0 = time.perf_counter()
    capillary_energy(v * math.tan(0.2), 0.2)
    bernoulli_energy(v)
    assert time.perf_counter() - t0 < 1.0


def test_energy_3d_planar():
    g3 = GridSpec.box(3, 1.0, 1 / 16)
    # |Dv|^2 = 1 on a set of volume 4, plus measure 4
    assert bernoulli_energy(planar_field(g3)).total == pytest.approx(8.0, abs=g3.h)
