import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopscat.core import K0
from coopscat.errors import ContractViolation, ThresholdDegeneracy
from coopscat.lattice import (
    KParallel,
    SquareLattice,
    bz_path,
    is_single_order,
    propagating_orders,
)


def test_lattice_basics():
    lat = SquareLattice(0.3)
    assert lat.cell_area == pytest.approx(0.09)
    assert lat.reciprocal == pytest.approx(2 * np.pi / 0.3)
    assert np.allclose(lat.site(2, -1), [0.6, -0.3, 0.0])
    with pytest.raises(ContractViolation):
        SquareLattice(0.0)


def test_kparallel_angles_roundtrip():
    kp = KParallel.from_angles(0.4, 1.1)
    assert kp.theta == pytest.approx(0.4)
    assert kp.phi == pytest.approx(1.1)
    assert kp.kz == pytest.approx(K0 * math.cos(0.4))
    assert (-kp).kx == -kp.kx
    with pytest.raises(ContractViolation):
        KParallel(7.0, 0.0).kz


def test_bz_path_corners_and_length():
    a = 0.2
    path = bz_path(a, 5)
    assert len(path) == 3 * 4 + 1
    b = np.pi / a
    assert (path[0].kx, path[0].ky) == (0.0, 0.0)
    assert (path[4].kx, path[4].ky) == pytest.approx((b, 0.0))
    assert (path[8].kx, path[8].ky) == pytest.approx((b, b))
    assert (path[-1].kx, path[-1].ky) == pytest.approx((0.0, 0.0))
    # no duplicated corners
    pts = [(p.kx, p.ky) for p in path[:-1]]
    assert len(set(pts)) == len(pts)


def test_single_order_normal_incidence():
    assert is_single_order(0.9, K0, KParallel(0.0, 0.0))
    orders = propagating_orders(1.2, K0, KParallel(0.0, 0.0))
    assert orders[0].index == (0, 0)
    assert sorted(o.index for o in orders[1:]) == [(-1, 0), (0, -1), (0, 1), (1, 0)]


def test_retro_order_at_45_degrees():
    # a = lambda / (2 sin 45) puts the (-1, 0) order exactly antiparallel
    a = 1.0 / math.sqrt(2.0) + 1e-3
    kp = KParallel.from_angles(math.pi / 4, 0.0)
    idx = [o.index for o in propagating_orders(a, K0, kp)]
    assert idx == [(0, 0), (-1, 0)]


def test_threshold_detected():
    with pytest.raises(ThresholdDegeneracy) as exc:
        propagating_orders(1.0, K0, KParallel(0.0, 0.0))
    assert exc.value.order is not None


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.499), st.floats(0, 0.999), st.floats(0, 2 * np.pi))
def test_half_wavelength_arrays_are_single_order(a, s, phi):
    kp = KParallel(K0 * s * math.cos(phi), K0 * s * math.sin(phi))
    assert is_single_order(a, K0, kp)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 2.5), st.floats(0, 0.95), st.floats(0, 2 * np.pi))
def test_propagating_orders_complete(a, s, phi):
    # brute force over a generous window
    kp = KParallel(K0 * s * math.cos(phi), K0 * s * math.sin(phi))
    g = 2 * np.pi / a
    try:
        got = {o.index for o in propagating_orders(a, K0, kp)}
    except ThresholdDegeneracy:
        return
    ref = {(mx, my) for mx in range(-12, 13) for my in range(-12, 13)
           if math.hypot(kp.kx + g * mx, kp.ky + g * my) < K0}
    assert got == ref
