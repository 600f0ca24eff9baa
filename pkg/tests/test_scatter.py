import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopscat.cooperative import cooperative_response
from coopscat.core import K0
from coopscat.errors import ContractViolation, SingularResponse, WrongRegime
from coopscat.lattice import KParallel
from coopscat.scatter import (
    EmitterParams,
    bare_polarizability,
    effective_polarizability,
    lossy_resonance_amplitude,
    normal_incidence_rt,
    order_amplitudes,
    pol_basis,
    scattered_field_orders,
    scattering_matrix,
)


def test_bare_polarizability_on_resonance():
    alpha = bare_polarizability(EmitterParams(), 0.0)
    assert alpha == pytest.approx(3j / (4 * np.pi**2))
    # single-dipole optical theorem: extinction = scattering for gamma_nr = 0
    k = K0
    ext = k * np.imag(alpha)
    sca = k**4 * abs(alpha) ** 2 / (6 * np.pi)
    assert ext == pytest.approx(sca, rel=1e-12)


def test_emitter_params_validation():
    with pytest.raises(ContractViolation):
        EmitterParams(gamma=0.0)
    with pytest.raises(ContractViolation):
        EmitterParams(gamma_nr=-0.1)
    with pytest.raises(ContractViolation):
        bare_polarizability(EmitterParams(), float("nan"))


def test_pol_basis_orthonormal():
    b = pol_basis(0.7, 1.9)
    for trip in ((b.e_k, b.e_p_plus, b.e_s_plus), (b.e_k_back, b.e_p_minus, b.e_s_minus)):
        m = np.array(trip)
        assert np.allclose(m @ m.T, np.eye(3), atol=1e-14)
    assert np.allclose(np.cross(b.e_p_plus, b.e_s_plus), -b.e_k)
    with pytest.raises(ContractViolation):
        pol_basis(math.pi / 2, 0.0)


@pytest.mark.parametrize("a", [0.15, 0.2, 0.35, 0.5, 0.9])
@pytest.mark.parametrize("delta", [-2.0, 0.0, 0.7])
def test_normal_incidence_lossless(a, delta):
    T, R, _, _ = normal_incidence_rt(a, delta)
    assert T + R == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 0.49), st.floats(0, 1.3), st.floats(0, 2 * np.pi), st.floats(-5, 5))
def test_oblique_energy_conservation(a, theta, phi, delta):
    kp = KParallel.from_angles(theta, phi)
    c = cooperative_response(a, kpar=kp)
    r = scattering_matrix(c, EmitterParams(), delta, theta, phi)
    assert np.allclose((r.R + r.T).sum(axis=0), 1.0, atol=1e-10)
    assert np.allclose(r.R, r.R.T, atol=1e-12)


def test_s_matrix_matches_radiated_plane_wave():
    a, theta, phi, delta = 0.3, 0.5, 0.4, 0.3
    kp = KParallel.from_angles(theta, phi)
    c = cooperative_response(a, kpar=kp)
    p = EmitterParams()
    res = scattering_matrix(c, p, delta)
    alpha = effective_polarizability(c, p, delta)
    b = pol_basis(theta, phi)
    for nu, e0 in enumerate((b.e_p_plus, b.e_s_plus)):
        for z, basis, S, kv in ((2.0, b.forward(), res.S_plus, b.e_k),
                                (-2.0, b.backward(), res.S_minus, b.e_k_back)):
            r = np.array([0.1, -0.2, z])
            field = scattered_field_orders(a, K0, kp, alpha, e0, r)
            expect = basis @ S[:, nu] * np.exp(1j * K0 * kv @ r)
            assert np.allclose(field, expect, atol=1e-12)


def test_resonance_is_perfect_mirror():
    c = cooperative_response(0.3)
    r = scattering_matrix(c, EmitterParams(), c.delta_tensor[0, 0], 0.0, 0.0)
    assert r.S_plus[0, 0] == pytest.approx(-1.0, abs=1e-12)
    assert r.R[0, 0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("gnr", [0.5, 1.0, 2.0])
def test_lossy_resonance(gnr):
    c = cooperative_response(0.3)
    r = scattering_matrix(c, EmitterParams(gamma_nr=gnr), c.delta_tensor[0, 0], 0.0, 0.0)
    ref = lossy_resonance_amplitude(c.gamma_tensor[0, 0], 1.0, gnr)
    assert abs(r.S_plus[0, 0] - ref) < 1e-10


def test_multi_order_regime_rejected():
    c = cooperative_response(0.707, kpar=KParallel.from_angles(math.pi / 4, 0.0))
    with pytest.raises(WrongRegime):
        scattering_matrix(c, EmitterParams(), 0.0)


def test_singular_bracket_outside_light_cone():
    # Gamma + gamma = 0 outside the light cone, so delta = Delta is a pole
    c = cooperative_response(0.2, kpar=KParallel(9.0, 0.0))
    with pytest.raises(SingularResponse):
        effective_polarizability(c, EmitterParams(), c.delta_tensor[2, 2])


@pytest.mark.parametrize("a,theta,pol", [(0.707, math.pi / 4, "p"), (1.3, 0.2, "s"),
                                         (0.8, 0.6, "p")])
def test_order_powers_sum_to_one(a, theta, pol):
    kp = KParallel.from_angles(theta, 0.0)
    c = cooperative_response(a, kpar=kp)
    alpha = effective_polarizability(c, EmitterParams(), 0.2)
    b = pol_basis(theta, 0.0)
    e0 = b.e_p_plus if pol == "p" else b.e_s_plus
    refl = order_amplitudes(a, K0, kp, alpha, e0, side=-1)
    trans = order_amplitudes(a, K0, kp, alpha, e0, side=+1)
    total = sum(o[3] for o in refl) + sum(o[3] for o in trans)
    assert total == pytest.approx(1.0, abs=1e-10)
    for _, d, amp, _ in refl:
        assert abs(np.dot(d, amp)) < 1e-12
