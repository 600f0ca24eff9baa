import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from coopscat.core import K0, as_ctensor3, as_cvec3, pv_integral, sym_eigen3
from coopscat.errors import ContractViolation


def test_wavenumber_is_two_pi():
    assert K0 == pytest.approx(2 * np.pi)


def test_vec_and_tensor_shapes():
    assert as_cvec3([1, 2, 3]).dtype == complex
    with pytest.raises(ContractViolation):
        as_cvec3([1, 2])
    with pytest.raises(ContractViolation):
        as_ctensor3(np.eye(2))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6))
def test_sym_eigen3_matches_eigh(entries):
    a, b, c, d, e, f = entries
    m = np.array([[a, d, e], [d, b, f], [e, f, c]])
    w, v = sym_eigen3(m)
    ref = np.linalg.eigh(m)[0]
    scale = max(1.0, np.abs(m).max())
    assert np.allclose(w, ref, atol=1e-12 * scale)
    assert np.allclose(v.T @ v, np.eye(3), atol=1e-12)
    assert np.abs(m @ v - v * w).max() < 1e-11 * scale


@pytest.mark.parametrize(
    "m",
    [np.eye(3), np.diag([2.0, 2.0, -1.0]), np.diag([-1.0, 3.0, 3.0]), np.zeros((3, 3)),
     np.array([[1.0, 1e-13, 0.0], [1e-13, 1.0, 0.0], [0.0, 0.0, 5.0]])],
)
def test_sym_eigen3_degenerate(m):
    w, v = sym_eigen3(m)
    assert np.allclose(v.T @ v, np.eye(3), atol=1e-12)
    assert np.abs(m @ v - v * w).max() < 1e-12


def test_sym_eigen3_rejects_asymmetric():
    with pytest.raises(ContractViolation):
        sym_eigen3(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))


def test_pv_examples():
    u = np.linspace(-1, 1, 401)
    assert pv_integral(u, np.ones_like(u), 0.0) == pytest.approx(0.0, abs=1e-12)
    assert pv_integral(u, u, 0.0) == pytest.approx(-2.0, abs=1e-10)


@pytest.mark.parametrize("pole", [0.3, 1.1, 2.7])
def test_pv_against_cauchy_quadrature(pole):
    # quad with weight='cauchy' returns PV int f/(u - x); ours uses 1/(x - u)
    f = lambda u: np.exp(-u) * np.cos(u)
    ref = -quad(f, 0.0, 3.0, weight="cauchy", wvar=pole)[0]
    u = np.linspace(0.0, 3.0, 1201)
    assert pv_integral(u, f(u), pole) == pytest.approx(ref, abs=1e-6)


def test_pv_second_order_convergence():
    f = lambda u: np.sin(2 * u) + u**2
    pole = 0.77
    ref = -quad(f, 0.0, 2.0, weight="cauchy", wvar=pole)[0]
    errs = []
    for n in (101, 201, 401):
        u = np.linspace(0.0, 2.0, n)
        errs.append(abs(pv_integral(u, f(u), pole) - ref))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_pv_errors():
    u = np.linspace(0, 1, 10)
    with pytest.raises(ContractViolation):
        pv_integral(u, u, 1.5)
    with pytest.raises(ContractViolation):
        pv_integral(u[:3], u[:3], 0.5)
    with pytest.raises(ContractViolation):
        pv_integral(u[::-1], u, 0.5)
