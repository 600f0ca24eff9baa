"""Linear response of an infinite array: polarizabilities and scattering matrices.

Polarizabilities are expressed in units of eps0 * lambda_a^3, so the field
radiated by a dipole ``p = alpha E`` enters the coupled equations as
``4 pi^2 lambda G . alpha E``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core import K0
from .cooperative import CooperativeResponse
from .errors import ContractViolation, SingularResponse, WrongRegime
from .lattice import KParallel, propagating_orders, _orders


@dataclass(frozen=True)
class EmitterParams:
    """Two-level emitter: radiative width, non-radiative width, resonance wavelength."""

    gamma: float = 1.0
    gamma_nr: float = 0.0
    lambda_a: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ContractViolation("radiative width must be positive")
        if self.gamma_nr < 0:
            raise ContractViolation("non-radiative width must be non-negative")


def bare_polarizability(params, delta):
    """alpha = -(3 / 4 pi^2) (gamma/2) / (delta + i (gamma + gamma_nr)/2), units eps0 lambda^3."""
    delta = float(delta)
    if not math.isfinite(delta):
        raise ContractViolation("detuning must be finite")
    g, gnr = params.gamma, params.gamma_nr
    return -(3.0 / (4.0 * np.pi**2)) * (g / 2.0) / (delta + 0.5j * (g + gnr))


def _inverse_block(m):
    # inverse of a (2x2) + (1x1) block-diagonal complex matrix
    blk = m[:2, :2]
    det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
    scale = max(np.abs(blk).max(), 1e-300)
    if abs(det) <= 1e-14 * scale * scale or m[2, 2] == 0.0:
        raise SingularResponse("effective-polarizability bracket is singular")
    inv = np.zeros((3, 3), complex)
    inv[0, 0] = blk[1, 1] / det
    inv[1, 1] = blk[0, 0] / det
    inv[0, 1] = -blk[0, 1] / det
    inv[1, 0] = -blk[1, 0] / det
    inv[2, 2] = 1.0 / m[2, 2]
    return inv


def effective_polarizability(coop, params, delta):
    """Momentum-space polarizability tensor of the array.

    alpha_e = -(3 / 4 pi^2)(gamma/2) [delta - Delta + i (gamma + gamma_nr + Gamma)/2]^-1

    The bracket is block diagonal (in-plane 2x2 and z), so it is inverted per
    block.

    Raises:
        SingularResponse: the bracket has a zero eigenvalue.
    """
    g, gnr = params.gamma, params.gamma_nr
    bracket = (
        delta * np.eye(3)
        - coop.delta_tensor
        + 0.5j * ((g + gnr) * np.eye(3) + coop.gamma_tensor)
    ).astype(complex)
    return -(3.0 / (4.0 * np.pi**2)) * (g / 2.0) * _inverse_block(bracket)


@dataclass(frozen=True)
class PolBasis:
    """Forward and backward (k, p, s) triplets for incidence angles (theta, phi)."""

    theta: float
    phi: float
    e_k: np.ndarray
    e_p_plus: np.ndarray
    e_s_plus: np.ndarray
    e_k_back: np.ndarray
    e_p_minus: np.ndarray
    e_s_minus: np.ndarray

    def forward(self):
        return np.column_stack([self.e_p_plus, self.e_s_plus])

    def backward(self):
        return np.column_stack([self.e_p_minus, self.e_s_minus])


def pol_basis(theta, phi):
    """Cartesian p/s basis vectors for the incident and reflected waves."""
    if not (0.0 <= theta < np.pi / 2):
        raise ContractViolation("polar angle must satisfy 0 <= theta < pi/2")
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    e_k = np.array([st * cp, st * sp, ct])
    e_p = np.array([ct * cp, ct * sp, -st])
    e_s = np.array([sp, -cp, 0.0])
    e_kb = np.array([st * cp, st * sp, -ct])
    e_pm = np.array([-ct * cp, -ct * sp, -st])
    return PolBasis(theta, phi, e_k, e_p, e_s, e_kb, e_pm, e_s.copy())


@dataclass
class ScatterResult:
    """Scattering matrices in the (p, s) basis and intensity coefficients."""

    kpar: KParallel
    delta: float
    S_plus: np.ndarray
    S_minus: np.ndarray
    R: np.ndarray
    T: np.ndarray
    regime: str


def _angles_of(coop, theta, phi):
    kp = coop.kpar
    if theta is None:
        theta = kp.theta
    if phi is None:
        phi = kp.phi if kp.norm > 0 else 0.0
    kx = kp.k * math.sin(theta) * math.cos(phi)
    ky = kp.k * math.sin(theta) * math.sin(phi)
    if math.hypot(kx - kp.kx, ky - kp.ky) > 1e-9 * kp.k:
        raise ContractViolation("(theta, phi) inconsistent with the response's k_parallel")
    return theta, phi


def scattering_matrix(coop, params, delta, theta=None, phi=None):
    """Forward/backward scattering matrices of a single-order array.

    S^{+/-}_{mu nu} = i pi (lambda/a)^2 (k/k_z) e^{+/-}_mu . alpha_e . e^{+}_nu
    with T = |1 + S^+|^2 and R = |S^-|^2 elementwise.

    Raises:
        WrongRegime: more than one diffraction order propagates (use
            ``scattered_field_orders``).
    """
    kp = coop.kpar
    theta, phi = _angles_of(coop, theta, phi)
    orders = propagating_orders(coop.a, kp.k, kp)
    if len(orders) != 1:
        raise WrongRegime("multiple diffraction orders propagate; use scattered_field_orders")
    alpha = effective_polarizability(coop, params, delta)
    basis = pol_basis(theta, phi)
    lam = 2.0 * np.pi / kp.k
    pref = 1j * np.pi * (lam / coop.a) ** 2 * (kp.k / kp.kz)
    fwd = basis.forward()
    s_plus = pref * fwd.T @ alpha @ fwd
    s_minus = pref * basis.backward().T @ alpha @ fwd
    T = np.abs(np.eye(2) + s_plus) ** 2
    R = np.abs(s_minus) ** 2
    return ScatterResult(kp, float(delta), s_plus, s_minus, R, T, "single-order")


def lossy_resonance_amplitude(gamma_coop, gamma=1.0, gamma_nr=0.0):
    """Resonant normal-incidence amplitude S = -(Gamma + gamma)/(Gamma + gamma + gamma_nr)."""
    tot = gamma_coop + gamma
    if not tot > 0:
        raise ContractViolation("Gamma + gamma must be positive")
    return -tot / (tot + gamma_nr)


def normal_incidence_rt(a, delta, gamma_nr=0.0, coop=None, **kw):
    """(T, R, Delta, Gamma) for the in-plane response at normal incidence."""
    from .cooperative import cooperative_response

    if coop is None:
        coop = cooperative_response(a, **kw)
    res = scattering_matrix(coop, EmitterParams(gamma_nr=gamma_nr), delta, 0.0, 0.0)
    return res.T[0, 0], res.R[0, 0], coop.delta_tensor[0, 0], coop.gamma_tensor[0, 0]


def scattered_field_orders(a, k, kpar, alpha_e, e0, r, include_evanescent=False):
    """Field radiated by the array as a sum of diffraction-order plane waves.

    Each order m contributes
    4 pi^2 lambda (i / 2 A) (1/kappa_m)[delta_ij - K_i K_j / k^2] p_j exp(i K . r)
    with K = (k_par + q_m, +/- kappa_m) following the sign of z, which produces
    the sign flip of the z-mixing entries below the array.

    Args:
        a: lattice constant.
        k: wavenumber.
        kpar: incident KParallel.
        alpha_e: effective polarizability tensor (units eps0 lambda^3).
        e0: incident polarization vector (amplitude at the array).
        r: observation point (3,) or points (..., 3); z != 0.
        include_evanescent: also sum the evanescent orders found in the
            enumeration window.

    Returns:
        complex array (..., 3).
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(alpha_e) @ np.asarray(e0, dtype=complex)
    lam = 2.0 * np.pi / k
    if include_evanescent:
        mmax = int(math.ceil(2.0 * a / lam)) + 3
        orders = _orders(a, k, kpar, mmax)
    else:
        orders = propagating_orders(a, k, kpar)
    z = r[..., 2]
    sign = np.where(z >= 0, 1.0, -1.0)
    out = np.zeros(r.shape[:-1] + (3,), complex)
    pref = 4.0 * np.pi**2 * lam * 0.5j / (a * a)
    for o in orders:
        bx, by, kap = kpar.kx + o.qx, kpar.ky + o.qy, complex(o.kappa)
        kvec = np.stack(np.broadcast_arrays(bx, by, sign * kap), axis=-1)
        proj = p - kvec * (kvec @ p)[..., None] / k**2
        phase = np.exp(1j * (bx * r[..., 0] + by * r[..., 1] + kap * np.abs(z)))
        out += (pref / kap) * proj * phase[..., None]
    return out


def order_amplitudes(a, k, kpar, alpha_e, e0, side=-1):
    """Plane-wave amplitude vectors and power fractions of the propagating orders.

    Returns a list of (order index, unit direction, amplitude vector, power)
    for the reflected (``side=-1``) or transmitted (``side=+1``) half space.
    Powers are fluxes through the array plane normalized to the incident flux
    of a unit-amplitude plane wave at the same angle; the transmitted specular
    order includes the incident wave.
    """
    lam = 2.0 * np.pi / k
    p = np.asarray(alpha_e) @ np.asarray(e0, dtype=complex)
    kz_in = kpar.kz
    out = []
    for o in propagating_orders(a, k, kpar):
        kap = float(np.real(o.kappa))
        kvec = np.array([kpar.kx + o.qx, kpar.ky + o.qy, side * kap])
        amp = (4.0 * np.pi**2 * lam * 0.5j / (a * a * kap)) * (p - kvec * (kvec @ p) / k**2)
        if side > 0 and o.index == (0, 0):
            amp = amp + np.asarray(e0, dtype=complex)
        power = float(np.vdot(amp, amp).real) * kap / kz_in
        out.append((o.index, kvec / k, amp, power))
    return out
