"""Free-space dyadic Green's function.

``G`` carries units of inverse length; lattice sums use the dimensionless
combination ``lambda * G``.  Coincident points are never regularized: the
on-site physics lives in the single-emitter width and the Lamb shift is
absorbed into the resonance frequency.
"""

import numpy as np

from .errors import ContractViolation

#: separations below this (in lambda) are rejected
MIN_SEPARATION = 1e-6


def dyadic_green(k, r):
    """Dyadic Green's function G_ij(r) at wavenumber ``k``.

    G = e^{ikr}/(4 pi r) [ (1 + (ikr - 1)/(kr)^2) delta_ij
                           + (-1 + (3 - 3ikr)/(kr)^2) r_i r_j / r^2 ]

    Args:
        k: wavenumber (> 0).
        r: separation vector(s), shape (3,) or (..., 3).

    Returns:
        complex array of shape (3, 3) or (..., 3, 3).

    Raises:
        ContractViolation: k <= 0 or any |r| below ``MIN_SEPARATION``.
    """
    if not k > 0:
        raise ContractViolation("wavenumber must be positive")
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != 3:
        raise ContractViolation("separation must have a trailing dimension of 3")
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist < MIN_SEPARATION):
        raise ContractViolation(
            "coincident points: |r| < %g lambda (use self_green_imag)" % MIN_SEPARATION
        )
    kr = k * dist
    pref = np.exp(1j * kr) / (4.0 * np.pi * dist)
    ca = pref * (1.0 + (1j * kr - 1.0) / kr**2)
    cb = pref * (-1.0 + (3.0 - 3.0j * kr) / kr**2)
    rhat = r / dist[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    return ca[..., None, None] * np.eye(3) + cb[..., None, None] * outer


def self_green_imag(k):
    """Imaginary on-site value of G: (i / (3 lambda)) delta_ij with lambda = 2 pi / k."""
    if not k > 0:
        raise ContractViolation("wavenumber must be positive")
    lam = 2.0 * np.pi / k
    return (1j / (3.0 * lam)) * np.eye(3, dtype=complex)


def scalar_green(k, dist):
    """Scalar Helmholtz Green's function e^{ikr}/(4 pi r)."""
    dist = np.asarray(dist, dtype=float)
    return np.exp(1j * k * dist) / (4.0 * np.pi * dist)
