"""Engines for the lattice sum lambda * sum_{n != 0} G(r_n) exp(-i k_par . r_n).

Two independent routes are provided.

``damped_sum``
    Direct real-space summation with an exponential damping factor
    ``exp(-eta r / lambda)`` over a disk where the damping has fallen below
    1e-12, repeated for eta in (0.4, 0.2, 0.1, 0.05) and extrapolated to
    eta -> 0.  The damping is applied through a complex wavenumber
    ``k + i eta`` in the exponent, which keeps the damped sum a smooth
    function of eta.  Before the polynomial extrapolation the analytically
    known eta-dependence of the slowly decaying (near-cutoff) reciprocal
    orders is removed; that correction vanishes identically at eta = 0, so
    the extrapolated value is still determined by the real-space data.

``ewald_sum``
    Two-dimensional Ewald splitting of the same sum into a rapidly
    convergent spectral part and a rapidly convergent spatial part.  It is
    independent of the splitting parameter to round-off and costs
    milliseconds, so it is the default engine for sweeps.

Both return the dimensionless tensor ``lambda * g``.
"""

import math

import numpy as np
from scipy.special import erfc

from .errors import ConvergenceFailure, ContractViolation, ThresholdDegeneracy

SQRT_PI = math.sqrt(math.pi)

#: damping sequence used by the real-space route
ETAS = (0.4, 0.2, 0.1, 0.05)
#: exp(-eta R) = 1e-12 at R = CUTOFF / eta
CUTOFF = -math.log(1e-12)


def _check(a, k):
    if not a > 0:
        raise ContractViolation("lattice constant must be positive")
    if not k > 0:
        raise ContractViolation("wavenumber must be positive")


def _order_grid(a, kx, ky, bmax):
    g = 2.0 * np.pi / a
    m = int(math.ceil((bmax + math.hypot(kx, ky)) / g)) + 1
    idx = np.arange(-m, m + 1)
    mx, my = np.meshgrid(idx, idx, indexing="ij")
    bx = (g * mx - kx).ravel()
    by = (g * my - ky).ravel()
    keep = bx * bx + by * by <= bmax * bmax
    return bx[keep], by[keep]


def _tensor_from_order_terms(h0, h2, bx, by, k):
    # spectral tensor: sum h0 (delta - beta beta / k^2) in plane, h0 + h2/k^2 for zz
    g = np.zeros((3, 3), complex)
    g[0, 0] = np.sum(h0 * (1.0 - bx * bx / k**2))
    g[1, 1] = np.sum(h0 * (1.0 - by * by / k**2))
    g[0, 1] = g[1, 0] = np.sum(h0 * (-bx * by / k**2))
    g[2, 2] = np.sum(h0 + h2 / k**2)
    return g


# ---------------------------------------------------------------------------
# Ewald route
# ---------------------------------------------------------------------------

def ewald_sum(a, k, kx, ky, split=None, accuracy=7.5):
    """Ewald evaluation of lambda * g(k_par).

    Args:
        a: lattice constant.
        k: wavenumber.
        kx, ky: in-plane Bloch wavevector (any value, inside or outside the
            light cone).
        split: Ewald splitting parameter E (inverse length); the default
            balances both parts and keeps k/(2E) moderate.
        accuracy: both partial sums are truncated where their Gaussian
            factors fall below exp(-accuracy**2).

    Returns:
        complex 3x3 array.

    Raises:
        ThresholdDegeneracy: a reciprocal order sits on its threshold.
    """
    _check(a, k)
    E = split if split is not None else max(SQRT_PI / a, k / 6.0)
    area = a * a

    # spectral part
    bx, by = _order_grid(a, kx, ky, 2.0 * accuracy * E + k)
    b2 = bx * bx + by * by
    d2 = b2 - k * k
    if np.any(np.abs(np.sqrt(b2) - k) < 1e-9 * k):
        raise ThresholdDegeneracy("reciprocal order on its diffraction threshold")
    gam = np.where(d2 >= 0, np.sqrt(np.abs(d2)) + 0j, -1j * np.sqrt(np.abs(d2)))
    w = gam / (2.0 * E)
    ec = erfc(w)
    h0 = ec / (2.0 * gam)
    h2 = 0.5 * gam * ec - (E / SQRT_PI) * np.exp(-w * w)
    g = _tensor_from_order_terms(h0, h2, bx, by, k) / area

    # spatial part
    rmax = accuracy / E
    n = int(math.ceil(rmax / a)) + 1
    idx = np.arange(-n, n + 1)
    nx, ny = np.meshgrid(idx, idx, indexing="ij")
    x = a * nx.ravel()
    y = a * ny.ravel()
    r = np.hypot(x, y)
    keep = (r > 0) & (r <= rmax + a)
    x, y, r = x[keep], y[keep], r[keep]
    phase = np.exp(-1j * (kx * x + ky * y))
    ep = np.exp(1j * k * r) * erfc(r * E + 1j * k / (2 * E))
    em = np.exp(-1j * k * r) * erfc(r * E - 1j * k / (2 * E))
    q = np.exp(-r * r * E * E + k * k / (4 * E * E))
    u = ep + em
    du = 1j * k * (ep - em) - (4.0 * E / SQRT_PI) * q
    ddu = -k * k * u + (8.0 * r * E**3 / SQRT_PI) * q
    c = 1.0 / (8.0 * np.pi)
    f = c * u / r
    df = c * (du / r - u / r**2)
    ddf = c * (ddu / r - 2.0 * du / r**2 + 2.0 * u / r**3)
    xh, yh = x / r, y / r
    k2 = k * k
    g[0, 0] += np.sum(phase * (f + (ddf * xh * xh + df / r * (1 - xh * xh)) / k2))
    g[1, 1] += np.sum(phase * (f + (ddf * yh * yh + df / r * (1 - yh * yh)) / k2))
    gxy = np.sum(phase * (ddf - df / r) * xh * yh) / k2
    g[0, 1] += gxy
    g[1, 0] += gxy
    g[2, 2] += np.sum(phase * (f + df / r / k2))

    # remove the n = 0 term contained in the spectral part
    zc = erfc(-1j * k / (2 * E))
    ee = math.exp(k * k / (4 * E * E))
    i2 = E * ee + 0.5j * k * SQRT_PI * zc
    i4 = (E**3 + 0.5 * k * k * E) / 3.0 * ee + (1j * SQRT_PI * k**3 / 12.0) * zc
    self_term = (i2 - 2.0 * i4 / k2) / (2.0 * np.pi**1.5)
    g -= self_term * np.eye(3)

    return (2.0 * np.pi / k) * g


# ---------------------------------------------------------------------------
# damped real-space route
# ---------------------------------------------------------------------------

def _damped_raw(a, k, kx, ky, eta, chunk=512):
    # quadrant-folded sum of G_eta(r_n) exp(-i k_par . r_n) over r_n <= CUTOFF/eta
    lam = 2.0 * np.pi / k
    kap = k + 1j * eta / lam
    rmax = CUTOFF * lam / eta
    nmax = int(rmax / a) + 1
    n = np.arange(nmax + 1)
    wgt = np.where(n == 0, 1.0, 2.0)
    cx = wgt * np.cos(kx * a * n)
    cy = wgt * np.cos(ky * a * n)
    sx = 2.0 * np.sin(kx * a * n)
    sy = 2.0 * np.sin(ky * a * n)
    y = a * n
    acc = np.zeros(4, complex)  # xx, yy, zz, xy
    for start in range(0, nmax + 1, chunk):
        rows = n[start:start + chunk]
        x = a * rows[:, None]
        r = np.hypot(x, y[None, :])
        mask = r <= rmax
        if start == 0:
            mask[0, 0] = False
        r = np.where(mask, r, 1.0)
        e = np.where(mask, np.exp(1j * kap * r) / (4.0 * np.pi * r), 0.0)
        kr2 = (k * r) ** 2
        ca = e * (1.0 + (1j * kap * r - 1.0) / kr2)
        cb = e * (3.0 - 3.0j * kap * r - (kap * r) ** 2) / kr2 / (r * r)
        fxx = ca + cb * x * x
        fyy = ca + cb * y[None, :] ** 2
        fxy = cb * x * y[None, :]
        cxr = cx[start:start + chunk]
        sxr = sx[start:start + chunk]
        acc[0] += cxr @ fxx @ cy
        acc[1] += cxr @ fyy @ cy
        acc[2] += cxr @ ca @ cy
        acc[3] -= sxr @ fxy @ sy
    g = np.zeros((3, 3), complex)
    g[0, 0], g[1, 1], g[2, 2] = acc[0], acc[1], acc[2]
    g[0, 1] = g[1, 0] = acc[3]
    return g


def _damping_bias(a, k, kx, ky, eta, reach=3.0):
    # eta-dependence of the reciprocal orders with |beta| < reach*k; zero at eta=0
    lam = 2.0 * np.pi / k
    bx, by = _order_grid(a, kx, ky, reach * k)
    b2 = bx * bx + by * by
    out = np.zeros((3, 3), complex)
    for kap, sign in ((k + 1j * eta / lam, 1.0), (k + 0j, -1.0)):
        kz = np.sqrt(kap * kap - b2 + 0j)
        kz = np.where(kz.imag < 0, -kz, kz)
        f = 0.5j / (a * a * kz)
        h2 = -0.5j * kz / (a * a)
        out += sign * _tensor_from_order_terms(f, h2, bx, by, k)
    return lam * out


def damped_sum(a, k, kx, ky, tol=1e-3, etas=ETAS, return_report=False):
    """Damped real-space evaluation of lambda * g(k_par) with extrapolation.

    Args:
        a: lattice constant.
        k: wavenumber.
        kx, ky: in-plane Bloch wavevector.
        tol: acceptable extrapolation error on lambda * g.
        etas: damping strengths (in units of 1/lambda), descending.
        return_report: also return a dict with the error estimate.

    Raises:
        ConvergenceFailure: the cubic and quadratic extrapolants differ by
            more than ``tol``.
    """
    _check(a, k)
    etas = np.asarray(etas, dtype=float)
    if etas.size < 3:
        raise ContractViolation("need at least three damping strengths")
    samples = np.array([
        _damped_raw(a, k, kx, ky, e) - _damping_bias(a, k, kx, ky, e) for e in etas
    ])
    lam = 2.0 * np.pi / k
    samples = lam * samples
    flat = samples.reshape(len(etas), 9)
    full = np.linalg.solve(np.vander(etas, len(etas)), flat)[-1]
    low = np.linalg.solve(np.vander(etas[1:], len(etas) - 1), flat[1:])[-1]
    value = full.reshape(3, 3)
    err = float(np.abs(full - low).max())
    report = {
        "method": "damped",
        "etas": [float(e) for e in etas],
        "cutoff_radius": [float(CUTOFF * lam / e) for e in etas],
        "error_estimate": err,
    }
    if err > tol:
        raise ConvergenceFailure(
            "damped lattice sum extrapolation error %.3g exceeds tol %.3g" % (err, tol),
            diagnostics={"samples": samples, **report},
        )
    if return_report:
        return value, report
    return value
