"""Unit conventions, small tensor helpers and principal-value quadrature.

Everything in the package is dimensionless: lengths are measured in the
resonance wavelength ``lambda_a`` and rates/energies in the single-emitter
radiative width ``gamma``.  The incident wavelength used inside lattice sums is
taken equal to ``lambda_a`` (Markov convention).
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ContractViolation

#: resonance wavelength, internal unit of length
LAMBDA = 1.0
#: single-emitter radiative width, internal unit of rate
GAMMA = 1.0
#: free-space wavenumber 2*pi/lambda
K0 = 2.0 * np.pi

UNITS_STATEMENT = (
    "lengths in units of lambda_a; rates and energies in units of gamma; "
    "fields in units of incident peak amplitude E0"
)


def as_cvec3(v):
    """Return ``v`` as a complex length-3 array."""
    out = np.asarray(v, dtype=complex)
    if out.size != 3:
        raise ContractViolation("expected a 3-vector, got shape %s" % (out.shape,))
    out = out.reshape(3)
    if not np.all(np.isfinite(out)):
        raise ContractViolation("vector has non-finite components")
    return out


def as_ctensor3(m):
    """Return ``m`` as a complex 3x3 array."""
    out = np.asarray(m, dtype=complex)
    if out.size != 9:
        raise ContractViolation("expected a 3x3 tensor, got shape %s" % (out.shape,))
    out = out.reshape(3, 3)
    if not np.all(np.isfinite(out)):
        raise ContractViolation("tensor has non-finite entries")
    return out


# ---------------------------------------------------------------------------
# 3x3 symmetric eigenproblem
# ---------------------------------------------------------------------------

def _cardano_eigenvalues(m):
    """Eigenvalues of a real symmetric 3x3 matrix, ascending (trigonometric form)."""
    q = np.trace(m) / 3.0
    b = m - q * np.eye(3)
    p2 = np.sum(b * b) / 6.0
    if p2 <= 0.0:
        return np.array([q, q, q])
    p = np.sqrt(p2)
    r = np.linalg.det(b / p) / 2.0
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    l1 = q + 2.0 * p * np.cos(phi)
    l3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    l2 = 3.0 * q - l1 - l3
    return np.sort([l1, l2, l3])


def _null_vector(b):
    """Unit vector spanning the null space of a rank-2 symmetric matrix."""
    rows = [b[0], b[1], b[2]]
    cands = [np.cross(rows[0], rows[1]), np.cross(rows[0], rows[2]), np.cross(rows[1], rows[2])]
    norms = [np.linalg.norm(c) for c in cands]
    i = int(np.argmax(norms))
    return cands[i] / norms[i]


def _any_perpendicular(v):
    """Unit vector orthogonal to the unit vector ``v``."""
    e = np.zeros(3)
    e[int(np.argmin(np.abs(v)))] = 1.0
    w = np.cross(v, e)
    return w / np.linalg.norm(w)


def _jacobi_polish(m, v, sweeps=4):
    # rotate V so that V^T m V becomes diagonal to machine precision
    v = v.copy()
    for _ in range(sweeps):
        d = v.T @ m @ v
        off = abs(d[0, 1]) + abs(d[0, 2]) + abs(d[1, 2])
        if off <= 1e-15 * max(1.0, np.abs(d).max()):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            d = v.T @ m @ v
            if d[p, q] == 0.0:
                continue
            theta = 0.5 * np.arctan2(2.0 * d[p, q], d[q, q] - d[p, p])
            c, s = np.cos(theta), np.sin(theta)
            rot = np.eye(3)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            v = v @ rot
    return v


def sym_eigen3(m, degeneracy_gap=1e-8):
    """Eigen-decomposition of a real symmetric 3x3 matrix.

    Eigenvalues come from the trigonometric Cardano solution of the
    characteristic polynomial, eigenvectors from cross products of rows of
    ``m - lambda*I``.  Near-degenerate pairs (relative gap below
    ``degeneracy_gap``) get an orthogonal completion.  A few Jacobi rotations
    polish the result to machine precision.

    Args:
        m: real symmetric 3x3 array.
        degeneracy_gap: relative eigenvalue gap treated as degenerate.

    Returns:
        (w, v): ascending eigenvalues and a 3x3 matrix whose columns are the
        orthonormal eigenvectors.

    Raises:
        ContractViolation: if ``m`` is not (real) symmetric within 1e-10.
    """
    m = np.asarray(m)
    if m.shape != (3, 3):
        raise ContractViolation("sym_eigen3 expects a 3x3 matrix")
    if np.iscomplexobj(m):
        if np.abs(m.imag).max() > 1e-10 * max(1.0, np.abs(m).max()):
            raise ContractViolation("sym_eigen3 expects a real matrix")
        m = m.real
    m = m.astype(float)
    scale = max(np.abs(m).max(), 1e-300)
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise ContractViolation("matrix is not symmetric")
    # work on the unit-scaled matrix so cross products cannot under/overflow
    m = 0.5 * (m + m.T) / scale

    w = _cardano_eigenvalues(m)
    tol = degeneracy_gap
    eye = np.eye(3)
    gaps = np.diff(w)
    if gaps[0] < tol and gaps[1] < tol:
        v = eye.copy()
    elif gaps[0] < tol:
        v2 = _null_vector(m - w[2] * eye)
        v0 = _any_perpendicular(v2)
        v = np.column_stack([v0, np.cross(v2, v0), v2])
    elif gaps[1] < tol:
        v0 = _null_vector(m - w[0] * eye)
        v1 = _any_perpendicular(v0)
        v = np.column_stack([v0, v1, np.cross(v0, v1)])
    else:
        v0 = _null_vector(m - w[0] * eye)
        v2 = _null_vector(m - w[2] * eye)
        v2 = v2 - (v2 @ v0) * v0
        v2 /= np.linalg.norm(v2)
        v = np.column_stack([v0, np.cross(v2, v0), v2])

    v = _jacobi_polish(m, v)
    d = np.diag(v.T @ m @ v)
    order = np.argsort(d, kind="stable")
    return d[order] * scale, v[:, order]


# ---------------------------------------------------------------------------
# principal value quadrature
# ---------------------------------------------------------------------------

def pv_integral(u, f, pole):
    """Principal value of the integral of f(u)/(pole - u) over a sampled grid.

    Uses pole subtraction: the regular part ``[f(u) - f(x)]/(x - u)`` is
    integrated with the trapezoid rule and the singular part contributes
    ``f(x) * log|(x - u_min)/(x - u_max)|``.  ``f(x)`` and ``f'(x)`` come from a
    cubic spline through the samples, so the scheme is second order in the
    grid spacing.

    Args:
        u: strictly increasing sample points (at least 4).
        f: sampled values f(u).
        pole: location x of the pole, strictly inside (u[0], u[-1]).

    Returns:
        float: the principal value.
    """
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    if u.ndim != 1 or u.size < 4:
        raise ContractViolation("pv_integral needs a 1-d grid with at least 4 points")
    if f.shape != u.shape:
        raise ContractViolation("f and u must have the same shape")
    if np.any(np.diff(u) <= 0):
        raise ContractViolation("grid must be strictly increasing")
    x = float(pole)
    if not (u[0] < x < u[-1]):
        raise ContractViolation("pole must lie strictly inside the grid")

    spline = CubicSpline(u, f)
    fx = float(spline(x))
    dfx = float(spline(x, 1))
    diff = x - u
    close = np.abs(diff) < 1e-12 * max(1.0, abs(x))
    safe = np.where(close, 1.0, diff)
    g = np.where(close, -dfx, (f - fx) / safe)
    regular = np.trapezoid(g, u)
    singular = fx * np.log(abs((x - u[0]) / (x - u[-1])))
    return float(regular + singular)
